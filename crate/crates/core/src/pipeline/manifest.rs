use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backends::BackendCallRecord;
use crate::condition::FlatnessReport;
use crate::error::{Error, Result};
use crate::mesh::ThinnessReport;
use crate::model::{ConditionKind, ContentHash, SelectionMethod};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Stage names in execution order.
pub const STAGES: [&str; 8] = [
    "mask",
    "flatness",
    "conditions",
    "caption",
    "candidates",
    "select",
    "shape",
    "bake",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Cache key: stage name, input hashes and the relevant settings.
    pub key: ContentHash,
    pub input_hashes: BTreeMap<String, ContentHash>,
    /// Artifact path (relative to the run directory) to content hash.
    pub output_hashes: BTreeMap<String, ContentHash>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCall {
    pub stage: String,
    #[serde(flatten)]
    pub record: BackendCallRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub artifact: String,
    pub condition_kind: ConditionKind,
    pub condition_index: usize,
    pub backend_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub chosen_index: usize,
    pub candidate_count: usize,
    pub method: SelectionMethod,
    pub rationale: String,
    /// Silhouette agreement between the proxy and the input.
    pub proxy_mask_iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub flatness: Option<FlatnessReport>,
    /// Shape generated straight from the input, the comparison baseline.
    pub baseline_thinness: Option<ThinnessReport>,
    pub final_thinness: Option<ThinnessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub run_id: ContentHash,
    pub input_hash: ContentHash,
    pub config_fingerprint: ContentHash,
    pub complete: bool,
    pub stages: Vec<StageRecord>,
    pub backend_calls: Vec<StageCall>,
    pub caption: Option<String>,
    pub candidates: Vec<CandidateRecord>,
    pub selection: Option<SelectionRecord>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(run_id: ContentHash, input_hash: ContentHash, config_fingerprint: ContentHash) -> Self {
        Self {
            schema: MANIFEST_SCHEMA,
            run_id,
            input_hash,
            config_fingerprint,
            complete: false,
            stages: vec![],
            backend_calls: vec![],
            caption: None,
            candidates: vec![],
            selection: None,
            diagnostics: Diagnostics::default(),
            warnings: vec![],
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: RunManifest = serde_json::from_slice(bytes).map_err(|e| Error::ManifestCorrupt(e.to_string()))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::ManifestCorrupt(format!("unsupported schema {}", m.schema)));
        }
        for (i, s) in m.stages.iter().enumerate() {
            if STAGES.get(i) != Some(&s.name.as_str()) {
                return Err(Error::ManifestCorrupt(format!("stage {i} is {:?}, expected {:?}", s.name, STAGES.get(i))));
            }
        }
        Ok(m)
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::ManifestCorrupt(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    /// The manifest with everything that legitimately differs between an
    /// uninterrupted run and a resumed one cleared: timestamps, latencies
    /// and cache flags.
    pub fn comparable(&self) -> RunManifest {
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        let mut m = self.clone();
        for s in &mut m.stages {
            s.started = epoch;
            s.finished = epoch;
            s.cache_hit = false;
        }
        for c in &mut m.backend_calls {
            c.record.latency_ms = 0;
        }
        m
    }
}
