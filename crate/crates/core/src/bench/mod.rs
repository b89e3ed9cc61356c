//! Batch runs over an image dataset, contrasting shapes built from the raw
//! input with shapes built from the selected proxy.

mod sprites;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use sprites::{generate_dataset, sprite, STYLES};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{decode_image, ContentHash, SelectionMethod};
use crate::pipeline::{Pipeline, PipelineConfig, RunOptions};

pub const DATASET_SCHEMA: u32 = 1;
pub const REPORT_SCHEMA: u32 = 1;

/// JSON schema every serialized [`BenchReport`] satisfies.
pub const REPORT_JSON_SCHEMA: &str = include_str!("../../schemas/bench_report.schema.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub style: String,
    pub license: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: u32,
    pub name: String,
    pub entries: Vec<DatasetEntry>,
    /// Directory entry paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    pub fn entry_path(&self, entry: &DatasetEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Every violation, each naming the entry it concerns.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != DATASET_SCHEMA {
            out.push(format!("unsupported schema {} (expected {DATASET_SCHEMA})", self.schema));
        }
        if self.entries.is_empty() {
            out.push("entries list is empty".into());
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if e.id.trim().is_empty() {
                out.push(format!("entry with path {:?} has an empty id", e.path));
            } else if !seen.insert(e.id.as_str()) {
                out.push(format!("duplicate id {:?}", e.id));
            }
            match std::fs::read(self.entry_path(e)) {
                Err(err) => out.push(format!("entry {:?}: cannot read {:?}: {err}", e.id, e.path)),
                Ok(bytes) => {
                    if let Err(err) = decode_image(&bytes) {
                        out.push(format!("entry {:?}: {err}", e.id));
                    }
                }
            }
        }
        out
    }
}

/// Reads and validates a dataset manifest.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = std::fs::read(path)?;
    let mut m: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::ManifestInvalid(vec![format!("{}: {e}", path.display())]))?;
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let violations = m.violations();
    if violations.is_empty() {
        Ok(m)
    } else {
        Err(Error::ManifestInvalid(violations))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: String,
    pub style: String,
    pub is_flat: bool,
    pub baseline_thinness: f64,
    pub pipeline_thinness: f64,
    pub baseline_flagged: bool,
    pub pipeline_flagged: bool,
    pub chosen_index: usize,
    pub selection_method: SelectionMethod,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchError {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n: usize,
    pub flat_fraction: f64,
    pub baseline_thin_rate: f64,
    pub pipeline_thin_rate: f64,
    /// Mean of `pipeline_thinness - baseline_thinness`.
    pub mean_thinness_gain: f64,
}

impl Aggregates {
    pub fn from_rows(rows: &[BenchRow]) -> Self {
        let n = rows.len();
        let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
        let gain: f64 = rows.iter().map(|r| r.pipeline_thinness - r.baseline_thinness).sum();
        Self {
            n,
            flat_fraction: frac(rows.iter().filter(|r| r.is_flat).count()),
            baseline_thin_rate: frac(rows.iter().filter(|r| r.baseline_flagged).count()),
            pipeline_thin_rate: frac(rows.iter().filter(|r| r.pipeline_flagged).count()),
            mean_thinness_gain: if n == 0 { 0.0 } else { gain / n as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub dataset: String,
    pub rows: Vec<BenchRow>,
    pub errors: Vec<BenchError>,
    pub aggregates: Aggregates,
}

impl BenchReport {
    pub fn new(dataset: &str, rows: Vec<BenchRow>, errors: Vec<BenchError>) -> Self {
        let aggregates = Aggregates::from_rows(&rows);
        Self {
            schema: REPORT_SCHEMA,
            dataset: dataset.to_string(),
            rows,
            errors,
            aggregates,
        }
    }

    /// The report with every wall time zeroed, for run-to-run comparison.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.wall_time_ms = 0;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn write_report(report: &BenchReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for row in &report.rows {
                w.serialize(row).expect("in-memory write");
            }
            w.into_inner().expect("in-memory write")
        }
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "id",
    "style",
    "is_flat",
    "baseline_thinness",
    "pipeline_thinness",
    "baseline_flagged",
    "pipeline_flagged",
    "chosen_index",
    "selection_method",
    "wall_time_ms",
];

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub limit: Option<usize>,
    /// Each entry runs in its own subdirectory here.
    pub work_dir: PathBuf,
    /// Entries in flight at once.
    pub parallelism: usize,
}

/// Runs the pipeline on each entry (the first `limit` when set). Entries
/// that fail are listed in `errors` and left out of the aggregates; rows
/// keep manifest order.
pub fn run_benchmark(manifest: &DatasetManifest, cfg: &PipelineConfig, opts: &BenchOptions) -> Result<BenchReport> {
    let pipeline = Pipeline::new(cfg.clone())?;
    let entries = &manifest.entries[..opts.limit.unwrap_or(usize::MAX).min(manifest.entries.len())];
    let mut outcomes = Vec::with_capacity(entries.len());
    for batch in entries.chunks(opts.parallelism.max(1)) {
        outcomes.extend(exec::map(batch, |e| (e.id.clone(), run_entry(&pipeline, manifest, e, &opts.work_dir))));
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(err) => errors.push(BenchError {
                id,
                error: err.to_string(),
            }),
        }
    }
    Ok(BenchReport::new(&manifest.name, rows, errors))
}

fn run_entry(pipeline: &Pipeline, manifest: &DatasetManifest, e: &DatasetEntry, work_dir: &Path) -> Result<BenchRow> {
    let started = Instant::now();
    let input = std::fs::read(manifest.entry_path(e))?;
    let run_dir = work_dir.join(&ContentHash::of(e.id.as_bytes()).to_hex()[..16]);
    let m = pipeline.run(&input, &run_dir, &RunOptions::default())?;
    let missing = |what: &str| Error::ManifestCorrupt(format!("run for {:?} has no {what}", e.id));
    let flat = m.diagnostics.flatness.as_ref().ok_or_else(|| missing("flatness"))?;
    let base = m.diagnostics.baseline_thinness.as_ref().ok_or_else(|| missing("baseline thinness"))?;
    let fin = m.diagnostics.final_thinness.as_ref().ok_or_else(|| missing("final thinness"))?;
    let sel = m.selection.as_ref().ok_or_else(|| missing("selection"))?;
    Ok(BenchRow {
        id: e.id.clone(),
        style: e.style.clone(),
        is_flat: flat.is_flat,
        baseline_thinness: base.thinness_ratio,
        pipeline_thinness: fin.thinness_ratio,
        baseline_flagged: base.flagged_thin,
        pipeline_flagged: fin.flagged_thin,
        chosen_index: sel.chosen_index,
        selection_method: sel.method,
        wall_time_ms: started.elapsed().as_millis() as u64,
    })
}
