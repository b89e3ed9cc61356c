use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendSettings, BuiltinModels};
use crate::condition::{CannyParams, FlatnessParams, MaskParams};
use crate::error::{Error, Result};
use crate::mesh::{BakeParams, InflateParams, DEFAULT_THIN_THRESHOLD};
use crate::model::ContentHash;
use crate::select::RealismWeights;

pub const CACHE_DIR_ENV: &str = "FLATLIFT_CACHE_DIR";

/// Upper bound on candidates, set by how many images one VQA call may carry.
pub const MAX_CANDIDATES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_canny: usize,
    pub n_depth: usize,
    pub seed: u64,
    /// One canny condition and no depth conditions, whatever the counts say.
    pub single_condition_mode: bool,
    /// Near-dark instead of near-bright depth maps.
    pub depth_invert: bool,
    pub mask: MaskParams,
    pub flatness: FlatnessParams,
    pub canny: CannyParams,
    pub realism: RealismWeights,
    pub inflate: InflateParams,
    pub bake: BakeParams,
    pub thin_threshold: f64,
    pub backends: BackendSettings,
    /// No caching when unset.
    pub cache_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_canny: 2,
            n_depth: 2,
            seed: 0,
            single_condition_mode: false,
            depth_invert: false,
            mask: MaskParams::default(),
            flatness: FlatnessParams::default(),
            canny: CannyParams::default(),
            realism: RealismWeights::default(),
            inflate: InflateParams::default(),
            bake: BakeParams::default(),
            thin_threshold: DEFAULT_THIN_THRESHOLD,
            backends: BackendSettings::default(),
            cache_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `FLATLIFT_CACHE_DIR` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|d| !d.is_empty()) {
            self.cache_dir = Some(PathBuf::from(dir));
        }
        self
    }

    /// `(canny, depth)` condition counts after single-condition mode.
    pub fn condition_counts(&self) -> (usize, usize) {
        if self.single_condition_mode {
            (1, 0)
        } else {
            (self.n_canny, self.n_depth)
        }
    }

    pub fn candidate_count(&self) -> usize {
        let (c, d) = self.condition_counts();
        c + d
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.candidate_count();
        if n == 0 {
            return Err(Error::Config("at least one condition required".into()));
        }
        if n > MAX_CANDIDATES {
            return Err(Error::Config(format!("at most {MAX_CANDIDATES} conditions allowed, got {n}")));
        }
        self.canny.validate()?;
        self.inflate.validate()?;
        self.bake.validate()?;
        if !(self.thin_threshold > 0.0 && self.thin_threshold <= 1.0) {
            return Err(Error::Config(format!("thin_threshold must be in (0, 1], got {}", self.thin_threshold)));
        }
        for ep in &self.backends.endpoints {
            ep.validate()?;
        }
        Ok(())
    }

    pub fn builtin_models(&self) -> BuiltinModels {
        BuiltinModels {
            mask: self.mask,
            inflate: self.inflate,
            bake: self.bake,
            realism: self.realism,
        }
    }

    /// Hash of every setting that can change results. The cache location
    /// and secrets are left out.
    pub fn fingerprint(&self) -> ContentHash {
        let mut c = self.clone();
        c.cache_dir = None;
        for ep in &mut c.backends.endpoints {
            ep.auth_token = None;
        }
        ContentHash::of(&serde_json::to_vec(&c).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_four_conditions() {
        let c = PipelineConfig::default();
        assert_eq!(c.condition_counts(), (2, 2));
        let s = PipelineConfig { single_condition_mode: true, ..c };
        assert_eq!(s.condition_counts(), (1, 0));
    }

    #[test]
    fn zero_conditions_rejected() {
        let c = PipelineConfig { n_canny: 0, n_depth: 0, ..Default::default() };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("at least one condition required"));
    }

    #[test]
    fn toml_sections_mirror_fields() {
        let c = PipelineConfig::from_toml(
            "n_canny = 1\nseed = 9\n[canny]\ngaussian_sigma = 2.0\n[bake]\nhidden_fill = \"MirrorFront\"\n[[backends.endpoints]]\nbase_url = \"http://localhost:1\"\nrole = \"vqa\"\n",
        )
        .unwrap();
        assert_eq!((c.n_canny, c.n_depth, c.seed), (1, 2, 9));
        assert_eq!(c.canny.gaussian_sigma, 2.0);
        assert_eq!(c.backends.endpoints[0].max_retries, 2);
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn fingerprint_ignores_cache_dir_and_tokens() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.cache_dir = Some("/tmp/x".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
