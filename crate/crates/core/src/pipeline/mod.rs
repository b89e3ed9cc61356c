//! Stage-by-stage orchestration with a content-addressed cache, resumable
//! run directories and an audit manifest.
//!
//! Every stage reads its inputs as artifact bytes and writes its outputs as
//! artifact bytes, whether they were computed, pulled from the cache or
//! reused from an earlier partial run, so all three paths feed identical
//! data downstream.

mod cache;
mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use cache::{write_atomic, Cache};
pub use config::{PipelineConfig, CACHE_DIR_ENV, MAX_CANDIDATES};
pub use manifest::{
    CandidateRecord, Diagnostics, RunManifest, SelectionRecord, StageCall, StageRecord, MANIFEST_FILE,
    MANIFEST_SCHEMA, STAGES,
};

use crate::backends::{BackendCallRecord, Backends, Role, BUILTIN_CAPTION};
use crate::condition::{
    canny_edges, distance_depth, flatness_report, foreground_mask_with, normalize_depth,
    FlatnessReport, ForegroundMask,
};
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, ply_bytes, thinness_report_with};
use crate::model::{
    decode_image, encode_image, CandidateImage, Caption, CaptionSource, ConditionKind, ConditionMap, ContentHash,
    RasterImage, MAX_WORKING_SIDE,
};
use crate::select::{argmax_first, realism_score_with, select_proxy, RealismScore};
use crate::exec;

/// Proxy silhouettes agreeing less than this with the input get a warning.
pub const MIN_PROXY_IOU: f64 = 0.8;

pub const INPUT_FILE: &str = "input.png";

type Artifacts = BTreeMap<String, Vec<u8>>;

/// Called with a manifest snapshot after every stage.
pub type Observer<'a> = &'a (dyn Fn(&RunManifest) + Sync);

#[derive(Default, Clone, Copy)]
pub struct RunOptions<'a> {
    /// 1-based candidate to use instead of asking the VQA backend.
    pub override_index: Option<usize>,
    /// Stop with [`Error::Interrupted`] once this stage is recorded.
    pub stop_after: Option<&'a str>,
    pub observer: Option<Observer<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CaptionArtifact {
    text: String,
    source: CaptionSource,
    fallback_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    outputs: BTreeMap<String, ContentHash>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    backends: Backends,
    cache: Option<Cache>,
}

/// Runs every stage on `input` (PNG bytes) into `run_dir` with backends
/// built from the configuration.
pub fn run_pipeline(input: &[u8], cfg: &PipelineConfig, run_dir: &Path, override_index: Option<usize>) -> Result<RunManifest> {
    Pipeline::new(cfg.clone())?.run(
        input,
        run_dir,
        &RunOptions {
            override_index,
            ..Default::default()
        },
    )
}

/// Continues a partial run directory, reusing every finished stage.
pub fn resume(run_dir: &Path, cfg: &PipelineConfig) -> Result<RunManifest> {
    Pipeline::new(cfg.clone())?.resume(run_dir, &RunOptions::default())
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let backends = Backends::from_settings(&cfg.backends, cfg.builtin_models())?;
        Self::with_backends(cfg, backends)
    }

    pub fn with_backends(cfg: PipelineConfig, backends: Backends) -> Result<Self> {
        cfg.validate()?;
        let cache = cfg.cache_dir.as_ref().map(Cache::new);
        Ok(Self { cfg, backends, cache })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    fn run_id(&self, input_hash: &ContentHash) -> ContentHash {
        ContentHash::of_parts([
            b"flatlift-run".as_slice(),
            input_hash.as_bytes(),
            self.cfg.fingerprint().as_bytes(),
        ])
    }

    /// Fresh run: any manifest already in `run_dir` is replaced.
    pub fn run(&self, input: &[u8], run_dir: &Path, opts: &RunOptions) -> Result<RunManifest> {
        let img = decode_image(input).map_err(|e| e.in_stage("input"))?;
        let working = img.clamp_long_side(MAX_WORKING_SIDE);
        let png = encode_image(&working);
        write_atomic(&run_dir.join(INPUT_FILE), &png)?;
        let stale = run_dir.join(MANIFEST_FILE);
        if stale.exists() {
            std::fs::remove_file(&stale)?;
        }
        self.execute(run_dir, png, None, opts)
    }

    pub fn resume(&self, run_dir: &Path, opts: &RunOptions) -> Result<RunManifest> {
        let prev = RunManifest::load(run_dir)?;
        let png = std::fs::read(run_dir.join(INPUT_FILE))
            .map_err(|e| Error::ManifestCorrupt(format!("{INPUT_FILE}: {e}")))?;
        if ContentHash::of(&png) != prev.input_hash {
            return Err(Error::ManifestCorrupt(format!("{INPUT_FILE} does not match the manifest")));
        }
        let requested = self.run_id(&prev.input_hash);
        if requested != prev.run_id {
            return Err(Error::RunMismatch {
                existing: prev.run_id.to_hex(),
                requested: requested.to_hex(),
            });
        }
        self.execute(run_dir, png, Some(prev), opts)
    }

    fn execute(&self, run_dir: &Path, input_png: Vec<u8>, prev: Option<RunManifest>, opts: &RunOptions) -> Result<RunManifest> {
        let input_hash = ContentHash::of(&input_png);
        let mut m = RunManifest::new(self.run_id(&input_hash), input_hash, self.cfg.fingerprint());
        let mut art: Artifacts = BTreeMap::new();
        art.insert(INPUT_FILE.to_string(), input_png);

        for stage in STAGES {
            let inputs: BTreeMap<String, ContentHash> = stage_inputs(stage, &art)
                .into_iter()
                .map(|n| (n.clone(), ContentHash::of(&art[&n])))
                .collect();
            let key = self.stage_key(stage, &inputs, opts);
            let started = Utc::now();

            let reused = prev
                .as_ref()
                .and_then(|p| p.stage(stage).filter(|r| r.key == key).map(|r| (p, r)))
                .and_then(|(p, r)| read_outputs(run_dir, &r.output_hashes).map(|o| (p, o)));
            let (outputs, calls, cache_hit) = match reused {
                Some((p, outputs)) => {
                    let calls = p.backend_calls.iter().filter(|c| c.stage == stage).map(|c| c.record.clone()).collect();
                    (outputs, calls, true)
                }
                None => match self.cache_lookup(&key)? {
                    Some(outputs) => (outputs, vec![], true),
                    None => {
                        let (outputs, calls) = self.compute(stage, &art, opts).map_err(|e| e.in_stage(stage))?;
                        self.cache_store(&key, &outputs)?;
                        (outputs, calls, false)
                    }
                },
            };

            for (name, bytes) in &outputs {
                write_atomic(&run_dir.join(name), bytes)?;
            }
            m.stages.push(StageRecord {
                name: stage.to_string(),
                key,
                input_hashes: inputs,
                output_hashes: outputs.iter().map(|(n, b)| (n.clone(), ContentHash::of(b))).collect(),
                started,
                finished: Utc::now(),
                cache_hit,
            });
            m.backend_calls.extend(calls.into_iter().map(|record| StageCall {
                stage: stage.to_string(),
                record,
            }));
            art.extend(outputs);
            self.summarize(stage, &art, &mut m).map_err(|e| e.in_stage(stage))?;
            if stage == STAGES[STAGES.len() - 1] {
                m.complete = true;
            }
            write_atomic(&run_dir.join(MANIFEST_FILE), &m.to_json())?;
            if let Some(observe) = opts.observer {
                observe(&m);
            }
            if opts.stop_after == Some(stage) && !m.complete {
                return Err(Error::Interrupted(stage.to_string()));
            }
        }
        Ok(m)
    }

    fn stage_key(&self, stage: &str, inputs: &BTreeMap<String, ContentHash>, opts: &RunOptions) -> ContentHash {
        let c = &self.cfg;
        let (n_canny, n_depth) = c.condition_counts();
        let id = |r: Role| self.backends.identity(r);
        let settings = match stage {
            "mask" => json!({ "mask": c.mask }),
            "flatness" => json!({ "flatness": c.flatness }),
            "conditions" => json!({ "canny": c.canny, "n_canny": n_canny, "n_depth": n_depth, "depth_invert": c.depth_invert }),
            "caption" => json!({ "backend": id(Role::Caption) }),
            "candidates" => json!({ "backend": id(Role::Generate), "seed": c.seed, "mask": c.mask }),
            "select" => json!({ "backend": id(Role::Vqa), "override": opts.override_index, "realism": c.realism, "mask": c.mask }),
            "shape" => json!({ "backend": id(Role::Shape), "seed": c.seed, "inflate": c.inflate, "mask": c.mask }),
            "bake" => json!({ "backend": id(Role::Texture), "bake": c.bake, "mask": c.mask }),
            _ => unreachable!("unknown stage {stage}"),
        };
        let mut parts: Vec<Vec<u8>> = vec![b"flatlift-stage-v1".to_vec(), stage.as_bytes().to_vec(), settings.to_string().into_bytes()];
        for (name, hash) in inputs {
            parts.push(format!("{name}={hash}").into_bytes());
        }
        ContentHash::of_parts(parts)
    }

    fn cache_lookup(&self, key: &ContentHash) -> Result<Option<Artifacts>> {
        let Some(cache) = &self.cache else { return Ok(None) };
        let Some(entry) = cache.get(key)? else { return Ok(None) };
        let Ok(entry) = serde_json::from_slice::<CacheEntry>(&entry) else {
            tracing::warn!("ignoring unreadable cache entry {}", key.short());
            return Ok(None);
        };
        let mut out = Artifacts::new();
        for (name, hash) in entry.outputs {
            match cache.get(&hash)? {
                Some(bytes) if ContentHash::of(&bytes) == hash => {
                    out.insert(name, bytes);
                }
                _ => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    fn cache_store(&self, key: &ContentHash, outputs: &Artifacts) -> Result<()> {
        let Some(cache) = &self.cache else { return Ok(()) };
        let mut entry = CacheEntry { outputs: BTreeMap::new() };
        for (name, bytes) in outputs {
            entry.outputs.insert(name.clone(), cache.put_blob(bytes)?);
        }
        cache.put(key, &serde_json::to_vec(&entry)?)
    }

    fn compute(&self, stage: &str, art: &Artifacts, opts: &RunOptions) -> Result<(Artifacts, Vec<BackendCallRecord>)> {
        let c = &self.cfg;
        let input = || decode_image(&art[INPUT_FILE]);
        let mask = || -> Result<ForegroundMask> { Ok(ForegroundMask::from_image(&decode_image(&art["mask.png"])?)) };
        let mut out = Artifacts::new();
        let mut calls = Vec::new();
        match stage {
            "mask" => {
                let m = foreground_mask_with(&input()?, &c.mask);
                if m.coverage() <= 0.0 {
                    return Err(Error::EmptyForeground);
                }
                out.insert("mask.png".into(), encode_image(m.image()));
            }
            "flatness" => {
                let report = flatness_report(&input()?, &mask()?, &c.flatness)?;
                out.insert("flatness.json".into(), serde_json::to_vec_pretty(&report)?);
            }
            "conditions" => {
                let img = input()?;
                let mask = mask()?;
                let source = ContentHash::of(&art[INPUT_FILE]);
                let (n_canny, n_depth) = c.condition_counts();
                if n_canny > 0 {
                    let edges = encode_image(&canny_edges(&img, &c.canny, source)?.map.map);
                    for i in 0..n_canny {
                        out.insert(format!("conditions/canny_{i}.png"), edges.clone());
                    }
                }
                if n_depth > 0 {
                    let depth = normalize_depth(&distance_depth(&mask), &mask, c.depth_invert, source)?;
                    let png = encode_image(&depth.map);
                    for i in 0..n_depth {
                        out.insert(format!("conditions/depth_{i}.png"), png.clone());
                    }
                }
            }
            "caption" => {
                let a = match self.backends.caption(&input()?, &mut calls) {
                    Ok(cap) => CaptionArtifact {
                        text: cap.text().to_string(),
                        source: cap.source,
                        fallback_reason: None,
                    },
                    Err(e) => CaptionArtifact {
                        text: BUILTIN_CAPTION.to_string(),
                        source: CaptionSource::Backend,
                        fallback_reason: Some(e.to_string()),
                    },
                };
                out.insert("caption.json".into(), serde_json::to_vec_pretty(&a)?);
            }
            "candidates" => {
                let img = input()?;
                let cap: CaptionArtifact = serde_json::from_slice(&art["caption.json"])?;
                let cap = Caption::new(&cap.text, cap.source)?;
                let conds = conditions(art)?;
                let results = exec::map_range(conds.len(), |i| {
                    let (cond, index) = &conds[i];
                    let mut log = Vec::new();
                    let seed = c.seed.wrapping_add(i as u64);
                    let r = self.backends.generate(&img, cond, *index, &cap, seed, &mut log);
                    (r, log)
                });
                let mut records = Vec::new();
                let mut first_err = None;
                for (i, (r, log)) in results.into_iter().enumerate() {
                    calls.extend(log);
                    match r {
                        Ok(cand) => {
                            let name = format!("candidates/cand_{i}.png");
                            out.insert(name.clone(), encode_image(&cand.image));
                            records.push(CandidateRecord {
                                artifact: name,
                                condition_kind: cand.condition_kind,
                                condition_index: cand.condition_index,
                                backend_id: cand.backend_id,
                                seed: cand.seed,
                            });
                        }
                        Err(e) => {
                            first_err.get_or_insert(e);
                        }
                    }
                }
                if let Some(e) = first_err {
                    return Err(e);
                }
                out.insert("candidates.json".into(), serde_json::to_vec_pretty(&records)?);
            }
            "select" => {
                let mask = mask()?;
                let cands = candidates(art)?;
                let proxy = select_proxy(
                    &cands,
                    |q, imgs| self.backends.vqa(q, imgs, &mut calls),
                    &mask,
                    opts.override_index,
                    &c.realism,
                )?;
                let iou = foreground_mask_with(&proxy.image, &c.mask).iou(&mask);
                let record = SelectionRecord {
                    chosen_index: proxy.chosen_index,
                    candidate_count: cands.len(),
                    method: proxy.method,
                    rationale: proxy.rationale,
                    proxy_mask_iou: iou,
                };
                out.insert("proxy.png".into(), encode_image(&proxy.image));
                out.insert("selection.json".into(), serde_json::to_vec_pretty(&record)?);
            }
            "shape" => {
                let proxy = decode_image(&art["proxy.png"])?;
                let shape = self.backends.shape(&proxy, c.seed, &mut calls)?;
                let baseline = self.backends.shape(&input()?, c.seed, &mut calls)?;
                out.insert("shape.ply".into(), ply_bytes(&shape));
                out.insert("baseline.ply".into(), ply_bytes(&baseline));
            }
            "bake" => {
                let mesh = load_mesh(&art["shape.ply"])?;
                // texture always follows the original input, never the proxy
                let textured = self.backends.texture(&mesh, &input()?, &mut calls)?;
                out.insert("final.ply".into(), ply_bytes(&textured));
            }
            _ => unreachable!("unknown stage {stage}"),
        }
        Ok((out, calls))
    }

    /// Copies what a finished stage produced into the manifest's summary fields.
    fn summarize(&self, stage: &str, art: &Artifacts, m: &mut RunManifest) -> Result<()> {
        match stage {
            "flatness" => {
                let f: FlatnessReport = serde_json::from_slice(&art["flatness.json"])?;
                if !f.is_flat {
                    m.warnings.push("input does not look flat-colored".into());
                }
                m.diagnostics.flatness = Some(f);
            }
            "caption" => {
                let a: CaptionArtifact = serde_json::from_slice(&art["caption.json"])?;
                if let Some(reason) = &a.fallback_reason {
                    m.warnings.push(format!("caption fell back to the builtin text: {reason}"));
                }
                m.caption = Some(a.text);
            }
            "candidates" => {
                m.candidates = serde_json::from_slice(&art["candidates.json"])?;
            }
            "select" => {
                let s: SelectionRecord = serde_json::from_slice(&art["selection.json"])?;
                if s.proxy_mask_iou < MIN_PROXY_IOU {
                    m.warnings.push(format!(
                        "proxy silhouette differs from the input (IoU {:.3} < {MIN_PROXY_IOU})",
                        s.proxy_mask_iou
                    ));
                }
                m.selection = Some(s);
            }
            "shape" => {
                let baseline = load_mesh(&art["baseline.ply"])?;
                m.diagnostics.baseline_thinness = Some(thinness_report_with(&baseline, self.cfg.thin_threshold)?);
            }
            "bake" => {
                let fin = load_mesh(&art["final.ply"])?;
                m.diagnostics.final_thinness = Some(thinness_report_with(&fin, self.cfg.thin_threshold)?);
            }
            _ => {}
        }
        Ok(())
    }

    /// Realism scores of the candidates recorded in a run directory.
    pub fn candidate_scores(&self, run_dir: &Path) -> Result<Vec<RealismScore>> {
        let m = RunManifest::load(run_dir)?;
        let mask = ForegroundMask::from_image(&load_artifact_image(run_dir, "mask.png")?);
        m.candidates
            .iter()
            .map(|c| realism_score_with(&load_artifact_image(run_dir, &c.artifact)?.to_rgb_over_white(), &mask, &self.cfg.realism))
            .collect()
    }

    /// 1-based heuristic pick among the candidates of a run directory, used
    /// to suggest a choice while a run waits for a user selection.
    pub fn suggest(&self, run_dir: &Path) -> Result<usize> {
        let totals: Vec<f64> = self.candidate_scores(run_dir)?.iter().map(|s| s.total).collect();
        argmax_first(&totals).ok_or(Error::NoCandidates)
    }
}

fn read(run_dir: &Path, name: &str) -> Result<Vec<u8>> {
    std::fs::read(run_dir.join(name)).map_err(|e| Error::ManifestCorrupt(format!("{name}: {e}")))
}

/// Artifacts a stage consumes.
fn stage_inputs(stage: &str, art: &Artifacts) -> Vec<String> {
    let pick = |pred: &dyn Fn(&str) -> bool| art.keys().filter(|k| pred(k)).cloned().collect::<Vec<_>>();
    match stage {
        "mask" | "caption" => vec![INPUT_FILE.into()],
        "flatness" | "conditions" => vec![INPUT_FILE.into(), "mask.png".into()],
        "candidates" => pick(&|k| k == INPUT_FILE || k == "caption.json" || k.starts_with("conditions/")),
        "select" => pick(&|k| k == "mask.png" || k == "candidates.json" || k.starts_with("candidates/")),
        "shape" => vec![INPUT_FILE.into(), "proxy.png".into()],
        "bake" => vec![INPUT_FILE.into(), "shape.ply".into()],
        _ => unreachable!("unknown stage {stage}"),
    }
}

/// Condition maps in candidate order: every canny map by index, then every
/// depth map by index.
fn conditions(art: &Artifacts) -> Result<Vec<(ConditionMap, usize)>> {
    let source = ContentHash::of(&art[INPUT_FILE]);
    let mut out = Vec::new();
    for kind in [ConditionKind::CannyEdge, ConditionKind::Depth] {
        for i in 0.. {
            let Some(bytes) = art.get(&format!("conditions/{}_{i}.png", kind.wire_name())) else { break };
            out.push((ConditionMap::new(kind, decode_image(bytes)?, source)?, i));
        }
    }
    Ok(out)
}

fn candidates(art: &Artifacts) -> Result<Vec<CandidateImage>> {
    let records: Vec<CandidateRecord> = serde_json::from_slice(&art["candidates.json"])?;
    records
        .into_iter()
        .map(|r| {
            Ok(CandidateImage {
                image: decode_image(&art[&r.artifact])?.to_rgb_over_white(),
                condition_kind: r.condition_kind,
                condition_index: r.condition_index,
                backend_id: r.backend_id,
                seed: r.seed,
            })
        })
        .collect()
}

/// Reads recorded outputs back when every file is present and unchanged.
fn read_outputs(run_dir: &Path, outputs: &BTreeMap<String, ContentHash>) -> Option<Artifacts> {
    let mut out = Artifacts::new();
    for (name, hash) in outputs {
        let bytes = std::fs::read(run_dir.join(name)).ok()?;
        if ContentHash::of(&bytes) != *hash {
            return None;
        }
        out.insert(name.clone(), bytes);
    }
    Some(out)
}

/// Decoded image helper for callers holding a run directory.
pub fn load_artifact_image(run_dir: &Path, name: &str) -> Result<RasterImage> {
    decode_image(&read(run_dir, name)?)
}

/// Shared handle type for code that runs pipelines on worker threads.
pub type SharedPipeline = Arc<Pipeline>;
