use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use flatlift_core::backends::wire::{b64, from_body, to_body, unb64, GenerateRequest, GenerateResponse};
use flatlift_core::backends::{Backends, BuiltinTransport, Role, Transport, TransportError, BUILTIN_CAPTION};
use flatlift_core::mesh::{load_mesh, thinness_report};
use flatlift_core::model::{decode_image, encode_image, ConditionKind, ContentHash, RasterImage, SelectionMethod};
use flatlift_core::pipeline::{Pipeline, PipelineConfig, RunManifest, RunOptions, MANIFEST_FILE, STAGES};
use flatlift_core::{fixtures, Error};
use tempfile::TempDir;

/// Builtin models behind a per-role call counter, with optional overrides.
struct Mock {
    inner: BuiltinTransport,
    calls: Mutex<BTreeMap<Role, usize>>,
    fail: Option<Role>,
    invert_generate: bool,
}

impl Mock {
    fn new(cfg: &PipelineConfig) -> Arc<Self> {
        Self::with(cfg, None, false)
    }

    fn with(cfg: &PipelineConfig, fail: Option<Role>, invert_generate: bool) -> Arc<Self> {
        Arc::new(Self {
            inner: BuiltinTransport::new(cfg.builtin_models()),
            calls: Mutex::new(BTreeMap::new()),
            fail,
            invert_generate,
        })
    }

    fn count(&self, role: Role) -> usize {
        self.calls.lock().unwrap().get(&role).copied().unwrap_or(0)
    }

    fn total(&self) -> usize {
        self.calls.lock().unwrap().values().sum()
    }
}

impl Transport for Mock {
    fn id(&self) -> String {
        "mock".into()
    }

    fn post(&self, role: Role, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        *self.calls.lock().unwrap().entry(role).or_default() += 1;
        if self.fail == Some(role) {
            return Err(TransportError::Fatal("mock failure".into()));
        }
        if role == Role::Generate && self.invert_generate {
            let req: GenerateRequest = from_body(body, "req").unwrap();
            let img = decode_image(&unb64(&req.image_png_b64, "img").unwrap()).unwrap().to_rgb_over_white();
            let inv = RasterImage::from_fn_rgb(img.width(), img.height(), |x, y| {
                img.rgb_at((y * img.width() + x) as usize).map(|c| 255 - c)
            });
            return Ok(to_body(&GenerateResponse { image_png_b64: b64(&encode_image(&inv)) }));
        }
        self.inner.post(role, body)
    }
}

fn sprite() -> Vec<u8> {
    encode_image(&fixtures::disk_sprite(64, 22.0, [200, 60, 40]))
}

fn pipeline(cfg: &PipelineConfig, mock: &Arc<Mock>) -> Pipeline {
    Pipeline::with_backends(cfg.clone(), Backends::uniform(mock.clone(), 0)).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn defaults_produce_four_candidates_and_a_colored_mesh() {
    let cfg = PipelineConfig::default();
    let mock = Mock::new(&cfg);
    let dir = TempDir::new().unwrap();
    let m = pipeline(&cfg, &mock).run(&sprite(), dir.path(), &RunOptions::default()).unwrap();

    assert!(m.complete);
    assert_eq!(m.stages.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), STAGES);
    assert_eq!(m.candidates.len(), 4);
    let generates = m.backend_calls.iter().filter(|c| c.record.role == Role::Generate).count();
    assert_eq!(generates, 4);
    assert_eq!(mock.count(Role::Generate), 4);
    let sel = m.selection.as_ref().unwrap();
    assert!((1..=4).contains(&sel.chosen_index));
    assert_eq!(sel.method, SelectionMethod::Vqa);

    for stage in &m.stages {
        for (name, hash) in &stage.output_hashes {
            assert_eq!(ContentHash::of(&read(dir.path(), name)), *hash, "{name}");
        }
    }
    let mesh = load_mesh(&read(dir.path(), "final.ply")).unwrap();
    assert!(mesh.vertex_colors.is_some());
    assert!(thinness_report(&mesh).unwrap().thinness_ratio >= 0.3);
    assert!(m.diagnostics.final_thinness.is_some());
    assert!(m.diagnostics.baseline_thinness.is_some());
    assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
}

#[test]
fn candidates_follow_condition_order_and_seeds() {
    let cfg = PipelineConfig { seed: 40, ..Default::default() };
    let mock = Mock::new(&cfg);
    let dir = TempDir::new().unwrap();
    let m = pipeline(&cfg, &mock).run(&sprite(), dir.path(), &RunOptions::default()).unwrap();
    let got: Vec<_> = m.candidates.iter().map(|c| (c.condition_kind, c.condition_index, c.seed)).collect();
    assert_eq!(
        got,
        vec![
            (ConditionKind::CannyEdge, 0, 40),
            (ConditionKind::CannyEdge, 1, 41),
            (ConditionKind::Depth, 0, 42),
            (ConditionKind::Depth, 1, 43),
        ]
    );
}

#[test]
fn single_condition_mode_makes_one_candidate() {
    let cfg = PipelineConfig { single_condition_mode: true, ..Default::default() };
    let mock = Mock::new(&cfg);
    let dir = TempDir::new().unwrap();
    let m = pipeline(&cfg, &mock).run(&sprite(), dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(m.candidates.len(), 1);
    assert_eq!(m.candidates[0].condition_kind, ConditionKind::CannyEdge);
    assert_eq!(m.selection.as_ref().unwrap().chosen_index, 1);
    assert!(dir.path().join("conditions/canny_0.png").exists());
    assert!(!dir.path().join("conditions/depth_0.png").exists());
}

#[test]
fn runs_are_deterministic() {
    let cfg = PipelineConfig::default();
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let ma = pipeline(&cfg, &Mock::new(&cfg)).run(&sprite(), a.path(), &RunOptions::default()).unwrap();
    let mb = pipeline(&cfg, &Mock::new(&cfg)).run(&sprite(), b.path(), &RunOptions::default()).unwrap();
    assert_eq!(ma.comparable(), mb.comparable());
    for i in 0..4 {
        let name = format!("candidates/cand_{i}.png");
        assert_eq!(read(a.path(), &name), read(b.path(), &name));
    }
    assert_eq!(read(a.path(), "final.ply"), read(b.path(), "final.ply"));
}

#[test]
fn second_run_is_served_from_cache() {
    let cache = TempDir::new().unwrap();
    let cfg = PipelineConfig { cache_dir: Some(cache.path().to_path_buf()), ..Default::default() };
    let mock = Mock::new(&cfg);
    let p = pipeline(&cfg, &mock);
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let first = p.run(&sprite(), a.path(), &RunOptions::default()).unwrap();
    assert!(first.stages.iter().all(|s| !s.cache_hit));
    let calls = mock.total();
    assert!(calls > 0);

    let second = p.run(&sprite(), b.path(), &RunOptions::default()).unwrap();
    assert_eq!(mock.total(), calls);
    assert!(second.stages.iter().all(|s| s.cache_hit));
    assert!(second.backend_calls.is_empty());
    assert_eq!(read(a.path(), "final.ply"), read(b.path(), "final.ply"));
    assert_eq!(first.selection, second.selection);
}

#[test]
fn resume_after_interruption_matches_uninterrupted_run() {
    let cfg = PipelineConfig::default();
    let full_dir = TempDir::new().unwrap();
    let full = pipeline(&cfg, &Mock::new(&cfg)).run(&sprite(), full_dir.path(), &RunOptions::default()).unwrap();

    let dir = TempDir::new().unwrap();
    let mock = Mock::new(&cfg);
    let p = pipeline(&cfg, &mock);
    let opts = RunOptions { stop_after: Some("candidates"), ..Default::default() };
    match p.run(&sprite(), dir.path(), &opts) {
        Err(Error::Interrupted(stage)) => assert_eq!(stage, "candidates"),
        other => panic!("expected interruption, got {other:?}"),
    }
    let partial = RunManifest::load(dir.path()).unwrap();
    assert_eq!(partial.stages.len(), 5);
    assert!(!partial.complete);
    assert_eq!(mock.count(Role::Generate), 4);

    let resumed = p.resume(dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(mock.count(Role::Generate), 4);
    assert!(resumed.stages[..5].iter().all(|s| s.cache_hit));
    assert!(resumed.stages[5..].iter().all(|s| !s.cache_hit));
    assert_eq!(resumed.comparable(), full.comparable());
    assert_eq!(read(dir.path(), "final.ply"), read(full_dir.path(), "final.ply"));
}

#[test]
fn resume_of_complete_run_is_a_no_op() {
    let cfg = PipelineConfig::default();
    let mock = Mock::new(&cfg);
    let p = pipeline(&cfg, &mock);
    let dir = TempDir::new().unwrap();
    let first = p.run(&sprite(), dir.path(), &RunOptions::default()).unwrap();
    let calls = mock.total();
    let again = p.resume(dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(mock.total(), calls);
    assert!(again.stages.iter().all(|s| s.cache_hit));
    assert_eq!(again.comparable(), first.comparable());
}

#[test]
fn resume_with_changed_config_is_a_mismatch() {
    let cfg = PipelineConfig::default();
    let dir = TempDir::new().unwrap();
    pipeline(&cfg, &Mock::new(&cfg)).run(&sprite(), dir.path(), &RunOptions::default()).unwrap();
    let other = PipelineConfig { seed: 99, ..Default::default() };
    let err = pipeline(&other, &Mock::new(&other)).resume(dir.path(), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::RunMismatch { .. }), "{err:?}");
}

#[test]
fn resume_without_manifest_is_corrupt() {
    let cfg = PipelineConfig::default();
    let dir = TempDir::new().unwrap();
    let p = pipeline(&cfg, &Mock::new(&cfg));
    assert!(matches!(p.resume(dir.path(), &RunOptions::default()), Err(Error::ManifestCorrupt(_))));
    std::fs::write(dir.path().join(MANIFEST_FILE), b"{not json").unwrap();
    assert!(matches!(p.resume(dir.path(), &RunOptions::default()), Err(Error::ManifestCorrupt(_))));
}

#[test]
fn texture_samples_the_original_not_the_proxy() {
    let cfg = PipelineConfig::default();
    let mock = Mock::with(&cfg, None, true);
    let dir = TempDir::new().unwrap();
    let input = encode_image(&fixtures::disk(64, 22.0, [200, 60, 40], fixtures::WHITE));
    pipeline(&cfg, &mock).run(&input, dir.path(), &RunOptions::default()).unwrap();
    let proxy = decode_image(&read(dir.path(), "proxy.png")).unwrap();
    assert_eq!(proxy.rgb_at(32 * 64 + 32), [55, 195, 215]);
    let mesh = load_mesh(&read(dir.path(), "final.ply")).unwrap();
    assert!(mesh.vertex_colors.unwrap().iter().all(|&c| c == [200, 60, 40]));
}

#[test]
fn override_is_recorded() {
    let cfg = PipelineConfig::default();
    let mock = Mock::new(&cfg);
    let dir = TempDir::new().unwrap();
    let opts = RunOptions { override_index: Some(2), ..Default::default() };
    let m = pipeline(&cfg, &mock).run(&sprite(), dir.path(), &opts).unwrap();
    let sel = m.selection.unwrap();
    assert_eq!((sel.chosen_index, sel.method), (2, SelectionMethod::UserOverride));
    assert_eq!(mock.count(Role::Vqa), 0);
    assert_eq!(read(dir.path(), "proxy.png"), read(dir.path(), "candidates/cand_1.png"));

    let bad = RunOptions { override_index: Some(9), ..Default::default() };
    let err = pipeline(&cfg, &mock).run(&sprite(), dir.path(), &bad).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "select"), "{err:?}");
}

#[test]
fn caption_failure_falls_back() {
    let cfg = PipelineConfig::default();
    let mock = Mock::with(&cfg, Some(Role::Caption), false);
    let dir = TempDir::new().unwrap();
    let m = pipeline(&cfg, &mock).run(&sprite(), dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(m.caption.as_deref(), Some(BUILTIN_CAPTION));
    assert!(m.warnings.iter().any(|w| w.contains("caption")));
    assert!(m.complete);
}

#[test]
fn shape_failure_aborts_and_keeps_partial_run() {
    let cfg = PipelineConfig::default();
    let mock = Mock::with(&cfg, Some(Role::Shape), false);
    let dir = TempDir::new().unwrap();
    let err = pipeline(&cfg, &mock).run(&sprite(), dir.path(), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "shape"), "{err:?}");
    let partial = RunManifest::load(dir.path()).unwrap();
    assert_eq!(partial.stages.len(), 6);
    assert!(!partial.complete);
}

#[test]
fn empty_input_fails_in_mask_stage() {
    let cfg = PipelineConfig::default();
    let dir = TempDir::new().unwrap();
    let blank = encode_image(&RasterImage::filled(32, 32, &[255, 255, 255]));
    let err = pipeline(&cfg, &Mock::new(&cfg)).run(&blank, dir.path(), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, ref source } if stage == "mask" && matches!(**source, Error::EmptyForeground)));
}

#[test]
fn observer_sees_every_stage() {
    let cfg = PipelineConfig::default();
    let dir = TempDir::new().unwrap();
    let seen = AtomicUsize::new(0);
    let observe = |m: &RunManifest| {
        assert_eq!(m.stages.len(), seen.fetch_add(1, Ordering::SeqCst) + 1);
    };
    let opts = RunOptions { observer: Some(&observe), ..Default::default() };
    pipeline(&cfg, &Mock::new(&cfg)).run(&sprite(), dir.path(), &opts).unwrap();
    assert_eq!(seen.load(Ordering::SeqCst), STAGES.len());
}
