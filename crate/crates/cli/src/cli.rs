//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flatlift_core::backends::{Backends, BuiltinTransport, FixtureSet, FixtureTransport, RecordingTransport, Transport};
use flatlift_core::bench::{self, BenchOptions, ReportFormat};
use flatlift_core::mesh::{load_mesh, thinness_report_with, DEFAULT_THIN_THRESHOLD};
use flatlift_core::pipeline::{Pipeline, PipelineConfig, RunManifest, RunOptions};
use flatlift_core::Error;

#[derive(Debug, Parser)]
#[command(name = "flatlift", version, about = "Lift flat-colored illustrations into textured meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML file with pipeline settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_canny: Option<usize>,
    #[arg(long)]
    pub n_depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use a single canny-edge condition
    #[arg(long)]
    pub single_condition: bool,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every stage on an image
    Run {
        input: PathBuf,
        /// Run directory (default: runs/<input stem>)
        #[arg(long)]
        out: Option<PathBuf>,
        /// 1-based candidate to use instead of the VQA pick
        #[arg(long)]
        override_index: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Finish a partial run directory
    Resume {
        dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the mask and condition maps only
    Conditions {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Show candidate scores for a run, or apply a choice with --index
    Select {
        dir: PathBuf,
        /// Re-run from selection onwards with this 1-based candidate
        #[arg(long)]
        index: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Report the thinness of a mesh
    Diagnose {
        mesh: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THIN_THRESHOLD)]
        threshold: f64,
    },
    /// Run the pipeline over a dataset manifest
    Bench {
        manifest: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "runs/bench")]
        work_dir: PathBuf,
        /// Entries run concurrently
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a procedural sprite dataset with its manifest
    GenDataset {
        dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 96)]
        size: u32,
    },
    /// Serve the job API
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "runs/service")]
        data_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Serve the model wire contract from builtin models or a fixture file
    ServeModels {
        #[arg(long, default_value_t = 8090)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Run an image through the builtin models and save every exchange as fixtures
    RecordFixtures {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "runs/record")]
        work_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Usage problems exit 1, pipeline failures exit 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Stage(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ManifestInvalid(_) | Error::InvalidOverride { .. } => Failure::Usage(e.to_string()),
            e => Failure::Stage(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Stage(e.into())
    }
}

type Outcome = Result<(), Failure>;

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        }
        .with_env_overrides();
        if let Some(n) = self.n_canny {
            cfg.n_canny = n;
        }
        if let Some(n) = self.n_depth {
            cfg.n_depth = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.single_condition {
            cfg.single_condition_mode = true;
        }
        if let Some(dir) = &self.cache_dir {
            cfg.cache_dir = Some(dir.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `argv` and runs the command, returning the exit code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Stage(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn default_out(input: &Path) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    PathBuf::from("runs").join(stem)
}

fn verdict(flagged: bool) -> &'static str {
    if flagged {
        "THIN"
    } else {
        "OK"
    }
}

fn print_summary(out: &mut dyn Write, dir: &Path, m: &RunManifest) -> std::io::Result<()> {
    writeln!(out, "run_dir {}", dir.display())?;
    writeln!(out, "run_id {}", m.run_id)?;
    if let Some(s) = &m.selection {
        writeln!(out, "chosen_index {} of {} ({:?})", s.chosen_index, s.candidate_count, s.method)?;
    }
    if let Some(t) = &m.diagnostics.baseline_thinness {
        writeln!(out, "baseline thinness_ratio {:.4} {}", t.thinness_ratio, verdict(t.flagged_thin))?;
    }
    if let Some(t) = &m.diagnostics.final_thinness {
        writeln!(out, "final thinness_ratio {:.4} {}", t.thinness_ratio, verdict(t.flagged_thin))?;
    }
    let cached = m.stages.iter().filter(|s| s.cache_hit).count();
    writeln!(out, "stages {} ({} reused), backend calls {}", m.stages.len(), cached, m.backend_calls.len())?;
    for w in &m.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

fn execute(command: Command, out: &mut dyn Write) -> Outcome {
    match command {
        Command::Run {
            input,
            out: dir,
            override_index,
            config,
        } => {
            let cfg = config.resolve()?;
            let bytes = read_input(&input)?;
            let dir = dir.unwrap_or_else(|| default_out(&input));
            let opts = RunOptions {
                override_index,
                ..Default::default()
            };
            let m = Pipeline::new(cfg)?.run(&bytes, &dir, &opts)?;
            print_summary(out, &dir, &m)?;
        }
        Command::Resume { dir, config } => {
            let m = Pipeline::new(config.resolve()?)?.resume(&dir, &RunOptions::default())?;
            print_summary(out, &dir, &m)?;
        }
        Command::Conditions { input, out: dir, config } => {
            let cfg = config.resolve()?;
            let bytes = read_input(&input)?;
            let dir = dir.unwrap_or_else(|| default_out(&input));
            let opts = RunOptions {
                stop_after: Some("conditions"),
                ..Default::default()
            };
            match Pipeline::new(cfg)?.run(&bytes, &dir, &opts) {
                Ok(_) | Err(Error::Interrupted(_)) => {}
                Err(e) => return Err(e.into()),
            }
            let m = RunManifest::load(&dir)?;
            for stage in &m.stages {
                for name in stage.output_hashes.keys() {
                    writeln!(out, "{}", dir.join(name).display())?;
                }
            }
            if let Some(f) = &m.diagnostics.flatness {
                writeln!(
                    out,
                    "flatness colors={} flat_fraction={:.3} shading={:.4} {}",
                    f.distinct_color_count,
                    f.flat_pixel_fraction,
                    f.shading_score,
                    if f.is_flat { "FLAT" } else { "NOT FLAT" }
                )?;
            }
        }
        Command::Select { dir, index, config } => {
            let pipeline = Pipeline::new(config.resolve()?)?;
            let m = RunManifest::load(&dir)?;
            if m.candidates.is_empty() {
                return Err(Failure::Usage(format!("{} has no candidates yet", dir.display())));
            }
            if let Some(index) = index {
                if !(1..=m.candidates.len()).contains(&index) {
                    return Err(Error::InvalidOverride {
                        index,
                        count: m.candidates.len(),
                    }
                    .into());
                }
                let opts = RunOptions {
                    override_index: Some(index),
                    ..Default::default()
                };
                let m = pipeline.resume(&dir, &opts)?;
                print_summary(out, &dir, &m)?;
            } else {
                let scores = pipeline.candidate_scores(&dir)?;
                for (i, (c, s)) in m.candidates.iter().zip(&scores).enumerate() {
                    writeln!(
                        out,
                        "{} {} realism {:.4} (shading {:.4}, gradient entropy {:.4})",
                        i + 1,
                        c.artifact,
                        s.total,
                        s.shading_term,
                        s.gradient_entropy
                    )?;
                }
                writeln!(out, "suggested {}", pipeline.suggest(&dir)?)?;
                if let Some(s) = &m.selection {
                    writeln!(out, "selected {} ({:?}): {}", s.chosen_index, s.method, s.rationale)?;
                }
            }
        }
        Command::Diagnose { mesh, threshold } => {
            let bytes = read_input(&mesh)?;
            let mesh = load_mesh(&bytes)?;
            let report = thinness_report_with(&mesh, threshold)?;
            let e = report.principal_extents;
            writeln!(out, "vertices {}", mesh.vertex_count())?;
            writeln!(out, "triangles {}", mesh.triangles.len())?;
            writeln!(out, "principal_extents {:.6} {:.6} {:.6}", e[0], e[1], e[2])?;
            writeln!(out, "thinness_ratio {:.4}", report.thinness_ratio)?;
            writeln!(out, "{}", verdict(report.flagged_thin))?;
        }
        Command::Bench {
            manifest,
            limit,
            format,
            out: report_path,
            work_dir,
            jobs,
            config,
        } => {
            let cfg = config.resolve()?;
            let manifest = bench::load_manifest(&manifest)?;
            let opts = BenchOptions {
                limit,
                work_dir,
                parallelism: jobs,
            };
            let report = bench::run_benchmark(&manifest, &cfg, &opts)?;
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Csv => ReportFormat::Csv,
            };
            let bytes = bench::write_report(&report, format);
            match report_path {
                Some(path) => {
                    flatlift_core::pipeline::write_atomic(&path, &bytes)?;
                    let a = &report.aggregates;
                    writeln!(
                        out,
                        "n {} errors {} flat_fraction {:.3} baseline_thin_rate {:.3} pipeline_thin_rate {:.3} mean_thinness_gain {:.4}",
                        a.n,
                        report.errors.len(),
                        a.flat_fraction,
                        a.baseline_thin_rate,
                        a.pipeline_thin_rate,
                        a.mean_thinness_gain
                    )?;
                }
                None => out.write_all(&bytes)?,
            }
        }
        Command::GenDataset { dir, count, seed, size } => {
            if count == 0 || size < 16 {
                return Err(Failure::Usage("need --count ≥ 1 and --size ≥ 16".into()));
            }
            let m = bench::generate_dataset(&dir, count, seed, size)?;
            writeln!(out, "{} entries in {}", m.entries.len(), dir.join("manifest.json").display())?;
        }
        Command::Serve {
            port,
            host,
            data_dir,
            config,
        } => {
            let cfg = config.resolve()?;
            let app = crate::service::router(crate::service::AppState::new(cfg, data_dir));
            serve(app, &host, port, out)?;
        }
        Command::ServeModels { port, host, fixtures } => {
            let transport: Arc<dyn Transport> = match fixtures {
                Some(path) => Arc::new(FixtureTransport::new(FixtureSet::load(&path)?)),
                None => Arc::new(BuiltinTransport::new(PipelineConfig::default().builtin_models())),
            };
            serve(crate::models::router(transport), &host, port, out)?;
        }
        Command::RecordFixtures {
            input,
            out: path,
            work_dir,
            config,
        } => {
            let cfg = config.resolve()?;
            let bytes = read_input(&input)?;
            let recorder = Arc::new(RecordingTransport::new(Arc::new(BuiltinTransport::new(cfg.builtin_models()))));
            let pipeline = Pipeline::with_backends(cfg, Backends::uniform(recorder.clone(), 0))?;
            pipeline.run(&bytes, &work_dir, &RunOptions::default())?;
            let set = recorder.recorded();
            flatlift_core::pipeline::write_atomic(&path, &set.to_json())?;
            writeln!(out, "{} exchanges recorded to {}", set.len(), path.display())?;
        }
    }
    Ok(())
}

fn serve(app: axum::Router, host: &str, port: u16, out: &mut dyn Write) -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure::Usage(format!("cannot bind {host}:{port}: {e}")))?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        axum::serve(listener, app).await?;
        Ok(())
    })
}
