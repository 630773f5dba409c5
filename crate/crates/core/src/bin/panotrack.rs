use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use panotrack::config::{RunConfig, CONFIG_ENV};
use panotrack::error::Error;
use panotrack::eval::evaluate;
use panotrack::io;
use panotrack::pipeline::{merge_slices, track_frames, Lidar};
use panotrack::synthetic::{generate, ScenarioSpec};
use panotrack::{plot, selftest};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

/// Online multi-object tracking on 360° panoramas.
#[derive(Parser)]
#[command(name = "panotrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML). Defaults apply when absent.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig, Error> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Track a detection sequence and write MOT-format tracks.
    Track {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides input.detections.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Overrides output.tracks.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score tracks against ground truth.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Panorama width; defaults to panorama.width from the config.
        #[arg(long)]
        width: Option<u32>,
        /// Defaults to eval.iou_match from the config.
        #[arg(long)]
        iou: Option<f64>,
    },
    /// Generate a synthetic dataset from a scenario file.
    Gen {
        /// Scenario (TOML); defaults apply when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw track paths into a PNG.
    Plot {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check the fast algorithms against reference implementations.
    Selftest {
        #[arg(long, default_value_t = 500)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Internal invariant failures, as opposed to bad input.
#[derive(Debug)]
struct InvariantViolation(String);

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantViolation {}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Track {
            config,
            detections,
            output,
        } => {
            let mut cfg = config.load()?;
            if let Some(d) = detections {
                cfg.input.detections = d;
            }
            if let Some(o) = output {
                cfg.output.tracks = o;
            }
            track(&cfg)
        }
        Command::Eval {
            config,
            gt,
            hyp,
            width,
            iou,
        } => {
            let cfg = config.load()?;
            let width = width.unwrap_or(cfg.panorama.width) as f64;
            let gt = io::read_annotations(&gt, width)?;
            let hyp = io::read_annotations(&hyp, width)?;
            let m = evaluate(&gt, &hyp, iou.unwrap_or(cfg.eval.iou_match))?;
            println!("{:<6} {:>12}", "metric", "value");
            println!("{:<6} {:>12.6}", "MOTA", m.mota);
            println!("{:<6} {:>12.2}", "MOTA%", m.mota * 100.0);
            println!("{:<6} {:>12}", "IDS", m.ids);
            println!("{:<6} {:>12}", "FP", m.fp);
            println!("{:<6} {:>12}", "FN", m.fn_);
            println!("{:<6} {:>12}", "GT", m.gt_count);
            Ok(())
        }
        Command::Gen { spec, out, seed } => {
            let mut s = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    toml::from_str::<ScenarioSpec>(&text)
                        .map_err(|e| Error::InvalidScenario(format!("{}: {e}", p.display())))?
                }
                None => ScenarioSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            gen(&s, &out)
        }
        Command::Plot {
            config,
            tracks,
            output,
        } => {
            let cfg = config.load()?;
            let t = io::read_tracks(&tracks, cfg.panorama.width as f64)?;
            plot::write_png(&output, &t, cfg.panorama.width, cfg.panorama.height)?;
            println!("wrote {}", output.display());
            Ok(())
        }
        Command::Selftest { cases, seed } => {
            let mut failed = 0;
            for r in selftest::run_all(cases, seed)? {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!("{status}  {} ({} cases)", r.name, r.cases);
                for f in &r.failures {
                    println!("      {f}");
                }
                failed += usize::from(!r.passed());
            }
            if failed > 0 {
                return Err(InvariantViolation(format!("{failed} suites failed")).into());
            }
            Ok(())
        }
    }
}

fn track(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    let width = cfg.panorama.width as f64;
    let dim = cfg.panorama.embedding_dim;
    let detections = if cfg.input.slice_local {
        let layout = cfg.layout()?;
        let per_slice = io::load_slice_detections(&cfg.input.detections, &layout, dim)?;
        merge_slices(per_slice, &cfg.merge)?
    } else {
        io::load_detections(&cfg.input.detections, width, dim)?
    };

    let first = cfg.input.first_frame.or_else(|| detections.keys().next().copied());
    let last = cfg.input.last_frame.or_else(|| detections.keys().next_back().copied());
    let (Some(first), Some(last)) = (first, last) else {
        io::write_tracks(&cfg.output.tracks, &[])?;
        println!("no detections; wrote empty {}", cfg.output.tracks.display());
        return Ok(());
    };

    let calibration = match (&cfg.input.calibration, cfg.fusion.enabled) {
        (Some(p), true) => {
            let c = io::load_calibration(p)?;
            if c.width() != width {
                return Err(Error::WidthMismatch(width, c.width()).into());
            }
            Some(c)
        }
        _ => None,
    };
    let lidar = match (&calibration, &cfg.input.clouds) {
        (Some(calibration), Some(dir)) => Some(Lidar {
            calibration,
            band: cfg.fusion.band()?,
            cloud: |frame: u64| {
                let p = io::cloud_path(dir, frame);
                if p.exists() {
                    io::load_pointcloud(&p, frame).map(Some)
                } else {
                    Ok(None)
                }
            },
        }),
        _ => None,
    };

    let tracks = track_frames(first, last, &detections, lidar, cfg.tracker_config())?;
    io::write_tracks(&cfg.output.tracks, &tracks)?;
    let ids: std::collections::BTreeSet<u64> = tracks.iter().map(|t| t.id).collect();
    println!(
        "frames {first}..={last}: {} boxes, {} tracks -> {}",
        tracks.len(),
        ids.len(),
        cfg.output.tracks.display()
    );
    Ok(())
}

fn gen(spec: &ScenarioSpec, out: &Path) -> anyhow::Result<()> {
    let s = generate(spec)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::write_detections(&out.join("detections.txt"), s.detections.iter().flatten())?;
    io::write_annotations(&out.join("gt.txt"), &s.ground_truth()?)?;
    io::write_calibration(&out.join("calib.txt"), &s.calibration)?;
    let clouds = out.join("clouds");
    for c in &s.clouds {
        io::write_pointcloud(&io::cloud_path(&clouds, c.frame), c)?;
    }
    let spec_text = toml::to_string(spec).context("serializing scenario")?;
    std::fs::write(out.join("scenario.toml"), spec_text)
        .with_context(|| format!("writing {}", out.display()))?;

    let mut cfg = RunConfig::default();
    cfg.panorama.width = spec.width;
    cfg.panorama.height = spec.height;
    cfg.panorama.embedding_dim = spec.embedding_dim;
    cfg.input.detections = "detections.txt".into();
    cfg.input.calibration = Some("calib.txt".into());
    cfg.input.clouds = Some("clouds".into());
    cfg.input.first_frame = Some(0);
    cfg.input.last_frame = Some(spec.n_frames - 1);
    cfg.output.tracks = "tracks.txt".into();
    std::fs::write(out.join("config.toml"), cfg.to_toml())
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} frames, {} detections -> {}",
        spec.n_frames,
        s.detections.iter().map(Vec::len).sum::<usize>(),
        out.display()
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<InvariantViolation>().is_some() {
        return EXIT_INVARIANT;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::StateTransition { .. } | Error::InvalidKalman(_)) => EXIT_INVARIANT,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(EXIT_INVARIANT),
    }
}
