//! The `deepframe` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::data::{load_dataset, load_image, read_manifest, save_image, side_by_side, split_dataset, write_dataset, write_manifest, SynthDatasetSpec};
use crate::error::{Error, Result};
use crate::flow::{average_frames, warp_middle, FlowField};
use crate::gradcheck::standard_suite;
use crate::metrics::{evaluate_jobs, EvalReport};
use crate::model::Model;
use crate::tensor::Tensor;
use crate::training::{train, TrainConfig};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "deepframe", version, about = "Frame interpolation with flow-guided displacement convolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Average,
    Warp,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset: frames, consecutive flows and manifests.
    Synth {
        /// key = value file: width, height, sequences, frames, max_speed, integer_velocity, seed
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a generator from a key = value config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key (repeatable), e.g. --set steps=100
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        /// Directory for the run header; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Predict the middle frame of a pair and write a first | prediction | second panel.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
        /// Flow from the first to the second frame (.flo)
        #[arg(long)]
        flow: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted frames against ground truth.
    Evaluate {
        #[arg(long)]
        pred_manifest: PathBuf,
        #[arg(long)]
        truth_manifest: PathBuf,
        #[arg(long, default_value = "method")]
        name: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Non-learned baselines: frame averaging or symmetric flow warping.
    Baseline {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        first: Option<PathBuf>,
        #[arg(long)]
        second: Option<PathBuf>,
        /// Flow for a single pair (.flo)
        #[arg(long)]
        flow: Option<PathBuf>,
        /// Frame manifest; every triplet's middle frame is predicted
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Flow manifest matching --frames
        #[arg(long)]
        flows: Option<PathBuf>,
        /// Std-dev (px) of Gaussian noise added to every flow component
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output image for a pair, output directory for a manifest
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 for invalid input, 2 for failures while running.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line.trim_start_matches("error: "));
            return 1;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    let argv_text = format!("{cmd:?}");
    match cmd {
        Command::Synth { spec, out: dir, seed } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::io(&spec, e))?;
            let mut ds = parse_synth_spec(&text)?;
            if let Some(s) = seed {
                ds.seed = s;
            }
            let seqs = ds.generate()?;
            write_dataset(&dir, &seqs)?;
            write_header(&dir, ds.seed, &text, &argv_text)?;
            let n: usize = seqs.iter().map(|s| s.frames.len().saturating_sub(2)).sum();
            writeln!(out, "wrote {} sequences ({n} triplets) to {}", seqs.len(), dir.display()).map_err(io_out)?;
            Ok(0)
        }
        Command::Train {
            config,
            overrides,
            seed,
            steps,
            out: header_dir,
            jobs,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
            let mut cfg = TrainConfig::parse(&text)?;
            let base = config.parent().unwrap_or(Path::new(""));
            for p in [&mut cfg.dataset, &mut cfg.flows, &mut cfg.checkpoint, &mut cfg.log].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            for kv in &overrides {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidConfig(format!("override `{kv}` is not KEY=VALUE")))?;
                cfg.set(k.trim(), v.trim())?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                cfg.steps = s;
            }
            cfg.validate()?;
            let dataset = cfg
                .dataset
                .clone()
                .ok_or_else(|| Error::InvalidConfig("config needs a `dataset` manifest".into()))?;
            let triplets = load_dataset(&dataset, cfg.flows.as_deref())?;
            let (train_set, eval_set) = split_dataset(triplets, cfg.split, cfg.seed)?;
            let dir = header_dir
                .or_else(|| cfg.checkpoint.as_ref().and_then(|p| p.parent().map(Path::to_path_buf)))
                .unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_header(&dir, cfg.seed, &cfg.to_text(), &argv_text)?;
            let outcome = train(&train_set, &cfg)?;
            let last = outcome.history.last().map(|r| r.loss.total).unwrap_or(f64::NAN);
            writeln!(out, "trained {} steps ({}), final loss {last}", outcome.state.step, cfg.mode_name()).map_err(io_out)?;
            if !eval_set.is_empty() {
                let model = Model::from_outcome(&outcome)?;
                let mut preds = Vec::with_capacity(eval_set.len());
                let mut avgs = Vec::with_capacity(eval_set.len());
                for t in &eval_set {
                    preds.push(model.interpolate(&t.first, &t.second, t.flow.as_ref())?);
                    avgs.push(average_frames(&t.first, &t.second)?);
                }
                let truths: Vec<Tensor> = eval_set.iter().map(|t| t.middle.clone()).collect();
                let r_model = evaluate_jobs(&preds, &truths, jobs)?;
                let r_avg = evaluate_jobs(&avgs, &truths, jobs)?;
                write!(out, "{}", EvalReport::table(&[("average", &r_avg), (cfg.mode_name(), &r_model)])).map_err(io_out)?;
            }
            Ok(0)
        }
        Command::Interpolate {
            ckpt,
            first,
            second,
            flow,
            out: path,
        } => {
            let model = Model::load(&ckpt)?;
            let a = load_image(&first)?;
            let b = load_image(&second)?;
            let f = flow.as_deref().map(FlowField::load).transpose()?;
            let pred = model.interpolate(&a, &b, f.as_ref())?;
            save_image(&pred, &path)?;
            let panel = panel_path(&path);
            save_image(&side_by_side(&[&a, &pred, &b])?, &panel)?;
            writeln!(out, "wrote {} and {}", path.display(), panel.display()).map_err(io_out)?;
            Ok(0)
        }
        Command::Evaluate {
            pred_manifest,
            truth_manifest,
            name,
            jobs,
        } => {
            let preds = load_all(&pred_manifest)?;
            let truths = load_all(&truth_manifest)?;
            let r = evaluate_jobs(&preds, &truths, jobs)?;
            write!(out, "{}\n{}", EvalReport::table(&[(&name, &r)]), r.key_values()).map_err(io_out)?;
            Ok(0)
        }
        Command::Baseline {
            method,
            first,
            second,
            flow,
            frames,
            flows,
            noise,
            seed,
            out: dest,
            jobs,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gauss = Normal::new(0.0, noise).map_err(|_| Error::InvalidArgument(format!("bad noise level {noise}")))?;
            let mut predict = |a: &Tensor, b: &Tensor, f: Option<&FlowField>| -> Result<Tensor> {
                match method {
                    Method::Average => average_frames(a, b),
                    Method::Warp => {
                        let f = f.ok_or_else(|| Error::InvalidArgument("warp baseline needs a flow".into()))?;
                        let noisy = FlowField::new(
                            f.width,
                            f.height,
                            f.vectors
                                .iter()
                                .map(|v| [v[0] + gauss.sample(&mut rng), v[1] + gauss.sample(&mut rng)])
                                .collect(),
                        )?;
                        warp_middle(a, b, &noisy)
                    }
                }
            };
            match (first, second, frames) {
                (Some(a), Some(b), None) => {
                    if matches!(method, Method::Warp) && flow.is_none() {
                        return Err(Error::InvalidArgument("warp baseline needs --flow".into()));
                    }
                    let f = flow.as_deref().map(FlowField::load).transpose()?;
                    let pred = predict(&load_image(&a)?, &load_image(&b)?, f.as_ref())?;
                    save_image(&pred, &dest)?;
                    writeln!(out, "wrote {}", dest.display()).map_err(io_out)?;
                }
                (None, None, Some(manifest)) => {
                    let triplets = load_dataset(&manifest, flows.as_deref())?;
                    std::fs::create_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
                    let mut pred_paths = Vec::new();
                    let mut truth_paths = Vec::new();
                    let mut preds = Vec::new();
                    let mut truths = Vec::new();
                    for (k, t) in triplets.iter().enumerate() {
                        let p = predict(&t.first, &t.second, t.flow.as_ref())?;
                        let pp = dest.join(format!("pred_{k:05}.png"));
                        let tp = dest.join(format!("truth_{k:05}.png"));
                        save_image(&p, &pp)?;
                        save_image(&t.middle, &tp)?;
                        pred_paths.push(pp);
                        truth_paths.push(tp);
                        preds.push(p);
                        truths.push(t.middle.clone());
                    }
                    write_manifest(&dest.join("pred.txt"), &[pred_paths])?;
                    write_manifest(&dest.join("truth.txt"), &[truth_paths])?;
                    let name = match method {
                        Method::Average => "average",
                        Method::Warp => "warp",
                    };
                    let r = evaluate_jobs(&preds, &truths, jobs)?;
                    write!(out, "{}\n{}", EvalReport::table(&[(name, &r)]), r.key_values()).map_err(io_out)?;
                    write_header(&dest, seed, &format!("method={name}\nnoise={noise}\n"), &argv_text)?;
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "give either --first and --second, or --frames".into(),
                    ))
                }
            }
            Ok(0)
        }
        Command::Gradcheck { seed } => {
            let reports = standard_suite(seed)?;
            writeln!(out, "op\tmax_rel_error\telements").map_err(io_out)?;
            let mut ok = true;
            for r in &reports {
                writeln!(out, "{}\t{:.3e}\t{}", r.op, r.max_rel_error, r.elements).map_err(io_out)?;
                ok &= r.max_rel_error < GRADCHECK_TOLERANCE;
            }
            Ok(if ok { 0 } else { 2 })
        }
    }
}

fn panel_path(p: &Path) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match p.extension() {
        Some(ext) => format!("{stem}_panel.{}", ext.to_string_lossy()),
        None => format!("{stem}_panel"),
    };
    p.with_file_name(name)
}

fn load_all(manifest: &Path) -> Result<Vec<Tensor>> {
    read_manifest(manifest)?.iter().flatten().map(|p| load_image(p)).collect()
}

fn parse_synth_spec(text: &str) -> Result<SynthDatasetSpec> {
    let mut s = SynthDatasetSpec::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("expected key = value, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let bad = || Error::InvalidConfig(format!("bad value `{v}` for `{k}`"));
        match k {
            "width" => s.width = v.parse().map_err(|_| bad())?,
            "height" => s.height = v.parse().map_err(|_| bad())?,
            "sequences" => s.sequences = v.parse().map_err(|_| bad())?,
            "frames" => s.frames = v.parse().map_err(|_| bad())?,
            "max_speed" => s.max_speed = v.parse().map_err(|_| bad())?,
            "integer_velocity" => s.integer_velocity = v.parse().map_err(|_| bad())?,
            "seed" => s.seed = v.parse().map_err(|_| bad())?,
            _ => return Err(Error::InvalidConfig(format!("unknown key `{k}`"))),
        }
    }
    if s.sequences == 0 || s.frames < 3 || s.max_speed.is_nan() || s.max_speed < 0.0 {
        return Err(Error::InvalidConfig("need sequences ≥ 1, frames ≥ 3 and max_speed ≥ 0".into()));
    }
    Ok(s)
}

/// Writes `run_header.txt`: version, seed, config digest, command and time.
fn write_header(dir: &Path, seed: u64, config: &str, command: &str) -> Result<()> {
    let digest = Sha256::digest(config.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let text = format!(
        "version={}\nseed={seed}\nconfig_sha256={hex}\ncommand={command}\ntimestamp={now}\n",
        env!("CARGO_PKG_VERSION")
    );
    let p = dir.join("run_header.txt");
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
}
