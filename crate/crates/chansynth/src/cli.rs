//! Command-line surface.
//!
//! One subcommand per pipeline stage: dataset generation, model training,
//! sampling, parameter extraction, distribution metrics, loss-surface sweeps
//! and compression cross-evaluation. Every invocation writes a
//! `<out>.manifest.json` recording the resolved configuration, inputs,
//! outputs and tool version; re-running with the flags from a manifest
//! reproduces the outputs. Exit codes: 0 success, 2 validation error,
//! 3 numeric failure, 4 I/O or file-format error. Partially written outputs
//! are removed when a command fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::compressor::{cross_eval, CompressorConfig};
use crate::datasets::{
    denormalize, generate_dataset, read_dataset, write_dataset, write_params_sidecar,
    ChannelDataset, ScenarioSpec,
};
use crate::error::{Error, Result};
use crate::genmodel::{
    extract_params, sample_channels, train, Checkpoint, VaeConfig, VaeMode,
};
use crate::landscape::{compute_surface, count_strict_local_minima, gradient_magnitude_stats};
use crate::metrics::{mmd_rbf, nmse, vectorize, w2_gaussian};
use crate::ppgc::PathParams;

#[derive(Parser)]
#[command(
    name = "chansynth",
    version,
    about = "Geometry-grounded mmWave channel synthesis and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Linearized,
    Direct,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    W2,
    Mmd,
    Nmse,
    All,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a channel dataset from a scenario spec (JSON).
    GenDataset {
        /// Scenario spec file: array geometry, seed, per-path ranges.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        count: usize,
        /// Overrides the seed stored in the spec file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output dataset path (CHM1 binary).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a generative model on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Gain-matrix resolution (linearized mode).
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value_t = 64)]
        latent: usize,
        /// Encoder hidden widths, mirrored by the decoder.
        #[arg(long, value_delimiter = ',', default_values_t = [512, 256])]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// KL divergence weight.
        #[arg(long, default_value_t = 1e-3)]
        alpha_d: f64,
        /// Gain-matrix L1 weight (linearized mode).
        #[arg(long, default_value_t = 1e-4)]
        alpha_s: f64,
        /// Number of predicted paths (required in direct mode).
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output checkpoint path (CKP1 binary); a loss CSV lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample channels from a trained model into a CHM1 dataset.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample from a trained model and emit per-sample path parameters.
    ExtractParams {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        count: usize,
        /// Keep gain-matrix entries above this fraction of the largest.
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSON: one parameter list per sample.
        #[arg(long)]
        out: PathBuf,
    },
    /// Distribution / reconstruction metrics between two datasets.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        metric: MetricArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loss-surface sweep over antenna counts.
    Landscape {
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 16, 64])]
        antennas: Vec<usize>,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// Reference arrival/departure angle (radians).
        #[arg(long, default_value_t = 1.0)]
        theta_ref: f64,
        /// Angle range as `lo,hi`; defaults to the principal branch.
        #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        #[arg(long, default_value_t = 8)]
        bins: usize,
        /// Output stem: `<out>_n{N}.csv` per antenna count plus `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compression cross-evaluation over named datasets.
    CompressEval {
        /// Training sets as `name=path`, comma separated or repeated.
        #[arg(long, value_delimiter = ',', required = true)]
        train: Vec<String>,
        /// Test sets as `name=path`, comma separated or repeated.
        #[arg(long, value_delimiter = ',', required = true)]
        test: Vec<String>,
        #[arg(long, default_value_t = 32)]
        code_dim: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [256])]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output stem: `<out>.csv` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses CLI arguments from the process environment and runs the command.
pub fn run() -> i32 {
    run_from(std::env::args())
}

/// Testable entry point; returns the process exit code.
pub fn run_from<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let started = Instant::now();
    let mut tracker = OutputTracker::default();
    match execute(&cli.cmd, &mut tracker) {
        Ok(outcome) => {
            let manifest = RunManifest {
                subcommand: outcome.subcommand,
                config: outcome.config,
                seed: outcome.seed,
                inputs: paths_to_strings(&outcome.inputs),
                outputs: paths_to_strings(&tracker.written),
                version: env!("CARGO_PKG_VERSION").to_string(),
                duration_seconds: started.elapsed().as_secs_f64(),
            };
            let manifest_path = append_ext(&outcome.manifest_stem, "manifest.json");
            match serde_json::to_vec_pretty(&manifest)
                .map_err(Error::from)
                .and_then(|bytes| fs::write(&manifest_path, bytes).map_err(Error::from))
            {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e}");
                    tracker.cleanup();
                    let _ = fs::remove_file(&manifest_path);
                    e.exit_code()
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            tracker.cleanup();
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    version: String,
    duration_seconds: f64,
}

struct Outcome {
    subcommand: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    manifest_stem: PathBuf,
}

/// Records output paths before they are written so a failed command can
/// remove its partial artifacts.
#[derive(Default)]
struct OutputTracker {
    written: Vec<PathBuf>,
}

impl OutputTracker {
    fn track(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        self.track(path);
        fs::write(path, bytes)?;
        Ok(())
    }

    fn cleanup(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

fn paths_to_strings(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn append_ext(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

fn read_raw_dataset(path: &Path) -> Result<ChannelDataset> {
    let ds = read_dataset(path)?;
    Ok(if ds.scale != 1.0 { denormalize(&ds) } else { ds })
}

fn parse_named_paths(entries: &[String], what: &str) -> Result<Vec<(String, PathBuf)>> {
    entries
        .iter()
        .map(|entry| {
            entry
                .split_once('=')
                .map(|(name, path)| (name.to_string(), PathBuf::from(path)))
                .ok_or_else(|| {
                    Error::validation(format!(
                        "--{what}: expected name=path, got {entry:?}"
                    ))
                })
        })
        .collect()
}

fn execute(cmd: &Cmd, tracker: &mut OutputTracker) -> Result<Outcome> {
    match cmd {
        Cmd::GenDataset {
            spec,
            count,
            seed,
            out,
        } => {
            let mut scenario = ScenarioSpec::from_json_file(spec)?;
            if let Some(seed) = seed {
                scenario.seed = *seed;
            }
            let ds = generate_dataset(&scenario, *count)?;
            tracker.track(out);
            write_dataset(&ds, out)?;
            tracker.track(&append_ext(out, "params.json"));
            write_params_sidecar(&ds, out)?;
            Ok(Outcome {
                subcommand: "gen-dataset".into(),
                config: serde_json::json!({
                    "spec": scenario,
                    "count": count,
                }),
                seed: Some(scenario.seed),
                inputs: vec![spec.clone()],
                manifest_stem: out.clone(),
            })
        }
        Cmd::Train {
            dataset,
            mode,
            resolution,
            latent,
            hidden,
            epochs,
            batch,
            lr,
            alpha_d,
            alpha_s,
            paths,
            seed,
            out,
        } => {
            if *mode == ModeArg::Direct && paths.is_none() {
                return Err(Error::validation("--mode direct requires --paths"));
            }
            let config = VaeConfig {
                mode: match mode {
                    ModeArg::Linearized => VaeMode::Linearized,
                    ModeArg::Direct => VaeMode::Direct,
                },
                latent_dim: *latent,
                hidden: hidden.clone(),
                alpha_d: *alpha_d,
                alpha_s: *alpha_s,
                resolution: *resolution,
                theta_min: -std::f64::consts::FRAC_PI_2,
                theta_max: std::f64::consts::FRAC_PI_2,
                paths: *paths,
                epochs: *epochs,
                batch_size: *batch,
                learning_rate: *lr,
                seed: *seed,
            };
            let ds = read_raw_dataset(dataset)?;
            let ckpt = train(&ds, &config)?;
            tracker.track(out);
            ckpt.save(out)?;
            let mut csv = String::from("epoch,loss\n");
            for (epoch, loss) in ckpt.loss_history.iter().enumerate() {
                csv.push_str(&format!("{epoch},{loss}\n"));
            }
            tracker.write(&append_ext(out, "loss.csv"), csv.as_bytes())?;
            Ok(Outcome {
                subcommand: "train".into(),
                config: serde_json::to_value(&config)?,
                seed: Some(*seed),
                inputs: vec![dataset.clone()],
                manifest_stem: out.clone(),
            })
        }
        Cmd::Sample {
            model,
            count,
            seed,
            out,
        } => {
            let ckpt = Checkpoint::load(model)?;
            let (ds, _) = sample_channels(&ckpt, *count, *seed)?;
            tracker.track(out);
            write_dataset(&ds, out)?;
            if ds.params.is_some() {
                tracker.track(&append_ext(out, "params.json"));
                write_params_sidecar(&ds, out)?;
            }
            Ok(Outcome {
                subcommand: "sample".into(),
                config: serde_json::json!({
                    "model": model.display().to_string(),
                    "count": count,
                    "model_config": ckpt.config,
                }),
                seed: Some(*seed),
                inputs: vec![model.clone()],
                manifest_stem: out.clone(),
            })
        }
        Cmd::ExtractParams {
            model,
            count,
            threshold,
            seed,
            out,
        } => {
            if *threshold < 0.0 {
                return Err(Error::validation("--threshold must be non-negative"));
            }
            let ckpt = Checkpoint::load(model)?;
            let (ds, gains) = sample_channels(&ckpt, *count, *seed)?;
            let per_sample: Vec<Vec<PathParams>> = match ckpt.config.mode {
                VaeMode::Linearized => {
                    let dict_config = ckpt.config.dictionary_config(ckpt.array);
                    gains
                        .unwrap()
                        .iter()
                        .map(|w| extract_params(w, &dict_config, *threshold))
                        .collect()
                }
                // Direct checkpoints already decode parameters.
                VaeMode::Direct => ds.params.clone().unwrap(),
            };
            tracker.write(out, &serde_json::to_vec_pretty(&per_sample)?)?;
            Ok(Outcome {
                subcommand: "extract-params".into(),
                config: serde_json::json!({
                    "model": model.display().to_string(),
                    "count": count,
                    "threshold": threshold,
                    "model_config": ckpt.config,
                }),
                seed: Some(*seed),
                inputs: vec![model.clone()],
                manifest_stem: out.clone(),
            })
        }
        Cmd::Metrics {
            a,
            b,
            metric,
            out,
        } => {
            let ds_a = read_raw_dataset(a)?;
            let ds_b = read_raw_dataset(b)?;
            if ds_a.shape() != ds_b.shape() {
                return Err(Error::validation(format!(
                    "shape mismatch between files: {:?} vs {:?}",
                    ds_a.shape(),
                    ds_b.shape()
                )));
            }
            let set_a = vectorize(&ds_a);
            let set_b = vectorize(&ds_b);

            #[derive(Serialize)]
            struct MetricResult {
                metric: &'static str,
                value: f64,
                count_a: usize,
                count_b: usize,
                dim: usize,
            }
            let mut results = Vec::new();
            let mut push = |name: &'static str, value: f64| {
                results.push(MetricResult {
                    metric: name,
                    value,
                    count_a: set_a.count(),
                    count_b: set_b.count(),
                    dim: set_a.dim(),
                });
            };
            if matches!(metric, MetricArg::W2 | MetricArg::All) {
                push("w2", w2_gaussian(&set_a, &set_b)?);
            }
            if matches!(metric, MetricArg::Mmd | MetricArg::All) {
                push("mmd", mmd_rbf(&set_a, &set_b)?);
            }
            if matches!(metric, MetricArg::Nmse | MetricArg::All) {
                if ds_a.len() != ds_b.len() {
                    return Err(Error::validation(format!(
                        "NMSE pairs samples, but counts differ: {} vs {}",
                        ds_a.len(),
                        ds_b.len()
                    )));
                }
                let mut total = 0.0;
                for (h, h_hat) in ds_a.samples.iter().zip(&ds_b.samples) {
                    total += nmse(h, h_hat)?;
                }
                push("nmse", total / ds_a.len() as f64);
            }
            tracker.write(out, &serde_json::to_vec_pretty(&results)?)?;
            Ok(Outcome {
                subcommand: "metrics".into(),
                config: serde_json::json!({
                    "a": a.display().to_string(),
                    "b": b.display().to_string(),
                    "metric": match metric {
                        MetricArg::W2 => "w2",
                        MetricArg::Mmd => "mmd",
                        MetricArg::Nmse => "nmse",
                        MetricArg::All => "all",
                    },
                }),
                seed: None,
                inputs: vec![a.clone(), b.clone()],
                manifest_stem: out.clone(),
            })
        }
        Cmd::Landscape {
            antennas,
            grid,
            theta_ref,
            range,
            bins,
            out,
        } => {
            if *grid < 3 {
                return Err(Error::validation("--grid must be at least 3"));
            }
            if antennas.is_empty() || antennas.iter().any(|&n| n == 0) {
                return Err(Error::validation("--antennas must be positive integers"));
            }
            let (lo, hi) = match range.as_deref() {
                Some([lo, hi]) => (*lo, *hi),
                Some(_) => unreachable!("clap enforces two values"),
                None => (
                    -std::f64::consts::FRAC_PI_2,
                    std::f64::consts::FRAC_PI_2,
                ),
            };
            if !(lo < hi) {
                return Err(Error::validation(format!("empty angle range [{lo}, {hi}]")));
            }
            let reference = PathParams {
                gain: 1.0,
                theta_a: *theta_ref,
                theta_d: *theta_ref,
            };

            #[derive(Serialize)]
            struct SurfaceSummary {
                antennas: usize,
                grid: usize,
                minima_count: usize,
                gradient_bins: Vec<crate::landscape::GradientBin>,
            }
            let mut summaries = Vec::new();
            for &n in antennas {
                let array = crate::ppgc::ArrayConfig::new(n, n);
                let surface = compute_surface(&reference, &array, *grid, (lo, hi));
                let mut csv = String::from("theta_a,theta_d,loss\n");
                for a in 0..*grid {
                    for d in 0..*grid {
                        csv.push_str(&format!(
                            "{},{},{}\n",
                            surface.axis[a],
                            surface.axis[d],
                            surface.values.get(a, d)
                        ));
                    }
                }
                let csv_path = {
                    let mut name = out.as_os_str().to_os_string();
                    name.push(format!("_n{n}.csv"));
                    PathBuf::from(name)
                };
                tracker.write(&csv_path, csv.as_bytes())?;
                summaries.push(SurfaceSummary {
                    antennas: n,
                    grid: *grid,
                    minima_count: count_strict_local_minima(&surface),
                    gradient_bins: gradient_magnitude_stats(&surface, *bins),
                });
            }
            tracker.write(&append_ext(out, "json"), &serde_json::to_vec_pretty(&summaries)?)?;
            Ok(Outcome {
                subcommand: "landscape".into(),
                config: serde_json::json!({
                    "antennas": antennas,
                    "grid": grid,
                    "theta_ref": theta_ref,
                    "range": [lo, hi],
                    "bins": bins,
                }),
                seed: None,
                inputs: vec![],
                manifest_stem: out.clone(),
            })
        }
        Cmd::CompressEval {
            train,
            test,
            code_dim,
            hidden,
            epochs,
            batch,
            lr,
            seed,
            out,
        } => {
            let train_named = parse_named_paths(train, "train")?;
            let test_named = parse_named_paths(test, "test")?;
            let mut inputs = Vec::new();
            let load = |named: &[(String, PathBuf)],
                        inputs: &mut Vec<PathBuf>|
             -> Result<Vec<(String, ChannelDataset)>> {
                named
                    .iter()
                    .map(|(name, path)| {
                        inputs.push(path.clone());
                        Ok((name.clone(), read_raw_dataset(path)?))
                    })
                    .collect()
            };
            let train_sets = load(&train_named, &mut inputs)?;
            let test_sets = load(&test_named, &mut inputs)?;
            let config = CompressorConfig {
                code_dim: *code_dim,
                hidden: hidden.clone(),
                epochs: *epochs,
                batch_size: *batch,
                learning_rate: *lr,
                seed: *seed,
            };
            let table = cross_eval(&train_sets, &test_sets, &config)?;
            tracker.write(&append_ext(out, "csv"), table.to_csv().as_bytes())?;
            tracker.write(&append_ext(out, "json"), &serde_json::to_vec_pretty(&table)?)?;
            Ok(Outcome {
                subcommand: "compress-eval".into(),
                config: serde_json::json!({
                    "train": train,
                    "test": test,
                    "compressor": config,
                }),
                seed: Some(*seed),
                inputs,
                manifest_stem: out.clone(),
            })
        }
    }
}
