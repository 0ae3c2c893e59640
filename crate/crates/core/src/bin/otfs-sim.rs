use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use otfs_core::equalizer::Equalizer;
use otfs_core::metrics::CsiMode;
use otfs_core::sim::{export, run_sweep_with_threads, GridPoint, SweepConfig, TrialContext};
use otfs_core::{Error, Scheme};
use serde::Serialize;

/// Monte Carlo link simulator for delay-Doppler pilot designs.
#[derive(Parser, Debug)]
#[command(name = "otfs-sim", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Overrides {
    /// JSON sweep configuration; unspecified fields use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Trials per grid point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Base seed; trial i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated energy splits.
    #[arg(long, global = true, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, global = true)]
    snr_db: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full grid and write sweep.csv, summary.json and run.json.
    Sweep {
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
    },
    /// Run one frame and print a per-pass trace.
    Trial {
        #[arg(long, default_value = "s1d")]
        scheme: Scheme,
        #[arg(long, default_value = "mrc")]
        equalizer: Equalizer,
        #[arg(long, default_value_t = 0.4)]
        alpha: f64,
        /// Estimation passes (1 disables iteration).
        #[arg(long, default_value_t = 1)]
        passes: usize,
        /// Use the true channel instead of estimating it.
        #[arg(long)]
        ideal_csi: bool,
    },
    /// Check the configuration and exit.
    Validate,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    crate_version: &'static str,
    threads: usize,
    wall_time_s: f64,
    grid_points: usize,
    trials_per_point: usize,
    outputs: Vec<String>,
    config: &'a SweepConfig,
}

fn load(o: &Overrides) -> Result<SweepConfig, Error> {
    let mut cfg = match &o.config {
        Some(p) => SweepConfig::from_json_file(p)?,
        None => SweepConfig::default(),
    };
    if let Some(t) = o.trials {
        cfg.trials = t;
    }
    if let Some(s) = o.seed {
        cfg.base_seed = s;
    }
    if let Some(a) = &o.alphas {
        cfg.alphas = a.clone();
    }
    if let Some(s) = o.snr_db {
        cfg.snr_db = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load(&cli.overrides)?;
    let threads = cli
        .overrides
        .threads
        .unwrap_or_else(rayon::current_num_threads);
    match cli.command {
        Command::Validate => {
            println!(
                "config ok: {} grid points x {} trials",
                cfg.grid().len(),
                cfg.trials
            );
        }
        Command::Sweep { output_dir } => {
            let start = Instant::now();
            let result = run_sweep_with_threads(&cfg, threads)?;
            let wall = start.elapsed().as_secs_f64();
            let paths = export(&result, &output_dir)?;
            let mut outputs = vec![
                paths.csv.display().to_string(),
                paths.summary.display().to_string(),
            ];
            if let Some(r) = &paths.records {
                outputs.push(r.display().to_string());
            }
            let manifest = RunManifest {
                crate_version: env!("CARGO_PKG_VERSION"),
                threads,
                wall_time_s: wall,
                grid_points: result.points.len(),
                trials_per_point: cfg.trials,
                outputs,
                config: &cfg,
            };
            let run_json = output_dir.join("run.json");
            let text = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
                path: run_json.clone(),
                source,
            })?;
            std::fs::write(&run_json, text).map_err(|source| Error::Io {
                path: run_json.clone(),
                source,
            })?;
            println!(
                "{:<5} {:<6} {:>2} {:<9} {:>5} {:>11} {:>11} {:>8} {:>7}",
                "sch", "eq", "p", "csi", "alpha", "nmse", "ber", "papr_dB", "se"
            );
            for p in &result.points {
                println!(
                    "{:<5} {:<6} {:>2} {:<9} {:>5.2} {:>11.4e} {:>11.4e} {:>8.3} {:>7.4}",
                    p.scheme,
                    p.equalizer,
                    p.passes,
                    p.csi,
                    p.alpha,
                    p.nmse.mean,
                    p.ber.mean,
                    p.papr_mean_db,
                    p.se.mean
                );
            }
            println!("wrote {} in {wall:.1} s", output_dir.display());
        }
        Command::Trial {
            scheme,
            equalizer,
            alpha,
            passes,
            ideal_csi,
        } => {
            let point = GridPoint {
                scheme,
                equalizer,
                passes,
                csi: if ideal_csi {
                    CsiMode::Ideal
                } else {
                    CsiMode::Estimated
                },
                alpha,
            };
            let mut check = cfg.clone();
            check.alphas = vec![alpha];
            check.validate()?;
            if passes == 0 {
                return Err(Error::Config(vec!["passes must be at least 1".into()]));
            }
            let ctx = TrialContext::new(&cfg, point)?;
            let seed = cfg.base_seed;
            let (record, trace) = ctx.run_traced(seed)?;
            println!(
                "seed {seed}  {scheme} {equalizer} alpha={alpha} csi={}",
                point.csi
            );
            println!(
                "omp threshold {:.4}  data energy/cell {:.4}  channel noise var {:.4e}  receiver noise var {:.4e}",
                ctx.receiver.omp_threshold(),
                ctx.receiver.layout.data_energy,
                cfg.noise_variance(),
                cfg.receiver_noise_variance()
            );
            for (i, p) in trace.iter().enumerate() {
                println!(
                    "pass {}: nmse {:.4e}  support {}  bit errors {}  eq iterations {}  converged {}",
                    i + 1,
                    p.nmse,
                    p.support,
                    p.bit_errors,
                    p.iterations,
                    p.converged
                );
            }
            println!(
                "ber {:.4e}  papr {:.3} dB  se {:.4}",
                record.ber, record.papr_db, record.se
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(v)) => {
            eprintln!("invalid configuration:");
            for msg in v {
                eprintln!("  - {msg}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
