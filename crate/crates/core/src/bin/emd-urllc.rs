use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emd_urllc::chan_sim::{gen_desired_trace, gen_interference_trace};
use emd_urllc::emd::decompose;
use emd_urllc::forecast::{rmse, TrainValSplit};
use emd_urllc::harness::experiment::{allocate_window, allocation_params, predict_all, rnn_seed};
use emd_urllc::harness::{emit_report, run_experiment, ExperimentConfig};
use emd_urllc::trace_io::{
    fmt_num, read_predictions_csv, read_trace_csv, write_allocations_csv, write_imfs_csv,
    write_predictions_csv, write_string_table, write_trace_csv, PredictionTable,
};
use emd_urllc::{Error, Result};

/// Interference prediction and finite-blocklength resource allocation.
#[derive(Parser)]
#[command(name = "emd-urllc", version)]
struct Cli {
    /// Config file, or a preset name: default, table1_preset, desk_preset.
    #[arg(long, global = true, default_value = "default")]
    config: String,
    /// Override the link seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an interference trace: trace.csv.
    Simulate,
    /// Decompose a trace into IMFs: imfs.csv.
    Decompose {
        /// Trace CSV; a fresh trace is simulated when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Rolling predictions of every configured method: predictions.csv, rmse.csv.
    Predict {
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Allocate channel uses from predictions: one CSV per method and target.
    Allocate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Full Monte-Carlo experiment with report files.
    Evaluate,
}

fn load_trace(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<Vec<f64>> {
    match path {
        Some(p) => Ok(read_trace_csv(p)?.samples),
        None => Ok(gen_interference_trace(&cfg.link)?.samples),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.link.rng_seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let out = cfg.output_dir.clone();

    match cli.command {
        Command::Simulate => {
            let trace = gen_interference_trace(&cfg.link)?;
            write_trace_csv(&out.join("trace.csv"), &trace)?;
        }
        Command::Decompose { trace } => {
            let total = load_trace(&cfg, trace.as_deref())?;
            let set = decompose(&total, &cfg.sift)?;
            write_imfs_csv(&out.join("imfs.csv"), &total, &set)?;
        }
        Command::Predict { trace } => {
            let total = load_trace(&cfg, trace.as_deref())?;
            let split = TrainValSplit::from_fraction(total.len(), cfg.train_fraction)?;
            let columns = predict_all(&total, &split, &cfg, rnn_seed(cfg.link.rng_seed))?;
            let actual = total[split.train_len..].to_vec();
            let rows = columns
                .iter()
                .map(|(m, p)| Ok(vec![m.name().to_owned(), fmt_num(rmse(p, &actual)?)]))
                .collect::<Result<Vec<_>>>()?;
            write_string_table(&out.join("rmse.csv"), &["method", "rmse"], &rows)?;
            let table = PredictionTable {
                t: (split.train_len..total.len()).collect(),
                actual,
                columns,
            };
            write_predictions_csv(&out.join("predictions.csv"), &table)?;
        }
        Command::Allocate { trace, predictions } => {
            let total = read_trace_csv(&trace)?.samples;
            let table = read_predictions_csv(&predictions)?;
            let first = *table.t.first().ok_or_else(|| Error::Format {
                path: predictions.clone(),
                message: "no prediction rows".to_owned(),
            })?;
            let split = TrainValSplit::new(first, table.t.len())?;
            split.check_len(total.len())?;
            cfg.link.n_samples = total.len();
            let signal = gen_desired_trace(&cfg.link)?.samples;
            let params = allocation_params(&cfg);
            for (method, pred) in &table.columns {
                for &eps in &cfg.target_eps_list {
                    let (records, _) = allocate_window(&signal, &total, pred, &split, eps, &params)?;
                    let name = format!("alloc_{}_eps_{eps:e}.csv", method.name().to_lowercase());
                    write_allocations_csv(&out.join(name), &records)?;
                }
            }
        }
        Command::Evaluate => {
            let report = run_experiment(&cfg)?;
            if !report.failures.is_empty() {
                eprintln!(
                    "warning: {} of {} seeds failed; see manifest",
                    report.failures.len(),
                    cfg.n_seeds
                );
            }
            emit_report(&report, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
