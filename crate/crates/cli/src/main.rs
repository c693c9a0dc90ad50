//! Command-line entry point: training, evaluation and export tools.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use samba::analysis::{
    compare, default_grid, evaluate_checkpoint, export_traces, heatmap, write_compare_csv, EvalConfig, REPORT_FILE,
};
use samba::checkpoint::ModelCheckpoint;
use samba::train::{train, MetricKind, RunConfig};

#[derive(Parser)]
#[command(name = "samba", version, about = "Safe active model-based RL with GP dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write logs and checkpoints.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Disable the CVaR constraint and the exploration objective.
        #[arg(long)]
        ablation: bool,
    },
    /// Evaluate a policy checkpoint on its environment.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Fail unless the checkpoint was trained on this environment.
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        n_samples: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 30)]
        max_len: usize,
        #[arg(long)]
        stochastic: bool,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        #[arg(long, default_value_t = 0.025)]
        xi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a metric evaluated on a 2-D state grid.
    Heatmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "loo")]
        metric: String,
        #[arg(long, default_value_t = 50)]
        resolution: usize,
        #[arg(long, default_value_t = 8)]
        partitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay random real actions open loop through the model.
    ExportTraces {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        n_traces: usize,
        #[arg(long, default_value_t = 30)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the evaluation reports of several runs.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out, ablation } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if ablation {
                cfg = cfg.ablation();
            }
            print!("{}", cfg.to_toml_string()?);
            let res = train(&cfg, Some(&out))?;
            println!(
                "trained {} env-iterations on {} real samples; logs in {}",
                res.log.env_rows.len(),
                res.log.total_real_samples(),
                out.display()
            );
            if res.log.flagged {
                bail!("a policy update produced a non-finite gradient; training stopped early");
            }
        }
        Command::Evaluate { checkpoint, env, n_samples, seeds, max_len, stochastic, gamma, alpha, xi, out } => {
            let cfg = EvalConfig { n_samples, max_len, stochastic, gamma, alpha, xi };
            std::fs::create_dir_all(&out)?;
            let report = evaluate_checkpoint(&checkpoint, env.as_deref(), &cfg, &seeds, Some(&out))?;
            report.save(&out.join(REPORT_FILE))?;
            report.write_csv(&out.join("eval_report.csv"))?;
            for r in report.per_seed.iter().chain([&report.aggregate]) {
                if !(r.mean_loss.is_finite() && r.cvar.is_finite()) {
                    bail!("{}: constraint statistics are not finite", r.label);
                }
                println!(
                    "{}: samples {} TV {} TC {:.6} q50 {:.6} CVaR {:.6} exp {} cvar {}",
                    r.label,
                    r.samples,
                    r.tv,
                    r.tc,
                    r.loss_q50,
                    r.cvar,
                    mark(r.expectation_satisfied()),
                    mark(r.cvar_satisfied())
                );
            }
        }
        Command::Heatmap { model, metric, resolution, partitions, seed, out } => {
            let kind: MetricKind = metric.parse()?;
            let ck = ModelCheckpoint::load(&model)?;
            let spec = default_grid(&ck.env, resolution);
            let grid = heatmap(&ck, kind, &spec, partitions, seed, &out)?;
            println!("{} grid {}x{}, max {:.6e}", grid.metric, resolution, resolution, grid.max());
        }
        Command::ExportTraces { model, n_traces, horizon, seed, out } => {
            let ck = ModelCheckpoint::load(&model)?;
            let m = ck.to_model()?;
            let mut rng = samba::rng_from_seed(seed);
            let traces = export_traces(&m, &ck.env, n_traces, horizon, &mut rng)?;
            traces.write_csv(&out)?;
            println!("wrote {} model traces to {}", traces.model.len(), out.display());
        }
        Command::Compare { runs, out } => {
            let entries = compare(&runs)?;
            write_compare_csv(&entries, &out)?;
            for e in &entries {
                match &e.row {
                    Some(r) => println!("{}: TV {} TC {:.6} CVaR {:.6}", e.run, r.tv, r.tc, r.cvar),
                    None => println!("{}: absent", e.run),
                }
            }
        }
    }
    Ok(())
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
