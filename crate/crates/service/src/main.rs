use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use sepsislab::data::GeneratorConfig;
use sepsislab::predictor::{ModelSize, TrainConfig};
use sepsislab::uncertainty::PolicyConfig;
use sepsislab_service::commands::{self, ModelKind};
use sepsislab_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "sepsislab", version, about = "Sepsis risk with uncertainty-driven lab recommendations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        patients: usize,
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (JSON); missing fields keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a cohort under one acquisition condition and append to a CSV.
    Eval(EvalArgs),
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModelKind::Lstm)]
    model: ModelKind,
    /// Full training config (JSON); the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 16)]
    embed: usize,
    #[arg(long, default_value_t = 8)]
    attention: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long)]
    lr: Option<f64>,
    /// Most recent history steps fed to the network.
    #[arg(long, default_value_t = 10)]
    max_timesteps: usize,
    /// Ridge penalty of the logistic baseline.
    #[arg(long, default_value_t = 1e-2)]
    l2: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    condition: String,
    #[arg(long, default_value_t = 0.25)]
    budget: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Policy settings (JSON); the sample-count flags override it.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Monte-Carlo draws per prediction.
    #[arg(long)]
    mcs_samples: Option<usize>,
    /// Hypothetical draws per counterfactual estimate.
    #[arg(long)]
    counterfactual_samples: Option<usize>,
    /// Evaluate only the first N patients.
    #[arg(long)]
    limit: Option<usize>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig {
            size: ModelSize {
                embed_dim: a.embed,
                hidden_dim: a.hidden,
                layers: a.layers,
                attention_dim: a.attention,
            },
            epochs: a.epochs,
            max_timesteps: a.max_timesteps,
            ..TrainConfig::default()
        },
    };
    cfg.seed = a.seed;
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    let ck = commands::train_checkpoint(&a.data, a.model, &cfg, a.l2)?;
    if let Some(r) = &ck.train_report {
        for e in &r.epochs {
            log::info!(
                "epoch {:>3}  train loss {:.4}  val loss {:.4}  val auc {:.4}",
                e.epoch, e.train_loss, e.val_loss, e.val_auc
            );
        }
        println!("best epoch {} (val auc {:.4}); {} held out", r.best_epoch, r.best_val_auc, ck.holdout.len());
    }
    ck.write(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_eval(a: EvalArgs) -> anyhow::Result<()> {
    let mut policy: PolicyConfig = match &a.policy {
        Some(p) => read_json(p)?,
        None => PolicyConfig::default(),
    };
    policy.seed = a.seed;
    if let Some(m) = a.mcs_samples {
        policy.mcs_samples = m;
    }
    if let Some(k) = a.counterfactual_samples {
        policy.counterfactual_samples = k;
    }
    let report = commands::evaluate(&a.model, &a.cohort, &a.condition, a.budget, policy, a.limit)?;
    commands::append_report(&a.out, std::slice::from_ref(&report))?;
    commands::print_report(std::slice::from_ref(&report));
    println!(
        "{} patients, acquired {:.4} of withheld labs, {:.1}s",
        report.n_patients, report.acquired_fraction, report.runtime_seconds
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Generate { seed, patients, out, config } => {
            let cfg: GeneratorConfig = match &config {
                Some(p) => read_json(p)?,
                None => GeneratorConfig::default(),
            };
            commands::generate(seed, patients, &cfg, &out)
        }
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Serve { config, port, data_dir } => {
            // file < environment < command line
            let mut cfg = ServiceConfig::load(&config)?;
            cfg.apply_env(|k| std::env::var(k).ok())?;
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            tokio::runtime::Runtime::new()?.block_on(sepsislab_service::serve(cfg))
        }
    }
}
