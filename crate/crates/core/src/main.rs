use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use buchi_rl::cli::{self, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "buchi-rl",
    version,
    about = "Q-learning for LTL objectives with exact policy evaluation"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed and write learning curves.
    Train(Common),
    /// Train every point of the hyperparameter sweep.
    Sweep(Common),
    /// Evaluate the configured policy file.
    Eval(Common),
    /// Cross-check the automaton against its formula on random lassos.
    OracleCheck(Common),
    /// Export the configured policy's Markov chain as a PRISM model.
    ExportPrism(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)
        .with_context(|| format!("in {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
        cfg.oracle_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn main() -> Result<()> {
    let args = Args::parse();
    let start = Instant::now();
    match args.command {
        Command::Train(c) => {
            let (cfg, out) = load(&c)?;
            let records = cli::cmd_train(&cfg, &out)?;
            for r in &records {
                println!(
                    "seed {}: final satisfaction {:.6} (optimal {:.6}), {} steps, {:.1}s",
                    r.seed, r.final_satisfaction, r.optimal, r.steps, r.wallclock_secs
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep(c) => {
            let (cfg, out) = load(&c)?;
            for p in cli::cmd_sweep(&cfg, &out)? {
                println!(
                    "{}: median final satisfaction {:.6}, IQR {:.6}",
                    p.name,
                    p.median_final(),
                    p.iqr()
                );
            }
            println!("wrote {}", out.join("sweep.csv").display());
        }
        Command::Eval(c) => {
            let (cfg, _) = load(&c)?;
            let r = cli::cmd_eval(&cfg)?;
            println!("satisfaction_probability = {}", r.satisfaction);
            println!("expected_discounted_reward = {}", r.discounted_reward);
            println!("optimal_satisfaction_probability = {}", r.optimal);
        }
        Command::OracleCheck(c) => {
            let (cfg, _) = load(&c)?;
            let r = cli::cmd_oracle_check(&cfg)?;
            if r.samples == 0 {
                eprintln!("warning: samples = 0, nothing was checked");
            }
            println!("{}/{} lassos agree", r.agreements, r.samples);
            if let Some(w) = r.disagreements.first() {
                bail!(
                    "{} disagreements, first on stem {:?} loop {:?}",
                    r.disagreements.len(),
                    w.stem,
                    w.cycle
                );
            }
        }
        Command::ExportPrism(c) => {
            let (cfg, out) = load(&c)?;
            println!("wrote {}", cli::cmd_export_prism(&cfg, &out)?.display());
        }
    }
    eprintln!("done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
