use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use stackcharge::config::RlPreset;
use stackcharge_cli as cmd;

#[derive(Parser)]
#[command(
    name = "stackcharge",
    about = "AMR charging strategies in a block stacking warehouse"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// fixed[:UPPER], highlow[:LOWER]:UPPER, opportunity or rl.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long, value_enum)]
    interrupt: Option<Toggle>,
    /// Comma-separated week indices.
    #[arg(long, value_delimiter = ',')]
    weeks: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write the event trace next to the metrics.
    #[arg(long)]
    trace: bool,
}

impl Common {
    fn interrupt(&self) -> Option<bool> {
        self.interrupt.map(|t| matches!(t, Toggle::On))
    }

    fn resolve(&self) -> Result<stackcharge::RunConfig> {
        let ov = cmd::Overrides {
            seed: self.seed,
            strategy: self.strategy.clone(),
            interrupt: self.interrupt(),
            weeks: self.weeks.clone(),
            trace: self.trace,
        };
        cmd::resolve(self.config.as_deref(), &ov)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy on the selected weeks.
    Simulate(Common),
    /// Run the heuristic grid, with and without interrupt.
    Sweep(Common),
    /// Train a PPO charging policy.
    Train {
        #[command(flatten)]
        common: Common,
        /// Basic1, Basic2, LightShaped or FullyShaped.
        #[arg(long)]
        preset: Option<String>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint greedily, with and without interrupt.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the configured order stream and initial fill.
    GenOrders(Common),
    /// Serve the environment protocol on stdin/stdout.
    Serve(Common),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let r = cmd::simulate(&c.resolve()?, &c.out)?;
            println!(
                "avg_service_time={:.3} max_retrieval_queue={} -> {}",
                r.aggregate.avg_service_time,
                r.aggregate.max_retrieval_queue,
                c.out.display()
            );
        }
        Command::Sweep(c) => {
            let rows = cmd::sweep(&c.resolve()?, c.interrupt(), &c.out)?;
            for r in &rows {
                println!(
                    "{:<24} {:>10.2}",
                    r.strategy.label(),
                    r.metrics.avg_service_time
                );
            }
        }
        Command::Train {
            common,
            preset,
            resume,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(p) = preset {
                cfg.rl.preset = Some(RlPreset::parse(&p)?);
                cfg.apply_rl_preset();
                cfg.validate()?;
            }
            let o = cmd::train(&cfg, resume.as_deref(), &common.out)?;
            println!(
                "steps={} best_eval_service_time={:?} -> {}",
                o.last.step,
                o.best.eval_service_time,
                common.out.display()
            );
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = common.resolve()?;
            let path = checkpoint
                .or_else(|| cfg.rl.checkpoint.clone())
                .ok_or_else(|| anyhow::anyhow!("evaluate needs --checkpoint or rl.checkpoint"))?;
            for r in cmd::evaluate(&cfg, &path, common.interrupt(), &common.out)? {
                println!(
                    "interrupt={:<5} {:<10} {:>10.2}",
                    r.interrupt, r.label, r.metrics.avg_service_time
                );
            }
        }
        Command::GenOrders(c) => {
            let (orders, fill) = cmd::gen_orders(&c.resolve()?, &c.out)?;
            println!("{} {}", orders.display(), fill.display());
        }
        Command::Serve(c) => {
            let cfg = c.resolve()?;
            cmd::serve(&cfg, std::io::stdin().lock(), std::io::stdout().lock())?;
        }
    }
    Ok(())
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
