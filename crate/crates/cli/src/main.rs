use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use momenta_core::harness::report::{emit_events, emit_report, RunReport};
use momenta_core::harness::{self, HarnessConfig, Seeds};
use momenta_core::sim::quotes::read_quotes;
use momenta_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "momenta",
    version,
    about = "Optimal execution schedules, simulation and replay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output` in the config, else stdout only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form schedule on a time grid.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Cox-process market simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Seed count (`100`) or list (`1,5,9`).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        policy: Option<String>,
    },
    /// Replay a quote file.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long)]
        policy: Option<String>,
    },
    /// Market making in the simulator.
    MmSim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Two policies on the same quote streams.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<String>,
        /// Replay this file instead of synthetic streams.
        #[arg(long)]
        quotes: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(HarnessConfig, Option<PathBuf>)> {
    let cfg = HarnessConfig::load(&common.config)?;
    let out = common.out.clone().or_else(|| cfg.output.clone());
    Ok((cfg, out))
}

fn seeds(cfg: &HarnessConfig, cli: Option<&str>) -> Result<Vec<u64>> {
    let parsed = cli.map(Seeds::parse).transpose()?;
    cfg.seeds(parsed.as_ref())
}

fn print_summary(report: &RunReport) -> Result<()> {
    let line = serde_json::json!({
        "policy": report.policy,
        "seed": report.seed,
        "summary": report.summary,
    });
    println!("{}", serde_json::to_string(&line)?);
    Ok(())
}

fn write_run(
    out: Option<&Path>,
    report: &RunReport,
    run: &momenta_core::sim::RunOutput,
) -> Result<()> {
    print_summary(report)?;
    if let Some(dir) = out {
        let dir = dir
            .join(&report.policy)
            .join(format!("seed-{}", report.seed));
        emit_report(report, run.state.dim(), &dir)?;
        emit_events(run, &dir)?;
    }
    Ok(())
}

fn read_quote_file(path: &Path) -> Result<Vec<momenta_core::sim::QuoteRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    read_quotes(BufReader::new(f)).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Schedule { common, steps } => {
            let (cfg, out) = load(&common)?;
            harness::require(&cfg, &["execution"])?;
            let table = harness::schedule_table(&cfg, steps)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("schedule.csv"), table)?;
                }
                None => print!("{table}"),
            }
        }
        Command::Simulate {
            common,
            seeds: s,
            policy,
        } => {
            let (cfg, out) = load(&common)?;
            harness::require(&cfg, &["sim", "venue"])?;
            let seeds = seeds(&cfg, s.as_deref())?;
            let name = harness::policy_name(&cfg, policy.as_deref(), "momenta-guided");
            for (report, run) in harness::run_simulate(&cfg, &seeds, name)? {
                write_run(out.as_deref(), &report, &run)?;
            }
        }
        Command::Replay {
            common,
            quotes,
            policy,
        } => {
            let (cfg, out) = load(&common)?;
            harness::require(&cfg, &["replay", "venue"])?;
            let q = read_quote_file(&quotes)?;
            let name = harness::policy_name(&cfg, policy.as_deref(), "momenta-guided");
            let (report, run) = harness::run_replay(&cfg, &q, name)?;
            write_run(out.as_deref(), &report, &run)?;
        }
        Command::MmSim { common, seeds: s } => {
            let (cfg, out) = load(&common)?;
            harness::require(&cfg, &["mm", "sim", "venue"])?;
            let seeds = seeds(&cfg, s.as_deref())?;
            for (report, run) in harness::run_simulate(&cfg, &seeds, "market-maker")? {
                write_run(out.as_deref(), &report, &run)?;
            }
        }
        Command::Compare {
            common,
            seeds: s,
            quotes,
        } => {
            let (cfg, out) = load(&common)?;
            harness::require(&cfg, &["execution", "replay", "venue"])?;
            let seeds = seeds(&cfg, s.as_deref())?;
            let q = quotes.as_deref().map(read_quote_file).transpose()?;
            let (base, cand, cmp) = harness::run_compare(&cfg, &seeds, q.as_deref())?;
            let text = serde_json::to_string_pretty(&cmp)?;
            println!("{text}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("comparison.json"), text + "\n")?;
                let assets = cfg.replay()?.symbols.len();
                for r in base.iter().chain(&cand) {
                    emit_report(
                        r,
                        assets,
                        &dir.join(&r.policy).join(format!("seed-{}", r.seed)),
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
