//! Experiment plumbing behind the command-line tool.

pub mod compare;
pub mod config;
pub mod impact;
pub mod report;
pub mod stats;

use std::sync::Arc;

use crate::error::{ensure, Error, Result};
use crate::mm::{mm_coefficients, MMCoefficients, MMParams};
use crate::policy::{policy_registry, Policy, PolicyContext};
use crate::schedule::Schedule;
use crate::sim::quotes::QuoteRecord;
use crate::sim::{replay_quotes, simulate, RunOutput};
use crate::venue::VenueBook;

pub use compare::{compare_reports, run_compare, Comparison};
pub use config::{HarnessConfig, Seeds};
pub use report::{emit_report, RunReport, Summary};

/// Maps `f` over `items` on scoped threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len().max(1));
    let chunk = items.len().div_ceil(threads.max(1)).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Shared, read-only pieces a run needs.
#[derive(Debug, Clone)]
pub struct Setup {
    pub book: Arc<VenueBook>,
    pub schedule: Option<Arc<Schedule>>,
    pub mm: Option<Arc<MMCoefficients>>,
    pub context: PolicyContext,
}

impl Setup {
    /// Builds the venue book for `assets` and whatever else `policy` needs.
    pub fn new(cfg: &HarnessConfig, assets: usize, policies: &[&str]) -> Result<Self> {
        let registry = policy_registry();
        for p in policies {
            ensure!(
                registry.contains(p),
                Config,
                "unknown policy '{p}' (known: {})",
                registry.names().collect::<Vec<_>>().join(", ")
            );
        }
        let (book, coverage) = VenueBook::from_configs(&cfg.venues()?, assets)?;
        for line in &coverage.lines {
            log::debug!("{line}");
        }
        let needs_schedule = policies
            .iter()
            .any(|p| matches!(*p, "always-passive" | "momenta-guided"));
        let schedule = if needs_schedule {
            let problem = cfg.execution()?.problem()?;
            ensure!(
                problem.dim() == assets,
                Config,
                "execution block has {} assets, expected {assets}",
                problem.dim()
            );
            Some(Arc::new(Schedule::new(problem)?))
        } else {
            None
        };
        let mm = if policies.contains(&"market-maker") {
            let params = MMParams::from_config(cfg.mm()?)?;
            Some(Arc::new(mm_coefficients(&params)?))
        } else {
            None
        };
        let book = Arc::new(book);
        Ok(Self {
            context: PolicyContext {
                schedule: schedule.clone(),
                book: book.clone(),
                mm: mm.clone(),
                params: cfg.policy.params.clone(),
            },
            book,
            schedule,
            mm,
        })
    }

    pub fn policy(&self, name: &str) -> Result<Box<dyn Policy>> {
        policy_registry().build(name, &self.context)
    }
}

/// Policy named on the command line, else in the file.
pub fn policy_name<'a>(cfg: &'a HarnessConfig, cli: Option<&'a str>, fallback: &'a str) -> &'a str {
    cli.or(cfg.policy.name.as_deref()).unwrap_or(fallback)
}

/// Cox simulation for each seed. Starting holdings and betas default to the
/// execution block.
pub fn run_simulate(
    cfg: &HarnessConfig,
    seeds: &[u64],
    policy: &str,
) -> Result<Vec<(RunReport, RunOutput)>> {
    let base = cfg.sim()?.clone();
    let setup = Setup::new(cfg, base.dim(), &[policy])?;
    let mut sim = base;
    if let Some(ex) = &cfg.execution {
        if sim.initial_holdings.is_empty() && policy != "market-maker" {
            sim.initial_holdings = ex.initial.clone();
        }
        if sim.betas.is_empty() {
            sim.betas = ex.betas.clone();
        }
    }
    par_map(seeds, |&seed| {
        let mut c = sim.clone();
        c.seed = seed;
        let mut p = setup.policy(policy)?;
        let out = simulate(&c, &setup.book, p.as_mut())?;
        Ok((RunReport::new(policy, seed, &out), out))
    })
    .into_iter()
    .collect()
}

/// Replay of one quote stream.
pub fn run_replay(
    cfg: &HarnessConfig,
    quotes: &[QuoteRecord],
    policy: &str,
) -> Result<(RunReport, RunOutput)> {
    let mut rc = cfg.replay()?.clone();
    let setup = Setup::new(cfg, rc.symbols.len(), &[policy])?;
    if let Some(ex) = &cfg.execution {
        if rc.initial_holdings.is_empty() {
            rc.initial_holdings = ex.initial.clone();
        }
        if rc.betas.is_empty() {
            rc.betas = ex.betas.clone();
        }
    }
    let mut p = setup.policy(policy)?;
    let out = replay_quotes(&rc, quotes, &setup.book, p.as_mut())?;
    Ok((RunReport::new(policy, 0, &out), out))
}

/// Schedule sampled on `steps + 1` points: time, positions, rates, momenta.
pub fn schedule_table(cfg: &HarnessConfig, steps: usize) -> Result<String> {
    let problem = cfg.execution()?.problem()?;
    let d = problem.dim();
    let sched = Schedule::new(problem)?;
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "v", "p"] {
        cols.extend((0..d).map(|i| format!("{prefix}{i}")));
    }
    let mut s = cols.join(",") + "\n";
    let steps = steps.max(1);
    for k in 0..=steps {
        let t = sched.horizon() * k as f64 / steps as f64;
        let mut f = vec![t.to_string()];
        for v in [sched.position(t)?, sched.velocity(t)?, sched.momenta(t)?] {
            ensure!(
                v.iter().all(|x| x.is_finite()),
                Numeric,
                "schedule is not finite at t={t}"
            );
            f.extend(v.iter().map(f64::to_string));
        }
        s.push_str(&f.join(","));
        s.push('\n');
    }
    Ok(s)
}

/// Checks a subcommand's required blocks up front.
pub fn require(cfg: &HarnessConfig, blocks: &[&str]) -> Result<()> {
    for b in blocks {
        let present = match *b {
            "execution" => cfg.execution.is_some(),
            "sim" => cfg.sim.is_some(),
            "mm" => cfg.mm.is_some(),
            "replay" => cfg.replay.is_some(),
            "venue" => !cfg.venue.is_empty() || !cfg.uniform_venue.is_empty(),
            other => return Err(Error::Config(format!("unknown block '{other}'"))),
        };
        ensure!(present, Config, "this command needs a [{b}] block");
    }
    Ok(())
}
