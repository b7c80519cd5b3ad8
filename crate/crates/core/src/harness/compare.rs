//! Two policies on the same quote streams.

use serde::{Deserialize, Serialize};

use super::config::{CompareBlock, HarnessConfig};
use super::report::RunReport;
use super::stats::{one_sample_t, paired_t, sign_test, SignTest, TTest};
use super::{par_map, Setup};
use crate::error::{ensure, Error, Result};
use crate::sim::quotes::{stream_hash, QuoteRecord};
use crate::sim::replay_quotes;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub policy: String,
    pub mean_terminal_value: f64,
    pub mean_max_abs_beta: f64,
    pub mean_drift: f64,
    /// Drift against zero across seeds; absent with fewer than two seeds.
    pub drift_test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub stream_hashes: Vec<String>,
    /// Baseline first.
    pub arms: [ArmStats; 2],
    /// Candidate drift minus baseline drift.
    pub drift_difference: Option<TTest>,
    /// Candidate terminal value above baseline.
    pub terminal_sign_test: SignTest,
}

fn arm_stats(reports: &[RunReport]) -> Result<ArmStats> {
    let n = reports.len() as f64;
    let drift: Vec<f64> = reports.iter().map(|r| r.summary.value_drift).collect();
    Ok(ArmStats {
        policy: reports
            .first()
            .map(|r| r.policy.clone())
            .unwrap_or_default(),
        mean_terminal_value: reports
            .iter()
            .map(|r| r.summary.terminal_value)
            .sum::<f64>()
            / n,
        mean_max_abs_beta: reports.iter().map(|r| r.summary.max_abs_beta).sum::<f64>() / n,
        mean_drift: drift.iter().sum::<f64>() / n,
        drift_test: if drift.len() >= 2 {
            Some(one_sample_t(&drift)?)
        } else {
            None
        },
    })
}

/// Paired statistics for two arms run on the same seeds.
pub fn compare_reports(
    baseline: &[RunReport],
    candidate: &[RunReport],
    hashes: Vec<String>,
) -> Result<Comparison> {
    ensure!(!baseline.is_empty(), Validation, "no runs to compare");
    ensure!(
        baseline.len() == candidate.len()
            && baseline
                .iter()
                .zip(candidate)
                .all(|(a, b)| a.seed == b.seed),
        Validation,
        "arms were run on different seeds"
    );
    let drift = |r: &[RunReport]| r.iter().map(|x| x.summary.value_drift).collect::<Vec<_>>();
    let value = |r: &[RunReport]| {
        r.iter()
            .map(|x| x.summary.terminal_value)
            .collect::<Vec<_>>()
    };
    Ok(Comparison {
        seeds: baseline.iter().map(|r| r.seed).collect(),
        stream_hashes: hashes,
        arms: [arm_stats(baseline)?, arm_stats(candidate)?],
        drift_difference: if baseline.len() >= 2 {
            Some(paired_t(&drift(candidate), &drift(baseline))?)
        } else {
            None
        },
        terminal_sign_test: sign_test(&value(candidate), &value(baseline))?,
    })
}

/// Per-seed reports of both arms plus the comparison. Streams come from
/// `quotes` when given (one stream, seed 0) or from the synthetic block.
pub fn run_compare(
    cfg: &HarnessConfig,
    seeds: &[u64],
    quotes: Option<&[QuoteRecord]>,
) -> Result<(Vec<RunReport>, Vec<RunReport>, Comparison)> {
    let block = cfg.compare.clone().unwrap_or_default();
    let CompareBlock { arms } = block;
    ensure!(
        arms.len() == 2,
        Config,
        "compare.arms needs exactly two policies, got {}",
        arms.len()
    );
    let mut rc = cfg.replay()?.clone();
    if let Some(ex) = &cfg.execution {
        if rc.initial_holdings.is_empty() {
            rc.initial_holdings = ex.initial.clone();
        }
        if rc.betas.is_empty() {
            rc.betas = ex.betas.clone();
        }
    }
    let names: Vec<&str> = arms.iter().map(String::as_str).collect();
    let setup = Setup::new(cfg, rc.symbols.len(), &names)?;
    let seeds: Vec<u64> = if quotes.is_some() {
        vec![0]
    } else {
        seeds.to_vec()
    };
    let synthetic =
        if quotes.is_some() {
            None
        } else {
            Some(cfg.synthetic.as_ref().ok_or_else(|| {
                Error::Config("compare needs --quotes or a [synthetic] block".into())
            })?)
        };
    if let Some(s) = synthetic {
        ensure!(
            s.symbols == rc.symbols,
            Config,
            "synthetic.symbols must match replay.symbols"
        );
    }
    let runs = par_map(&seeds, |&seed| -> Result<(RunReport, RunReport, String)> {
        let owned;
        let stream: &[QuoteRecord] = match quotes {
            Some(q) => q,
            None => {
                owned = synthetic.expect("synthetic block").generate(seed)?;
                &owned
            }
        };
        let mut out = Vec::with_capacity(2);
        let mut hashes = Vec::with_capacity(2);
        for name in &names {
            hashes.push(stream_hash(stream));
            let mut p = setup.policy(name)?;
            let run = replay_quotes(&rc, stream, &setup.book, p.as_mut())?;
            out.push(RunReport::new(name, seed, &run));
        }
        ensure!(
            hashes[0] == hashes[1],
            Data,
            "seed {seed}: arms saw different market streams"
        );
        let b = out.pop().expect("two arms");
        let a = out.pop().expect("two arms");
        Ok((a, b, hashes.swap_remove(0)))
    });
    let mut base = Vec::new();
    let mut cand = Vec::new();
    let mut hashes = Vec::new();
    for r in runs {
        let (a, b, h) = r?;
        base.push(a);
        cand.push(b);
        hashes.push(h);
    }
    let cmp = compare_reports(&base, &cand, hashes)?;
    Ok((base, cand, cmp))
}
