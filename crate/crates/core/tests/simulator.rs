mod common;

use common::{mean_var, RawVenue, Scripted};
use momenta_core::policy::{Idle, OrderPlan};
use momenta_core::router::{Action, Side};
use momenta_core::sim::{simulate, EventKind, OrderLife, PriceModel, RunOutput, SimConfig};
use momenta_core::venue::{
    DampingSpec, Deficit, DynamicsConfig, Level, PartialFillConfig, ProbEntry, RegimeSpec,
    VenueBook, VenueConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sim_config(d: usize, horizon: f64, dt: f64, var: f64, seed: u64) -> SimConfig {
    SimConfig {
        horizon,
        dt,
        seed,
        prices: PriceModel {
            start: (0..d).map(|i| 50.0 + 10.0 * i as f64).collect(),
            covariance: (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| if i == j { var } else { 0.3 * var })
                        .collect()
                })
                .collect(),
            drift: vec![],
        },
        initial_holdings: vec![],
        betas: vec![],
        order_life: OrderLife::Persistent,
    }
}

fn uniform_book(rate: f64) -> VenueBook {
    let cfg = VenueConfig::uniform(
        "lit",
        0,
        RegimeSpec::simple(0.01, vec![1]),
        rate,
        DampingSpec::default(),
    )
    .unwrap();
    VenueBook::from_configs(&[cfg], 1).unwrap().0
}

fn unit_bid() -> Scripted<impl FnMut(&momenta_core::policy::MarketView<'_>) -> OrderPlan + Send> {
    Scripted(|_: &momenta_core::policy::MarketView<'_>| {
        let mut plan = OrderPlan::default();
        plan.push(
            0,
            0,
            Action::Limit {
                side: Side::Buy,
                level: Level::JOIN,
                volume: 1.0,
            },
        );
        plan
    })
}

fn filled_volume(out: &RunOutput) -> f64 {
    out.events
        .iter()
        .filter(|e| e.kind == EventKind::LimitFill)
        .map(|e| e.volume.unwrap())
        .sum()
}

#[test]
fn persistent_unit_order_fills_at_the_base_rate() {
    let book = uniform_book(100.0);
    let counts: Vec<f64> = (0..200)
        .map(|seed| {
            let out = simulate(
                &sim_config(1, 10.0, 0.5, 0.01, seed),
                &book,
                &mut unit_bid(),
            )
            .unwrap();
            filled_volume(&out)
        })
        .collect();
    let (m, v) = mean_var(&counts);
    let tol = 3.0 * 1000f64.sqrt() / 200f64.sqrt();
    assert!((m - 1000.0).abs() <= tol, "mean {m}, tolerance {tol}");
    assert!((700.0..=1300.0).contains(&v), "variance {v}");
}

#[test]
fn partial_fill_outcomes_follow_their_probabilities() {
    let mut cfg = VenueConfig::uniform(
        "lit",
        0,
        RegimeSpec::simple(0.01, vec![1]),
        100.0,
        DampingSpec::default(),
    )
    .unwrap();
    cfg.partial_fill = PartialFillConfig {
        omega: vec![0.5, 1.0],
        deficit: Deficit::Renormalize,
        damping: vec![],
        prob: cfg
            .partial_fill
            .prob
            .iter()
            .map(|e| ProbEntry {
                p: vec![0.2, 0.8],
                ..e.clone()
            })
            .collect(),
    };
    let book = VenueBook::from_configs(&[cfg], 1).unwrap().0;
    let (mut half, mut total, mut volume) = (0usize, 0usize, 0.0);
    for seed in 0..200 {
        let out = simulate(
            &sim_config(1, 10.0, 0.5, 0.01, seed),
            &book,
            &mut unit_bid(),
        )
        .unwrap();
        for e in out.events.iter().filter(|e| e.kind == EventKind::LimitFill) {
            let v = e.volume.unwrap();
            assert!(v == 0.5 || v == 1.0, "fill of {v}");
            half += (v == 0.5) as usize;
            total += 1;
            volume += v;
        }
    }
    let share = half as f64 / total as f64;
    assert!(
        (share - 0.2).abs() <= 0.01,
        "share of half fills {share} over {total}"
    );
    assert!((volume / total as f64 - 0.9).abs() <= 0.005);
}

fn busy_book() -> VenueBook {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cfgs = Vec::new();
    for i in 0..2 {
        for n in 0..2 {
            let raw = RawVenue::random(&mut rng, 2);
            let mut c = raw.config(&format!("v{i}{n}"), i);
            c.dynamics = Some(DynamicsConfig {
                spread_generator: Some(vec![
                    vec![-40.0, 30.0, 10.0],
                    vec![50.0, -60.0, 10.0],
                    vec![30.0, 30.0, -60.0],
                ]),
                imbalance_generator: None,
                initial_spread: 1,
                initial_imbalance: 0.0,
            });
            c.cost.market_impact = 1e-4;
            cfgs.push(c);
        }
    }
    VenueBook::from_configs(&cfgs, 2).unwrap().0
}

/// Random limit and market orders from a seeded script.
fn random_flow(
    seed: u64,
) -> Scripted<impl FnMut(&momenta_core::policy::MarketView<'_>) -> OrderPlan + Send> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Scripted(move |view: &momenta_core::policy::MarketView<'_>| {
        let mut plan = OrderPlan::default();
        for i in 0..2 {
            for n in 0..2 {
                let side = if rng.random_bool(0.5) {
                    Side::Buy
                } else {
                    Side::Sell
                };
                let volume = rng.random_range(1.0..50.0);
                let action = match rng.random_range(0..4) {
                    0 => Action::Market { side, volume },
                    1 => Action::Wait,
                    _ => {
                        let menu =
                            momenta_core::venue::allowed_levels(view.venues[i][n].spread_ticks)
                                .unwrap();
                        Action::Limit {
                            side,
                            level: menu[rng.random_range(0..menu.len())],
                            volume,
                        }
                    }
                };
                plan.push(i, n, action);
            }
        }
        plan
    })
}

fn busy_run(seed: u64, life: OrderLife) -> RunOutput {
    let mut cfg = sim_config(2, 2.0, 0.05, 0.5, seed);
    cfg.order_life = life;
    cfg.initial_holdings = vec![300.0, -200.0];
    cfg.betas = vec![1.1, 0.8];
    simulate(&cfg, &busy_book(), &mut random_flow(seed ^ 0x55)).unwrap()
}

#[test]
fn identical_seeds_give_identical_logs() {
    for life in [OrderLife::Consumed, OrderLife::Persistent] {
        let a = busy_run(4, life);
        let b = busy_run(4, life);
        assert_eq!(a.events, b.events);
        assert_eq!(a.series, b.series);
        let c = busy_run(5, life);
        assert_ne!(a.events, c.events);
    }
}

#[test]
fn the_log_reconstructs_the_accounts() {
    for seed in 0..20 {
        for life in [OrderLife::Consumed, OrderLife::Persistent] {
            let out = busy_run(seed, life);
            let mut shares = out.initial.shares.clone();
            let mut cash = out.initial.cash.clone();
            let mut marks = out.initial.mids.clone();
            let mut fills = 0;
            let mut regimes = 0;
            for e in &out.events {
                match e.kind {
                    EventKind::LimitFill | EventKind::MarketFill => {
                        let i = e.asset.unwrap();
                        let s = e.side.unwrap().sign() * e.volume.unwrap();
                        shares[i] += s;
                        cash[i] -= s * e.price.unwrap();
                        fills += 1;
                    }
                    EventKind::Mark => marks[e.asset.unwrap()] = e.price.unwrap(),
                    EventKind::Regime => regimes += 1,
                    _ => {}
                }
            }
            assert!(fills > 0 && regimes > 0);
            let gmv0: f64 = out
                .initial
                .shares
                .iter()
                .zip(&out.initial.mids)
                .map(|(q, m)| (q * m).abs())
                .sum();
            let value: f64 = (0..2).map(|i| shares[i] * marks[i] + cash[i]).sum();
            assert!(
                (value - out.state.value()).abs() <= 1e-9 * gmv0,
                "seed {seed}: {value} vs {}",
                out.state.value()
            );
            for (s, want) in shares.iter().zip(&out.state.shares) {
                assert!((s - want).abs() <= 1e-9 * gmv0);
            }
            // value = Σ q_T (m_T − m_0) − slippage
            let last = out.series.last().unwrap();
            let mtm: f64 = (0..2)
                .map(|i| shares[i] * (marks[i] - out.initial.mids[i]))
                .sum();
            assert!(
                (last.value - (mtm - last.slippage)).abs() <= 1e-9 * gmv0,
                "seed {seed}"
            );
            assert_eq!(last.value, out.state.value());
        }
    }
}

#[test]
fn limit_fills_price_off_the_mid() {
    let out = busy_run(9, OrderLife::Consumed);
    let mut mid = [f64::NAN; 2];
    for e in &out.events {
        match e.kind {
            EventKind::Mark => mid[e.asset.unwrap()] = e.price.unwrap(),
            EventKind::LimitFill => {
                let i = e.asset.unwrap();
                let side = e.side.unwrap();
                // passive buys pay below the mid unless the fee outweighs the offset
                let offset = side.sign() * (mid[i] - e.price.unwrap());
                assert!(offset > -0.01, "offset {offset}");
            }
            _ => {}
        }
    }
}

#[test]
fn idle_holdings_are_a_martingale() {
    let book = uniform_book(100.0);
    let mut idle = Idle;
    let values: Vec<f64> = (0..200)
        .map(|seed| {
            let mut cfg = sim_config(1, 1.0, 0.1, 4.0, seed);
            cfg.initial_holdings = vec![100.0];
            let out = simulate(&cfg, &book, &mut idle).unwrap();
            assert!(out.events.iter().all(|e| !e.is_fill()));
            assert_eq!(out.state.shares, vec![100.0]);
            out.state.value()
        })
        .collect();
    let (m, v) = mean_var(&values);
    // sd of one path is 100 · 2 · 1
    assert!((v.sqrt() - 200.0).abs() <= 40.0, "sd {}", v.sqrt());
    assert!(m.abs() <= 3.0 * 200.0 / 200f64.sqrt(), "mean {m}");
}

#[test]
fn invalid_orders_are_rejected_and_logged() {
    let book = uniform_book(10.0);
    let mut bad = Scripted(|_: &momenta_core::policy::MarketView<'_>| {
        let mut plan = OrderPlan::default();
        plan.push(
            0,
            3,
            Action::Market {
                side: Side::Buy,
                volume: 1.0,
            },
        );
        plan.push(
            0,
            0,
            Action::Limit {
                side: Side::Buy,
                level: Level::IMPROVE,
                volume: 1.0,
            },
        );
        plan.push(
            0,
            0,
            Action::Market {
                side: Side::Buy,
                volume: -1.0,
            },
        );
        plan
    });
    let out = simulate(&sim_config(1, 1.0, 0.5, 0.01, 0), &book, &mut bad).unwrap();
    assert_eq!(out.rejects, 9);
    assert_eq!(
        out.events
            .iter()
            .filter(|e| e.kind == EventKind::Reject)
            .count(),
        9
    );
    assert_eq!(out.state.shares, vec![0.0]);
}

#[test]
fn bad_configs_fail_cleanly() {
    let book = uniform_book(10.0);
    let mut cfg = sim_config(1, 1.0, 0.5, 0.01, 0);
    cfg.dt = 0.0;
    assert!(matches!(
        simulate(&cfg, &book, &mut Idle),
        Err(momenta_core::Error::Config(_))
    ));
    let cfg = sim_config(2, 1.0, 0.5, 0.01, 0);
    assert!(matches!(
        simulate(&cfg, &book, &mut Idle),
        Err(momenta_core::Error::Config(_))
    ));
}

#[test]
fn regime_switching_fill_counts_average_the_rates() {
    let mut cfg = VenueConfig::uniform(
        "lit",
        0,
        RegimeSpec::simple(0.01, vec![1, 2]),
        100.0,
        DampingSpec::default(),
    )
    .unwrap();
    for e in cfg
        .intensity
        .rate
        .iter_mut()
        .filter(|e| e.level == Level::JOIN)
    {
        e.rate = if e.spread == "s1" { 50.0 } else { 150.0 };
    }
    cfg.dynamics = Some(DynamicsConfig {
        spread_generator: Some(vec![vec![-500.0, 500.0], vec![500.0, -500.0]]),
        imbalance_generator: None,
        initial_spread: 1,
        initial_imbalance: 0.0,
    });
    let book = VenueBook::from_configs(&[cfg], 1).unwrap().0;
    let counts: Vec<f64> = (0..200)
        .map(|seed| {
            let out = simulate(
                &sim_config(1, 10.0, 0.5, 0.01, seed),
                &book,
                &mut unit_bid(),
            )
            .unwrap();
            filled_volume(&out)
        })
        .collect();
    let (m, v) = mean_var(&counts);
    // stationary mix is even; the start in the tight state costs 50/1000 fills
    let want = 1000.0 - 0.05;
    assert!(
        (m - want).abs() <= 3.0 * (v / 200.0).sqrt(),
        "mean {m}, sd {}",
        v.sqrt()
    );
}
