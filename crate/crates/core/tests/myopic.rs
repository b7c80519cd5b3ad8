mod common;

use common::{pair_problem, random_problem};
use momenta_core::myopic::{
    choose_aggression, error_bound, myopic_rate, myopic_value, uniform_bound, AggressiveOffset,
    BranchRule, LinearCost, Mode, MyopicContext, PowerCost, QuadraticCost,
};
use momenta_core::schedule::{ExecutionProblem, Schedule};
use momenta_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one(p: f64, ctx: &MyopicContext) -> momenta_core::myopic::AggressionDecision {
    choose_aggression(ctx, &DVector::from_element(1, p)).unwrap()[0]
}

#[test]
fn worked_examples() {
    let ctx = MyopicContext::uniform(1, 1.0, 0.01, 0.5).unwrap();
    assert!((ctx.threshold(0) - 0.04).abs() < 1e-15);
    let d = one(0.03, &ctx);
    assert_eq!(d.mode, Mode::Passive);
    assert!((d.effective_alpha - 0.042426).abs() < 1e-6);
    let d = one(0.05, &ctx);
    assert_eq!(d.mode, Mode::Aggressive);
    assert!((d.effective_alpha - 0.06).abs() < 1e-15);
    let d = one(-0.05, &ctx);
    assert_eq!(d.mode, Mode::Aggressive);
    assert!((d.effective_alpha + 0.06).abs() < 1e-15);
    let lit = ctx.clone().with_offset(AggressiveOffset::Literal);
    assert!((one(-0.05, &lit).effective_alpha + 0.04).abs() < 1e-15);
    assert_eq!(one(0.0, &ctx).mode, Mode::Wait);
}

#[test]
fn rates_for_common_costs() {
    let p = DVector::from_vec(vec![0.08, -0.02, 0.0]);
    let v = myopic_rate(&p, &QuadraticCost { eta: 0.5 }).unwrap();
    assert_eq!(v, DVector::from_vec(vec![0.16, -0.04, 0.0]));
    // quartic: a v³ = p
    let v = myopic_rate(
        &p,
        &PowerCost {
            coef: 2.0,
            exponent: 4.0,
        },
    )
    .unwrap();
    for i in 0..3 {
        let want = p[i].signum() * (p[i].abs() / 2.0).cbrt();
        assert!(
            (v[i] - if p[i] == 0.0 { 0.0 } else { want }).abs() < 1e-12,
            "{i}: {}",
            v[i]
        );
    }
    let inside = DVector::from_vec(vec![0.005, -0.009]);
    assert_eq!(
        myopic_rate(&inside, &LinearCost { rate: 0.01 }).unwrap(),
        DVector::zeros(2)
    );
    let outside = DVector::from_vec(vec![0.02]);
    assert!(matches!(
        myopic_rate(&outside, &LinearCost { rate: 0.01 }),
        Err(Error::Unbounded(_))
    ));
}

#[test]
fn decision_flips_exactly_at_the_threshold() {
    for rule in [BranchRule::CommonRate, BranchRule::IndependentOptima] {
        for s in [1e-4, 1e-3, 0.01, 0.05, 0.2] {
            for f in [0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
                let ctx = MyopicContext::uniform(1, 1.3, s, f)
                    .unwrap()
                    .with_rule(rule);
                let thr = ctx.threshold(0);
                for sign in [1.0, -1.0] {
                    let below = one(sign * thr * (1.0 - 1e-12), &ctx);
                    let above = one(sign * thr * (1.0 + 1e-12), &ctx);
                    assert_eq!(
                        below.mode,
                        Mode::Passive,
                        "{rule:?} s={s} f={f} sign={sign}"
                    );
                    assert_eq!(
                        above.mode,
                        Mode::Aggressive,
                        "{rule:?} s={s} f={f} sign={sign}"
                    );
                }
            }
        }
    }
}

#[test]
fn decisions_match_direct_objective_comparison() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for rule in [BranchRule::CommonRate, BranchRule::IndependentOptima] {
        for _ in 0..10_000 {
            let eta = rng.random_range(0.01..10.0);
            let s = rng.random_range(0.0..0.1);
            let f = rng.random_range(0.01..0.99);
            let p: f64 = rng.random_range(-0.5..0.5);
            let ctx = MyopicContext::uniform(1, eta, s, f)
                .unwrap()
                .with_rule(rule);
            let a = p.abs();
            let (passive, aggressive) = match rule {
                BranchRule::CommonRate => {
                    (f * a * a / (2.0 * eta), a * a / (2.0 * eta) - s * a / eta)
                }
                BranchRule::IndependentOptima => {
                    let net = (a - s).max(0.0);
                    (f * a * a / (2.0 * eta), net * net / (2.0 * eta))
                }
            };
            let want = if passive <= 0.0 && aggressive <= 0.0 {
                Mode::Wait
            } else if aggressive > passive {
                Mode::Aggressive
            } else {
                Mode::Passive
            };
            let d = one(p, &ctx);
            let margin =
                (passive - aggressive).abs() / passive.abs().max(aggressive.abs()).max(1e-300);
            if margin > 1e-12 {
                assert_eq!(d.mode, want, "{rule:?} eta={eta} s={s} f={f} p={p}");
            }
            assert!((d.passive_objective - passive).abs() <= 1e-12 * (1.0 + passive.abs()));
            assert!(
                (d.aggressive_objective - aggressive).abs() <= 1e-12 * (1.0 + aggressive.abs())
            );
        }
    }
}

#[test]
fn error_bound_dominates_the_gap() {
    let p = pair_problem();
    let s = Schedule::new(p.clone()).unwrap();
    let lam = p.impact.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for a in 0..20 {
        let t = 0.95 * p.horizon * a as f64 / 19.0;
        for _ in 0..20 {
            let q = DVector::from_fn(2, |i, _| {
                let (x, y) = (p.initial[i], p.target[i]);
                x.min(y) + rng.random_range(0.0..1.0) * (x - y).abs()
            });
            let bound = error_bound(&p, t, &q);
            assert!(bound.in_domain);
            let seg = s.restart(t, &q).unwrap();
            let v = s.value_closed_form(t, &q).unwrap();
            let w = myopic_value(|u| seg.momentum(u), &lam, t, p.horizon).unwrap();
            let gap = v.abs() - w;
            let margin = 1e-9 * (1.0 + v.abs());
            assert!(gap >= -margin, "t={t} q={q:?}: gap {gap}");
            assert!(
                gap <= bound.value + margin,
                "t={t}: gap {gap} bound {}",
                bound.value
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 400);
}

#[test]
fn bound_flags_points_outside_the_box() {
    let p = pair_problem();
    let outside = DVector::from_vec(vec![2.0 * p.initial[0], 0.0]);
    assert!(!error_bound(&p, 0.0, &outside).in_domain);
}

#[test]
fn uniform_bound_for_the_reference_pair() {
    let (s1, s2, rho) = (0.015, 0.02, 0.6);
    let cov = DMatrix::from_row_slice(2, 2, &[s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2]);
    let p = ExecutionProblem::new(
        DVector::from_vec(vec![2000.0, 2000.0]),
        DVector::zeros(2),
        1.0,
        cov,
        1.0152e-5,
        DVector::from_element(2, 1e-4),
    )
    .unwrap();
    let b = uniform_bound(&p);
    assert!((b - 0.01999).abs() <= 0.05 * 0.01999, "{b}");
}

#[test]
fn bound_is_largest_at_the_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let mut p = random_problem(2, &mut rng);
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(0.0..1.0));
        p.covariance = &a * a.transpose() + DMatrix::identity(2, 2) * 0.1;
        let u = uniform_bound(&p);
        let t = rng.random_range(0.0..p.horizon);
        let q = DVector::from_fn(2, |i, _| {
            let (x, y) = (p.initial[i], p.target[i]);
            x.min(y) + rng.random_range(0.0..1.0) * (x - y).abs()
        });
        assert!(error_bound(&p, t, &q).value <= u * (1.0 + 1e-12));
    }
}

proptest! {
    #[test]
    fn quadratic_rate_is_linear(p in -10.0f64..10.0, c in 0.01f64..100.0, eta in 0.01f64..10.0) {
        let cost = QuadraticCost { eta };
        let a = myopic_rate(&DVector::from_element(1, c * p), &cost).unwrap()[0];
        let b = myopic_rate(&DVector::from_element(1, p), &cost).unwrap()[0];
        prop_assert!((a - c * b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn power_rate_is_homogeneous(p in 0.01f64..10.0, c in 0.1f64..10.0, k in 1.5f64..4.0) {
        let cost = PowerCost { coef: 1.0, exponent: k };
        let a = myopic_rate(&DVector::from_element(1, c * p), &cost).unwrap()[0];
        let b = myopic_rate(&DVector::from_element(1, p), &cost).unwrap()[0];
        let want = c.powf(1.0 / (k - 1.0)) * b;
        prop_assert!((a - want).abs() <= 1e-8 * want.abs());
    }

    #[test]
    fn mode_is_invariant_under_joint_scaling(
        p in -0.5f64..0.5, s in 0.0f64..0.1, f in 0.01f64..0.99, c in 0.1f64..10.0, eta in 0.01f64..10.0,
    ) {
        let a = MyopicContext::uniform(1, eta, s, f).unwrap();
        let b = MyopicContext::uniform(1, eta, c * s, f).unwrap();
        let thr = a.threshold(0);
        prop_assume!((p.abs() - thr).abs() > 1e-9 * thr.max(1e-12));
        prop_assert_eq!(one(p, &a).mode, one(c * p, &b).mode);
    }

    #[test]
    fn passive_alpha_scales_by_root_fill_prob(p in -1.0f64..1.0, f in 0.01f64..0.99) {
        let ctx = MyopicContext::uniform(1, 1.0, 10.0, f).unwrap();
        let d = one(p, &ctx);
        prop_assume!(d.mode == Mode::Passive);
        prop_assert!((d.effective_alpha - p / f.sqrt()).abs() <= 1e-12 * (1.0 + p.abs()));
    }
}
