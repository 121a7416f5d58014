mod common;

use approx::assert_abs_diff_eq;
use horizonlab::analysis::{
    horizon_term, is_k_qvi_solvable, k_gap, optimal_return, random_policy_q, GapScope, TIE_TOL,
};
use horizonlab::envs::{make_needle, reference_two_step, reference_two_step_solvable, sticky_transform};
use horizonlab::mdp::{exact_policy_q, exact_return};
use horizonlab::{effective_horizon, optimal_q, q_sequence, TimedPolicy};
use proptest::prelude::*;

#[test]
fn q_tables_match_enumeration() {
    for i in 0..10 {
        let mdp = common::small_random_mdp(i, 1000 + i as u64);
        let seq = q_sequence(&mdp, mdp.horizon()).unwrap();
        for (j, q) in seq.iter().enumerate() {
            let brute = common::table(&mdp, |t, s, a| common::qk(&mdp, j + 1, t, s, a));
            assert!(common::max_diff(&brute, q) < 1e-10, "instance {i}, k = {}", j + 1);
        }
        let star = common::table(&mdp, |t, s, a| common::q_star(&mdp, t, s, a));
        assert!(common::max_diff(&star, &optimal_q(&mdp)) < 1e-10);
        assert!(seq.last().unwrap().max_abs_diff(&optimal_q(&mdp)) < 1e-10);
    }
}

#[test]
fn random_policy_q_matches_enumeration() {
    for i in 0..10 {
        let mdp = common::small_random_mdp(i, 77 + i as u64);
        let brute = common::table(&mdp, |t, s, a| common::q1(&mdp, t, s, a));
        let uniform = TimedPolicy::uniform(mdp.horizon());
        assert!(common::max_diff(&brute, &exact_policy_q(&mdp, &uniform)) < 1e-10);
        assert!(common::max_diff(&brute, &random_policy_q(&mdp)) < 1e-10);
    }
}

#[test]
fn optimal_return_matches_policy_enumeration() {
    for i in [0, 1, 2] {
        let mdp = common::small_random_mdp(i, 9 + i as u64);
        if let Some(best) = common::best_deterministic_return(&mdp, 1 << 14) {
            assert_abs_diff_eq!(best, optimal_return(&mdp), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(common::optimal_value(&mdp), optimal_return(&mdp), epsilon = 1e-10);
    }
}

#[test]
fn solvability_and_gaps_match_enumeration() {
    for i in 0..10 {
        let mdp = common::small_random_mdp(i, 500 + i as u64);
        for k in 1..=mdp.horizon() {
            let verdict = is_k_qvi_solvable(&mdp, k).unwrap();
            assert_eq!(verdict, common::solvable(&mdp, k), "instance {i}, k = {k}");
            let g = k_gap(&mdp, k, GapScope::AllStates).unwrap();
            if verdict {
                let brute = common::gap(&common::table(&mdp, |t, s, a| common::qk(&mdp, k, t, s, a)));
                match (g.value, brute) {
                    (Some(x), Some(y)) => assert_abs_diff_eq!(x, y, epsilon = 1e-10),
                    (x, y) => assert_eq!(x, y),
                }
            } else {
                assert_eq!(g.value, None);
            }
        }
        assert!(is_k_qvi_solvable(&mdp, mdp.horizon()).unwrap());
    }
}

#[test]
fn reference_ladder() {
    let r = effective_horizon(&reference_two_step(), 2, 0.95).unwrap();
    assert!(!r.entries[0].qvi_solvable);
    assert!(r.entries[1].qvi_solvable);
    assert_eq!(r.min_exact_k, Some(2));
    let g = r.entries[1].gap.unwrap();
    assert_abs_diff_eq!(g, 0.2, epsilon = 1e-12);
    assert_abs_diff_eq!(r.hbar.unwrap(), 2.0 + (1.0 / (g * g)).log2(), epsilon = 1e-12);

    let r = effective_horizon(&reference_two_step_solvable(), 2, 0.95).unwrap();
    assert_eq!(r.min_exact_k, Some(1));

    let needle = make_needle(3, 2).unwrap();
    let r = effective_horizon(&needle, 3, 0.95).unwrap();
    assert_eq!(r.min_exact_k, Some(3));
}

#[test]
fn sticky_zero_preserves_optimum() {
    for i in 0..6 {
        let mdp = common::small_random_mdp(i, 31 + i as u64);
        let sticky = sticky_transform(&mdp, 0.0).unwrap();
        assert_abs_diff_eq!(optimal_return(&sticky), optimal_return(&mdp), epsilon = 1e-10);
        let uniform = TimedPolicy::uniform(mdp.horizon());
        assert_abs_diff_eq!(exact_return(&sticky, &uniform), exact_return(&mdp, &uniform), epsilon = 1e-10);
    }
}

#[test]
fn report_invariants() {
    for i in 0..10 {
        let mdp = common::small_random_mdp(i, 4242 + i as u64);
        let r = effective_horizon(&mdp, mdp.horizon(), 0.9).unwrap();
        for e in &r.entries {
            if let (Some(h), Some(g)) = (e.hbar, e.gap) {
                assert!(r.hbar.unwrap() <= h + 1e-12);
                if g < 1.0 {
                    let base = mdp.num_actions() as f64;
                    assert_abs_diff_eq!(base.powf(h - e.k as f64) * g * g, 1.0, epsilon = 1e-12);
                }
            }
        }
        if let (Some(a), Some(x)) = (r.min_approx_k, r.min_exact_k) {
            assert!(a <= x);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn horizon_term_round_trips(k in 1usize..20, gap in 1e-6f64..1.0, na in 2usize..10) {
        let (h, clamped) = horizon_term(k, Some(gap), na);
        prop_assert!(!clamped);
        let back = (na as f64).powf(h - k as f64);
        prop_assert!((back - 1.0 / (gap * gap)).abs() <= 1e-12 * back.max(1.0));
    }

    #[test]
    fn large_gaps_clamp(k in 1usize..20, gap in 1.0f64..5.0, na in 2usize..10) {
        let (h, _) = horizon_term(k, Some(gap), na);
        prop_assert_eq!(h, k as f64);
    }

    #[test]
    fn max_contraction(
        ns in 1usize..8,
        na in 2usize..6,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<Vec<f64>> = (0..ns).map(|_| (0..na).map(|_| rng.random()).collect()).collect();
        let qh: Vec<Vec<f64>> = (0..ns).map(|_| (0..na).map(|_| rng.random()).collect()).collect();
        let w: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 1e-3).collect();
        let z: f64 = w.iter().sum();
        let max = |r: &[f64]| r.iter().cloned().fold(f64::MIN, f64::max);
        let lhs: f64 = (0..ns).map(|s| w[s] / z * (max(&qh[s]) - max(&q[s])).powi(2)).sum();
        let rhs: f64 = (0..ns)
            .map(|s| w[s] / z * (0..na).map(|a| (qh[s][a] - q[s][a]).powi(2) / na as f64).sum::<f64>())
            .sum();
        prop_assert!(lhs <= na as f64 * rhs + 1e-15);
    }

    #[test]
    fn argmax_within_tolerance(x in 0.0f64..1.0, d in 0.0f64..1e-10) {
        let row = ndarray::arr1(&[x, x - d]);
        prop_assert_eq!(horizonlab::analysis::argmax_set(row.view()), vec![0, 1]);
        prop_assert!(d < TIE_TOL);
    }
}
