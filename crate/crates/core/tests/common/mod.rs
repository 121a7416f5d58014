//! Brute-force reference computations shared by the integration tests.
//!
//! Everything here recurses over explicit trajectories with no memoization
//! and no calls into the analysis module, so agreement with the library is
//! meaningful.
#![allow(dead_code)]

use horizonlab::envs::{make_random_mdp, RandomMdpConfig};
use horizonlab::{TabularMdp, TimedPolicy};

pub const TIE: f64 = 1e-9;

fn successors(mdp: &TabularMdp, t: usize, s: usize, a: usize) -> Vec<(usize, f64)> {
    mdp.successors(t, s, a)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s2, &p)| (s2, p))
        .collect()
}

fn reward(mdp: &TabularMdp, t: usize, s: usize, a: usize) -> f64 {
    mdp.reward(t)[[s, a]]
}

/// Q of the uniformly random policy, summed over every continuation.
pub fn q1(mdp: &TabularMdp, t: usize, s: usize, a: usize) -> f64 {
    let r = reward(mdp, t, s, a);
    if t + 1 == mdp.horizon() {
        return r;
    }
    let na = mdp.num_actions();
    r + successors(mdp, t, s, a)
        .into_iter()
        .map(|(s2, p)| p * (0..na).map(|a2| q1(mdp, t + 1, s2, a2)).sum::<f64>() / na as f64)
        .sum::<f64>()
}

/// `k - 1` optimal backups on top of `q1`, written as a lookahead tree.
pub fn qk(mdp: &TabularMdp, k: usize, t: usize, s: usize, a: usize) -> f64 {
    if k == 1 {
        return q1(mdp, t, s, a);
    }
    let r = reward(mdp, t, s, a);
    if t + 1 == mdp.horizon() {
        return r;
    }
    r + successors(mdp, t, s, a)
        .into_iter()
        .map(|(s2, p)| p * (0..mdp.num_actions()).map(|a2| qk(mdp, k - 1, t + 1, s2, a2)).fold(f64::MIN, f64::max))
        .sum::<f64>()
}

/// Expectimax over the full tree.
pub fn q_star(mdp: &TabularMdp, t: usize, s: usize, a: usize) -> f64 {
    let r = reward(mdp, t, s, a);
    if t + 1 == mdp.horizon() {
        return r;
    }
    r + successors(mdp, t, s, a)
        .into_iter()
        .map(|(s2, p)| p * (0..mdp.num_actions()).map(|a2| q_star(mdp, t + 1, s2, a2)).fold(f64::MIN, f64::max))
        .sum::<f64>()
}

pub fn table(mdp: &TabularMdp, f: impl Fn(usize, usize, usize) -> f64) -> Vec<Vec<Vec<f64>>> {
    (0..mdp.horizon())
        .map(|t| (0..mdp.num_states()).map(|s| (0..mdp.num_actions()).map(|a| f(t, s, a)).collect()).collect())
        .collect()
}

/// Return of a deterministic Markov policy given as `actions[t][s]`.
pub fn deterministic_return(mdp: &TabularMdp, actions: &[Vec<usize>]) -> f64 {
    fn go(mdp: &TabularMdp, actions: &[Vec<usize>], t: usize, s: usize) -> f64 {
        let a = actions[t][s];
        let r = reward(mdp, t, s, a);
        if t + 1 == mdp.horizon() {
            return r;
        }
        r + successors(mdp, t, s, a).into_iter().map(|(s2, p)| p * go(mdp, actions, t + 1, s2)).sum::<f64>()
    }
    mdp.initial().iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| p * go(mdp, actions, 0, s)).sum()
}

/// Return of an arbitrary time-indexed policy by trajectory enumeration.
pub fn policy_return(mdp: &TabularMdp, policy: &TimedPolicy) -> f64 {
    fn go(mdp: &TabularMdp, policy: &TimedPolicy, t: usize, s: usize) -> f64 {
        let na = mdp.num_actions();
        (0..na)
            .map(|a| {
                let p = policy.prob(t, s, a, na);
                if p == 0.0 {
                    return 0.0;
                }
                let cont = if t + 1 == mdp.horizon() {
                    0.0
                } else {
                    successors(mdp, t, s, a).into_iter().map(|(s2, q)| q * go(mdp, policy, t + 1, s2)).sum()
                };
                p * (reward(mdp, t, s, a) + cont)
            })
            .sum()
    }
    mdp.initial().iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| p * go(mdp, policy, 0, s)).sum()
}

/// Best return over every deterministic Markov policy. `None` when there are
/// more than `limit` of them.
pub fn best_deterministic_return(mdp: &TabularMdp, limit: u64) -> Option<f64> {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let slots = horizon * ns;
    let count = (na as u64).checked_pow(slots as u32).filter(|&c| c <= limit)?;
    let mut best = f64::MIN;
    for code in 0..count {
        let mut c = code;
        let actions: Vec<Vec<usize>> = (0..horizon)
            .map(|_| {
                (0..ns)
                    .map(|_| {
                        let a = (c % na as u64) as usize;
                        c /= na as u64;
                        a
                    })
                    .collect()
            })
            .collect();
        best = best.max(deterministic_return(mdp, &actions));
    }
    Some(best)
}

pub fn optimal_value(mdp: &TabularMdp) -> f64 {
    mdp.initial()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| p * (0..mdp.num_actions()).map(|a| q_star(mdp, 0, s, a)).fold(f64::MIN, f64::max))
        .sum()
}

fn ties(row: &[f64]) -> Vec<usize> {
    let top = row.iter().cloned().fold(f64::MIN, f64::max);
    (0..row.len()).filter(|&a| row[a] >= top - TIE).collect()
}

/// Worst return over all tie-breakings of the greedy policy on `q`.
pub fn pessimal_return(mdp: &TabularMdp, q: &[Vec<Vec<f64>>]) -> f64 {
    fn go(mdp: &TabularMdp, q: &[Vec<Vec<f64>>], t: usize, s: usize) -> f64 {
        ties(&q[t][s])
            .into_iter()
            .map(|a| {
                let cont = if t + 1 == mdp.horizon() {
                    0.0
                } else {
                    successors(mdp, t, s, a).into_iter().map(|(s2, p)| p * go(mdp, q, t + 1, s2)).sum()
                };
                reward(mdp, t, s, a) + cont
            })
            .fold(f64::MAX, f64::min)
    }
    mdp.initial().iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| p * go(mdp, q, 0, s)).sum()
}

/// Whether every greedy policy on `Q^k` is optimal.
pub fn solvable(mdp: &TabularMdp, k: usize) -> bool {
    let q = table(mdp, |t, s, a| qk(mdp, k, t, s, a));
    pessimal_return(mdp, &q) >= optimal_value(mdp) - TIE
}

/// Smallest gap between the best and the best non-tied value over every
/// `(t, s)`; `None` when every row is fully tied.
pub fn gap(q: &[Vec<Vec<f64>>]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for step in q {
        for row in step {
            let top = row.iter().cloned().fold(f64::MIN, f64::max);
            let second = row.iter().cloned().filter(|&x| x < top - TIE).fold(f64::MIN, f64::max);
            if second == f64::MIN {
                continue;
            }
            best = Some(best.map_or(top - second, |b: f64| b.min(top - second)));
        }
    }
    best
}

/// Shapes with `S * A * T <= 64` small enough for naive enumeration.
pub const SMALL_SHAPES: [(usize, usize, usize); 10] = [
    (2, 2, 5),
    (3, 2, 5),
    (4, 2, 4),
    (8, 2, 4),
    (2, 3, 6),
    (4, 4, 4),
    (2, 2, 8),
    (3, 3, 4),
    (5, 3, 4),
    (6, 2, 5),
];

pub fn small_random_mdp(index: usize, seed: u64) -> TabularMdp {
    let (num_states, num_actions, horizon) = SMALL_SHAPES[index % SMALL_SHAPES.len()];
    make_random_mdp(&RandomMdpConfig {
        num_states,
        num_actions,
        horizon,
        reward_density: 0.5,
        deterministic: false,
        branching: None,
        seed,
    })
    .expect("valid shape")
}

pub fn max_diff(a: &[Vec<Vec<f64>>], b: &horizonlab::QTable) -> f64 {
    let mut worst = 0.0f64;
    for (t, step) in a.iter().enumerate() {
        for (s, row) in step.iter().enumerate() {
            for (x, v) in row.iter().enumerate() {
                worst = worst.max((v - b.get(t, s, x)).abs());
            }
        }
    }
    worst
}
