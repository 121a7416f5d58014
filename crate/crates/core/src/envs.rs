//! Benchmark MDP families and the sticky-action transform.

use std::collections::BTreeMap;

use ndarray::{array, Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::mdp::{return_extremes, MdpError, MdpMetadata, TabularMdp, MAX_DENSE_ENTRIES};
use crate::rng::{domain, RngStreams};

fn labelled(mdp: TabularMdp, name: &str, labels: &[(&str, String)]) -> TabularMdp {
    let labels: BTreeMap<String, String> = labels.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    mdp.with_metadata(MdpMetadata { name: Some(name.to_string()), labels })
}

/// Two-step model with `R_2(sA) = r_a` and `R_2(sB) = r_b`.
///
/// From s0, action 0 leads to sA and action 1 to sB; the first step pays
/// nothing.
pub fn two_step(r_a: [f64; 2], r_b: [f64; 2]) -> TabularMdp {
    labelled(two_step_raw(r_a, r_b), "two-step", &[("r_a", format!("{r_a:?}")), ("r_b", format!("{r_b:?}"))])
}

fn two_step_raw(r_a: [f64; 2], r_b: [f64; 2]) -> TabularMdp {
    // States: 0 = s0 (start), 1 = sA, 2 = sB. From s0, action 0 -> sA and
    // action 1 -> sB. sA and sB loop on themselves; they are never occupied
    // at the first step.
    let mut p = Array3::zeros((3, 2, 3));
    p[[0, 0, 1]] = 1.0;
    p[[0, 1, 2]] = 1.0;
    for a in 0..2 {
        p[[1, a, 1]] = 1.0;
        p[[2, a, 2]] = 1.0;
    }
    let r2 = array![[0.0, 0.0], r_a, r_b];
    TabularMdp::new(array![1.0, 0.0, 0.0], vec![p], vec![Array2::zeros((3, 2)), r2]).expect("two-step shapes are fixed")
}

/// Two-step reference model: 2-QVI-solvable but not 1-QVI-solvable.
///
/// `R_2(sA) = [0.8, 0]` and `R_2(sB) = [0.6, 0.4]`, so
/// `Q^1_1(s0, .) = [0.4, 0.5]` favours sB while
/// `Q^2_1(s0, .) = Q*_1(s0, .) = [0.8, 0.6]`. `J* = 0.8`, the greedy policy on
/// `Q^1` earns 0.6, and `Delta_2 = 0.2`.
pub fn reference_two_step() -> TabularMdp {
    labelled(two_step_raw([0.8, 0.0], [0.6, 0.4]), "reference-two-step", &[])
}

/// 1-QVI-solvable variant: `R_2(sA) = [0.8, 0.2]`, `R_2(sB) = [0.1, 0.2]`,
/// with `Delta_1 = 0.1`.
pub fn reference_two_step_solvable() -> TabularMdp {
    labelled(two_step_raw([0.8, 0.2], [0.1, 0.2]), "reference-two-step-solvable", &[])
}

/// A chain of `L` positions walked over `T = L` steps.
///
/// States `0..L` are chain positions and state `L` is an absorbing sink.
/// Action 0 advances one position (or stays put with probability `slip`);
/// advancing from the last position pays `terminal_reward`. Action 1 cashes
/// in `decoys[p]` at position `p` and leaves for the sink. Since the chain
/// must be walked without a single slip or detour to reach the end, a decoy
/// near the start hides the terminal reward from shallow lookahead.
pub fn make_chain(length: usize, slip: f64, terminal_reward: f64, decoys: &[f64]) -> Result<TabularMdp, MdpError> {
    if length == 0 {
        return Err(MdpError::Shape("chain length must be at least 1".into()));
    }
    if decoys.len() != length {
        return Err(MdpError::Shape(format!("need {length} decoy rewards, got {}", decoys.len())));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(MdpError::Shape(format!("slip probability {slip} is outside [0, 1]")));
    }
    let ns = length + 1;
    let sink = length;
    let mut reward = Array2::zeros((ns, 2));
    let mut p = Array3::zeros((ns, 2, ns));
    for pos in 0..length {
        reward[[pos, 1]] = decoys[pos];
        p[[pos, 1, sink]] = 1.0;
        if pos + 1 < length {
            p[[pos, 0, pos + 1]] = 1.0 - slip;
            p[[pos, 0, pos]] += slip;
        } else {
            reward[[pos, 0]] = terminal_reward;
            p[[pos, 0, sink]] = 1.0;
        }
    }
    p[[sink, 0, sink]] = 1.0;
    p[[sink, 1, sink]] = 1.0;
    let mut initial = Array1::zeros(ns);
    initial[0] = 1.0;
    let mdp = TabularMdp::stationary(length, initial, p, reward)?;
    let mdp = labelled(
        mdp,
        &format!("chain-{length}"),
        &[
            ("generator", "chain".into()),
            ("length", length.to_string()),
            ("slip", slip.to_string()),
            ("terminal_reward", terminal_reward.to_string()),
            ("decoys", format!("{decoys:?}")),
        ],
    );
    mdp.validated()
}

/// Parameters for [`make_random_mdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpConfig {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Fraction of `(t, s, a)` reward entries that are nonzero.
    pub reward_density: f64,
    /// One-hot transitions and a single start state.
    #[serde(default)]
    pub deterministic: bool,
    /// Successors per stochastic transition row, drawn without replacement;
    /// every state when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<usize>,
    pub seed: u64,
}

/// Random model with Dirichlet(1) transition rows over `branching` random
/// successors (or a single uniformly random successor when deterministic) and
/// sparse uniform rewards, rescaled so the largest achievable return is
/// exactly 1.
pub fn make_random_mdp(cfg: &RandomMdpConfig) -> Result<TabularMdp, MdpError> {
    let (ns, na, horizon) = (cfg.num_states, cfg.num_actions, cfg.horizon);
    if ns == 0 || na < 2 || horizon == 0 {
        return Err(MdpError::Shape(format!(
            "random MDP needs S >= 1, A >= 2, T >= 1 (got {ns}, {na}, {horizon})"
        )));
    }
    if !(0.0..=1.0).contains(&cfg.reward_density) {
        return Err(MdpError::Shape(format!("reward density {} is outside [0, 1]", cfg.reward_density)));
    }
    let branching = cfg.branching.unwrap_or(ns);
    if branching == 0 || branching > ns {
        return Err(MdpError::Shape(format!("branching {branching} must lie in [1, {ns}]")));
    }
    let entries = (ns * na * ns) as u128 * horizon as u128;
    if entries > MAX_DENSE_ENTRIES {
        return Err(MdpError::TooLarge { entries });
    }
    let mut rng = RngStreams::new(cfg.seed).fork(domain::GENERATE).stream(0);
    let mut initial = Array1::zeros(ns);
    if cfg.deterministic {
        initial[0] = 1.0;
    } else {
        let w: Vec<f64> = (0..ns).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        for (s, x) in w.into_iter().enumerate() {
            initial[s] = x / total;
        }
    }
    let mut transitions = Vec::with_capacity(horizon - 1);
    for _ in 0..horizon - 1 {
        let mut p = Array3::zeros((ns, na, ns));
        for s in 0..ns {
            for a in 0..na {
                if cfg.deterministic {
                    p[[s, a, rng.random_range(0..ns)]] = 1.0;
                } else {
                    let support = if branching == ns {
                        (0..ns).collect()
                    } else {
                        rand::seq::index::sample(&mut rng, ns, branching).into_vec()
                    };
                    let w: Vec<f64> = support.iter().map(|_| Exp1.sample(&mut rng)).collect();
                    let total: f64 = w.iter().sum();
                    for (&n, x) in support.iter().zip(w) {
                        p[[s, a, n]] = x / total;
                    }
                }
            }
        }
        transitions.push(p);
    }
    let mut rewards = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut r = Array2::zeros((ns, na));
        for x in r.iter_mut() {
            if rng.random::<f64>() < cfg.reward_density {
                *x = rng.random::<f64>();
            }
        }
        rewards.push(r);
    }
    let mdp = TabularMdp::new(initial, transitions, rewards)?;
    let max = return_extremes(&mdp).almost_sure_max;
    let mdp = if max > 0.0 {
        let (initial, transitions) = (mdp.initial().clone(), (0..horizon - 1).map(|t| mdp.transition(t).clone()).collect());
        let rewards = (0..horizon).map(|t| mdp.reward(t) / max).collect();
        TabularMdp::new(initial, transitions, rewards)?
    } else {
        mdp
    };
    let mdp = labelled(
        mdp,
        &format!("random-s{ns}-a{na}-t{horizon}-seed{}", cfg.seed),
        &[
            ("generator", "random".into()),
            ("num_states", ns.to_string()),
            ("num_actions", na.to_string()),
            ("horizon", horizon.to_string()),
            ("reward_density", cfg.reward_density.to_string()),
            ("deterministic", cfg.deterministic.to_string()),
            ("branching", branching.to_string()),
            ("seed", cfg.seed.to_string()),
        ],
    );
    mdp.validated()
}

/// Random deterministic tree: every action history leads to its own state,
/// so the states visited at each step are distinct across histories.
pub fn make_random_tree(num_actions: usize, horizon: usize, reward_density: f64, seed: u64) -> Result<TabularMdp, MdpError> {
    if num_actions < 2 || horizon == 0 {
        return Err(MdpError::Shape("tree needs A >= 2 and T >= 1".into()));
    }
    // Nodes at depth d occupy [offset(d), offset(d) + A^d).
    let offsets: Vec<usize> = (0..=horizon)
        .scan(0usize, |acc, d| {
            let o = *acc;
            *acc += num_actions.pow(d as u32);
            Some(o)
        })
        .collect();
    let ns = offsets[horizon];
    let entries = (ns * num_actions * ns) as u128 * horizon as u128;
    if entries > MAX_DENSE_ENTRIES {
        return Err(MdpError::TooLarge { entries });
    }
    let mut rng = RngStreams::new(seed).fork(domain::GENERATE).stream(1);
    let mut transitions = Vec::with_capacity(horizon - 1);
    let mut rewards = Vec::with_capacity(horizon);
    for d in 0..horizon {
        let mut r = Array2::zeros((ns, num_actions));
        for node in 0..num_actions.pow(d as u32) {
            for a in 0..num_actions {
                if rng.random::<f64>() < reward_density {
                    r[[offsets[d] + node, a]] = rng.random::<f64>();
                }
            }
        }
        rewards.push(r);
        if d + 1 < horizon {
            let mut p = Array3::zeros((ns, num_actions, ns));
            for s in 0..ns {
                for a in 0..num_actions {
                    let child = if (offsets[d]..offsets[d + 1]).contains(&s) {
                        offsets[d + 1] + (s - offsets[d]) * num_actions + a
                    } else {
                        s.min(offsets[d + 1])
                    };
                    p[[s, a, child]] = 1.0;
                }
            }
            transitions.push(p);
        }
    }
    let mut initial = Array1::zeros(ns);
    initial[0] = 1.0;
    let mdp = TabularMdp::new(initial, transitions, rewards)?;
    let max = return_extremes(&mdp).almost_sure_max;
    let mdp = if max > 0.0 {
        let transitions = (0..horizon - 1).map(|t| mdp.transition(t).clone()).collect();
        let rewards = (0..horizon).map(|t| mdp.reward(t) / max).collect();
        TabularMdp::new(mdp.initial().clone(), transitions, rewards)?
    } else {
        mdp
    };
    labelled(
        mdp,
        &format!("tree-a{num_actions}-t{horizon}-seed{seed}"),
        &[("generator", "tree".into()), ("seed", seed.to_string())],
    )
    .validated()
}

/// Decoy reward used by [`make_needle`]: halfway between what one random
/// step of lookahead can see and the needle itself.
pub fn needle_decoy(num_actions: usize) -> f64 {
    0.5 * (1.0 + 1.0 / num_actions as f64)
}

/// Negative control: reward 1 for playing action `A - 1` at every step.
///
/// States `0..T` are the on-path positions and state `T` is an absorbing
/// zero-reward sink. Leaving the path at the first step pays
/// [`needle_decoy`]; leaving later pays nothing. The decoy exceeds
/// `Q^k_1(start, A - 1) = A^{-(T - k)}` for every `k < T`, so the model is
/// first k-QVI-solvable at `k = T`.
pub fn make_needle(horizon: usize, num_actions: usize) -> Result<TabularMdp, MdpError> {
    if horizon == 0 || num_actions < 2 {
        return Err(MdpError::Shape("needle needs T >= 1 and A >= 2".into()));
    }
    let ns = horizon + 1;
    let sink = horizon;
    let good = num_actions - 1;
    let decoy = needle_decoy(num_actions);
    let mut transitions = Vec::with_capacity(horizon - 1);
    let mut rewards = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut r = Array2::zeros((ns, num_actions));
        if t == 0 {
            for a in 0..good {
                r[[0, a]] = decoy;
            }
        }
        if t == horizon - 1 {
            r[[t, good]] = 1.0;
        }
        rewards.push(r);
        if t + 1 < horizon {
            let mut p = Array3::zeros((ns, num_actions, ns));
            for s in 0..ns {
                for a in 0..num_actions {
                    let next = if s == t && a == good { t + 1 } else { sink };
                    p[[s, a, next]] = 1.0;
                }
            }
            transitions.push(p);
        }
    }
    let mut initial = Array1::zeros(ns);
    initial[0] = 1.0;
    let mdp = TabularMdp::new(initial, transitions, rewards)?;
    labelled(
        mdp,
        &format!("needle-t{horizon}-a{num_actions}"),
        &[
            ("generator", "needle".into()),
            ("horizon", horizon.to_string()),
            ("num_actions", num_actions.to_string()),
        ],
    )
    .validated()
}

/// State layout of a sticky model. Each augmented state is a triple
/// `(base, memory, origin)`: the base state, the previously executed action
/// (`A` when there is none) and the base state that action was executed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StickyLayout {
    pub num_states: usize,
    pub num_actions: usize,
}

impl StickyLayout {
    pub fn len(&self) -> usize {
        self.num_states * (self.num_actions + 1) * self.num_states
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, base: usize, memory: usize, origin: usize) -> usize {
        (base * (self.num_actions + 1) + memory) * self.num_states + origin
    }

    /// Inverse of [`StickyLayout::index`].
    pub fn parts(&self, state: usize) -> (usize, usize, usize) {
        let origin = state % self.num_states;
        let rest = state / self.num_states;
        (rest / (self.num_actions + 1), rest % (self.num_actions + 1), origin)
    }
}

/// Sticky-action version of a model.
///
/// With probability `p_sticky` the environment executes the previously
/// executed action instead of the chosen one; the first step is never
/// sticky. The successor remembers the executed action and the state it was
/// executed in, and the reward of that step is paid one step late, on
/// arrival, so that every sampled return is a return of the base model. The
/// final step pays its own reward in expectation over the executed action.
/// Deferred rewards shift `Q_t(x, .)` by a per-state constant, which leaves
/// argmax sets, gaps and returns unchanged.
pub fn sticky_transform(mdp: &TabularMdp, p_sticky: f64) -> Result<TabularMdp, MdpError> {
    if !(0.0..=1.0).contains(&p_sticky) {
        return Err(MdpError::Shape(format!("sticky probability {p_sticky} is outside [0, 1]")));
    }
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let layout = StickyLayout { num_states: ns, num_actions: na };
    let nsa = layout.len();
    let entries = (nsa as u128) * (na as u128) * (nsa as u128) * (horizon as u128);
    if entries > MAX_DENSE_ENTRIES {
        return Err(MdpError::TooLarge { entries });
    }
    // exec(m, a) = distribution over executed actions.
    let exec = |m: usize, a: usize| -> Vec<(usize, f64)> {
        if m == na || m == a || p_sticky == 0.0 {
            vec![(a, 1.0)]
        } else if p_sticky == 1.0 {
            vec![(m, 1.0)]
        } else {
            vec![(a, 1.0 - p_sticky), (m, p_sticky)]
        }
    };
    let mut initial = Array1::zeros(nsa);
    for s in 0..ns {
        initial[layout.index(s, na, 0)] = mdp.initial()[s];
    }
    let mut rewards = Vec::with_capacity(horizon);
    let mut transitions = Vec::with_capacity(horizon - 1);
    for t in 0..horizon {
        let last = t + 1 == horizon;
        let mut r = Array2::zeros((nsa, na));
        let mut p = (!last).then(|| Array3::zeros((nsa, na, nsa)));
        for s in 0..ns {
            for m in 0..=na {
                for o in 0..ns {
                    let idx = layout.index(s, m, o);
                    let pending = if t > 0 && m < na { mdp.reward(t - 1)[[o, m]] } else { 0.0 };
                    for a in 0..na {
                        r[[idx, a]] = pending;
                        for (e, w) in exec(m, a) {
                            match p.as_mut() {
                                None => r[[idx, a]] += w * mdp.reward(t)[[s, e]],
                                Some(p) => {
                                    for (n, &q) in mdp.successors(t, s, e).iter().enumerate() {
                                        if q > 0.0 {
                                            p[[idx, a, layout.index(n, e, s)]] += w * q;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        rewards.push(r);
        transitions.extend(p);
    }
    let mut metadata = mdp.metadata().clone();
    metadata.name = Some(format!("{}-sticky", mdp.name()));
    metadata.labels.insert("sticky".into(), p_sticky.to_string());
    TabularMdp::new(initial, transitions, rewards)?.with_metadata(metadata).validated()
}

/// Serializable description of a generated environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Reference,
    ReferenceSolvable,
    Chain {
        length: usize,
        #[serde(default)]
        slip: f64,
        #[serde(default = "one")]
        terminal_reward: f64,
        decoys: Vec<f64>,
    },
    Random(RandomMdpConfig),
    Tree {
        num_actions: usize,
        horizon: usize,
        reward_density: f64,
        seed: u64,
    },
    Needle {
        horizon: usize,
        num_actions: usize,
    },
    Sticky {
        base: Box<GeneratorSpec>,
        p_sticky: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<TabularMdp, MdpError> {
        match self {
            GeneratorSpec::Reference => Ok(reference_two_step()),
            GeneratorSpec::ReferenceSolvable => Ok(reference_two_step_solvable()),
            GeneratorSpec::Chain { length, slip, terminal_reward, decoys } => {
                make_chain(*length, *slip, *terminal_reward, decoys)
            }
            GeneratorSpec::Random(cfg) => make_random_mdp(cfg),
            GeneratorSpec::Tree { num_actions, horizon, reward_density, seed } => {
                make_random_tree(*num_actions, *horizon, *reward_density, *seed)
            }
            GeneratorSpec::Needle { horizon, num_actions } => make_needle(*horizon, *num_actions),
            GeneratorSpec::Sticky { base, p_sticky } => sticky_transform(&base.build()?, *p_sticky),
        }
    }
}
