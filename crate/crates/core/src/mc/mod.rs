//! Exact analysis of induced Markov chains and of the product MDP.

mod mdp;
mod prism;
mod solve;

pub use mdp::{maximal_end_components, mdp_max_buchi_probability, MaxBuchi};
pub use prism::{export_prism, parse_prism, PrismModel, ACCEPTING_LABEL};

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::graph::{backward_reachable, tarjan_scc};
use crate::ltl::Letter;
use crate::product::{
    CollapsedPolicy, ExplicitProduct, Product, ProductAction, ProductError, ProductState,
    RewardStructure,
};

/// Row sums must be within this of 1.
pub const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum McError {
    #[error("row {state} sums to {sum}")]
    RowSum { state: usize, sum: f64 },
    #[error("state {0} has no successors")]
    EmptyRow(usize),
    #[error("transition {from} -> {to} is malformed: {msg}")]
    BadTransition { from: usize, to: usize, msg: String },
    #[error("policy is undefined at reachable state {0:?}")]
    PolicyUndefined(ProductState),
    #[error("policy chooses unavailable action {action:?} at {state:?}")]
    PolicyUnavailable {
        state: ProductState,
        action: ProductAction,
    },
    #[error("linear system is singular")]
    Singular,
    #[error("iteration did not converge (residual {0:e})")]
    NotConverged(f64),
    #[error("undiscounted cycle with positive reward through state {0}")]
    NonContractive(usize),
    #[error("PRISM line {line}: {msg}")]
    Prism { line: usize, msg: String },
    #[error(transparent)]
    Product(#[from] ProductError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Transition {
    pub to: usize,
    #[serde(rename = "p")]
    pub probability: f64,
    pub reward: f64,
    pub discount: f64,
}

/// A finite discrete-time Markov chain with accepting marks, atomic-proposition
/// labels and per-transition reward/discount annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Dtmc {
    init: usize,
    rows: Vec<Vec<Transition>>,
    accepting: Vec<bool>,
    atoms: Vec<String>,
    labels: Vec<Letter>,
    /// Product state behind each index, when the chain was induced from a product.
    origin: Vec<ProductState>,
}

impl Dtmc {
    pub fn new(
        init: usize,
        rows: Vec<Vec<Transition>>,
        accepting: Vec<bool>,
        atoms: Vec<String>,
        labels: Vec<Letter>,
    ) -> Result<Self, McError> {
        let n = rows.len();
        if init >= n {
            return Err(McError::EmptyRow(init));
        }
        assert_eq!(accepting.len(), n, "one accepting flag per state");
        assert_eq!(labels.len(), n, "one label per state");
        for (i, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(McError::EmptyRow(i));
            }
            for t in row {
                let bad = |msg: &str| McError::BadTransition {
                    from: i,
                    to: t.to,
                    msg: msg.into(),
                };
                if t.to >= n {
                    return Err(bad("target out of range"));
                }
                if !(t.probability > 0.0 && t.probability <= 1.0) {
                    return Err(bad("probability outside (0, 1]"));
                }
                if !(t.discount > 0.0 && t.discount <= 1.0 && t.reward >= 0.0) {
                    return Err(bad("reward or discount out of range"));
                }
            }
            let sum: f64 = row.iter().map(|t| t.probability).sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(McError::RowSum { state: i, sum });
            }
        }
        Ok(Self {
            init,
            rows,
            accepting,
            atoms,
            labels,
            origin: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn row(&self, i: usize) -> &[Transition] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<Transition>] {
        &self.rows
    }

    pub fn is_accepting(&self, i: usize) -> bool {
        self.accepting[i]
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn label(&self, i: usize) -> Letter {
        self.labels[i]
    }

    /// Product state of index `i`, if known.
    pub fn origin(&self, i: usize) -> Option<ProductState> {
        self.origin.get(i).copied()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|t| t.to).collect())
            .collect()
    }

    /// One JSON object per transition: `from`, `to`, `p`, `reward`, `discount`.
    pub fn to_json_lines(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            from: usize,
            #[serde(flatten)]
            t: &'a Transition,
        }
        let mut out = String::new();
        for (from, row) in self.rows.iter().enumerate() {
            for t in row {
                out.push_str(
                    &serde_json::to_string(&Record { from, t }).expect("plain numbers serialise"),
                );
                out.push('\n');
            }
        }
        out
    }
}

/// The Markov chain induced by a deterministic memoryless policy on the
/// reachable fragment of an explicit product, renumbered in BFS order.
pub fn induce_dtmc(
    explicit: &ExplicitProduct,
    product: &Product,
    policy: impl Fn(ProductState) -> Option<ProductAction>,
) -> Result<Dtmc, McError> {
    let mut order = vec![0usize];
    let mut new_index = HashMap::from([(0usize, 0usize)]);
    let mut rows = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let st = explicit.states[i];
        let act = policy(st).ok_or(McError::PolicyUndefined(st))?;
        let choice = explicit.choice(i, act).ok_or(McError::PolicyUnavailable {
            state: st,
            action: act,
        })?;
        let mut row = Vec::with_capacity(choice.outcomes.len());
        for o in &choice.outcomes {
            let j = *new_index.entry(o.to).or_insert_with(|| {
                order.push(o.to);
                queue.push_back(o.to);
                order.len() - 1
            });
            row.push(Transition {
                to: j,
                probability: o.probability,
                reward: o.reward,
                discount: o.discount,
            });
        }
        rows.push(row);
    }
    let accepting = order.iter().map(|&i| explicit.accepting[i]).collect();
    let labels = order
        .iter()
        .map(|&i| product.mdp().label(explicit.states[i].s))
        .collect();
    let mut dtmc = Dtmc::new(
        0,
        rows,
        accepting,
        product.mdp().alphabet().atoms().to_vec(),
        labels,
    )?;
    dtmc.origin = order.iter().map(|&i| explicit.states[i]).collect();
    Ok(dtmc)
}

/// Bottom strongly connected components and their classification.
#[derive(Clone, Debug, PartialEq)]
pub struct BsccDecomposition {
    /// Each component sorted ascending; components in reverse topological order.
    pub components: Vec<Vec<usize>>,
    /// `accepting[i]` iff component `i` contains an accepting state.
    pub accepting: Vec<bool>,
    /// States in no bottom component, ascending.
    pub transient: Vec<usize>,
}

impl BsccDecomposition {
    /// Membership flags for the union of accepting components.
    pub fn accepting_states(&self, n: usize) -> Vec<bool> {
        let mut out = vec![false; n];
        for (c, _) in self
            .components
            .iter()
            .zip(&self.accepting)
            .filter(|(_, &a)| a)
        {
            for &v in c {
                out[v] = true;
            }
        }
        out
    }
}

pub fn bsccs(d: &Dtmc) -> BsccDecomposition {
    let adj = d.adjacency();
    let sccs = tarjan_scc(&adj);
    let mut comp_of = vec![0; d.len()];
    for (i, c) in sccs.iter().enumerate() {
        for &v in c {
            comp_of[v] = i;
        }
    }
    let mut components = Vec::new();
    let mut accepting = Vec::new();
    let mut in_bottom = vec![false; d.len()];
    for (i, c) in sccs.into_iter().enumerate() {
        let closed = c.iter().all(|&v| adj[v].iter().all(|&w| comp_of[w] == i));
        if closed {
            accepting.push(c.iter().any(|&v| d.accepting[v]));
            for &v in &c {
                in_bottom[v] = true;
            }
            components.push(c);
        }
    }
    let transient = (0..d.len()).filter(|&v| !in_bottom[v]).collect();
    BsccDecomposition {
        components,
        accepting,
        transient,
    }
}

/// Per-state values of a DTMC analysis together with the initial state's value.
#[derive(Clone, Debug, PartialEq)]
pub struct Values {
    pub values: Vec<f64>,
    pub init: f64,
}

/// Probability of visiting accepting states infinitely often, i.e. of
/// reaching an accepting bottom component.
pub fn buchi_probability(d: &Dtmc) -> Result<Values, McError> {
    let dec = bsccs(d);
    let target = dec.accepting_states(d.len());
    let adj = d.adjacency();
    let can_reach = backward_reachable(&adj, &target);
    let fixed: Vec<Option<f64>> = (0..d.len())
        .map(|v| {
            if target[v] {
                Some(1.0)
            } else if !can_reach[v] {
                Some(0.0)
            } else {
                None
            }
        })
        .collect();
    let weights: Vec<Vec<(usize, f64)>> = d
        .rows
        .iter()
        .map(|r| r.iter().map(|t| (t.to, t.probability)).collect())
        .collect();
    let mut values = solve::solve_fixpoint(&weights, &vec![0.0; d.len()], &fixed)?;
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(Values {
        init: values[d.init],
        values,
    })
}

/// Expected discounted reward `V(s) = Σ P(s,s')·[r + d·V(s')]`.
pub fn expected_discounted_reward(d: &Dtmc) -> Result<Values, McError> {
    let adj = d.adjacency();
    let mut pays = vec![false; d.len()];
    for (i, row) in d.rows.iter().enumerate() {
        pays[i] = row.iter().any(|t| t.reward > 0.0);
    }
    let can_earn = backward_reachable(&adj, &pays);
    let dec = bsccs(d);
    for c in &dec.components {
        let undiscounted = c
            .iter()
            .all(|&v| d.rows[v].iter().all(|t| t.discount >= 1.0));
        if undiscounted {
            if let Some(&v) = c.iter().find(|&&v| pays[v]) {
                return Err(McError::NonContractive(v));
            }
        }
    }
    let fixed: Vec<Option<f64>> = can_earn
        .iter()
        .map(|&e| if e { None } else { Some(0.0) })
        .collect();
    let weights: Vec<Vec<(usize, f64)>> = d
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|t| (t.to, t.probability * t.discount))
                .collect()
        })
        .collect();
    let rhs: Vec<f64> = d
        .rows
        .iter()
        .map(|r| r.iter().map(|t| t.probability * t.reward).sum())
        .collect();
    let values = solve::solve_fixpoint(&weights, &rhs, &fixed)?;
    Ok(Values {
        init: values[d.init],
        values,
    })
}

/// Satisfaction-probability evaluation of counter-independent policies.
///
/// Policies that ignore the counter induce the same satisfaction probability
/// for every counter cap, so evaluation runs on the counter-free product.
#[derive(Clone, Debug)]
pub struct PolicyEvaluator {
    product: Product,
    explicit: ExplicitProduct,
}

impl PolicyEvaluator {
    pub fn new(product: &Product) -> Result<Self, McError> {
        let rs = RewardStructure::constant(product.rewards().u(), product.rewards().gamma())?;
        let product = product.with_rewards(rs);
        let explicit = product.enumerate()?;
        Ok(Self { product, explicit })
    }

    pub fn explicit(&self) -> &ExplicitProduct {
        &self.explicit
    }

    pub fn dtmc(&self, policy: &CollapsedPolicy) -> Result<Dtmc, McError> {
        induce_dtmc(&self.explicit, &self.product, |st| policy.action(st))
    }

    pub fn satisfaction(&self, policy: &CollapsedPolicy) -> Result<f64, McError> {
        Ok(buchi_probability(&self.dtmc(policy)?)?.init)
    }

    /// Best satisfaction probability over all policies.
    pub fn optimal(&self) -> Result<f64, McError> {
        Ok(mdp_max_buchi_probability(&self.explicit)?.init)
    }
}

/// The two sides of the optimality bracket
/// `γ^{C+N/U}·P ≤ G ≤ 1 − (1−U)^C + P·(1−U)^C`.
pub fn theorem_bracket(p: f64, gamma: f64, u: f64, c: f64, n: f64) -> (f64, f64) {
    let lower = gamma.powf(c + n / u) * p;
    let stay = (1.0 - u).powf(c);
    (lower, 1.0 - stay + p * stay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(to: usize, p: f64) -> Transition {
        Transition {
            to,
            probability: p,
            reward: 0.0,
            discount: 0.99,
        }
    }

    fn chain(rows: Vec<Vec<Transition>>, accepting: Vec<bool>) -> Dtmc {
        let n = rows.len();
        Dtmc::new(0, rows, accepting, vec![], vec![Letter::EMPTY; n]).unwrap()
    }

    #[test]
    fn two_state_chain_has_one_bottom_component() {
        let d = chain(vec![vec![t(1, 1.0)], vec![t(1, 1.0)]], vec![false, false]);
        let dec = bsccs(&d);
        assert_eq!(dec.components, vec![vec![1]]);
        assert_eq!(dec.accepting, vec![false]);
        assert_eq!(dec.transient, vec![0]);
    }

    #[test]
    fn trivial_probabilities() {
        let acc = chain(vec![vec![t(0, 1.0)]], vec![true]);
        assert_eq!(bsccs(&acc).accepting, vec![true]);
        assert_eq!(buchi_probability(&acc).unwrap().init, 1.0);
        let rej = chain(vec![vec![t(0, 1.0)]], vec![false]);
        assert_eq!(buchi_probability(&rej).unwrap().init, 0.0);
    }

    #[test]
    fn gamblers_ruin_probability() {
        // 0 and 4 absorbing, 4 accepting; fair walk from 1..3.
        let mut rows = vec![vec![t(0, 1.0)]];
        for i in 1..4 {
            rows.push(vec![t(i - 1, 0.5), t(i + 1, 0.5)]);
        }
        rows.push(vec![t(4, 1.0)]);
        let mut d = chain(rows, vec![false, false, false, false, true]);
        d.init = 1;
        let v = buchi_probability(&d).unwrap();
        for (i, expected) in [0.0, 0.25, 0.5, 0.75, 1.0].into_iter().enumerate() {
            assert!((v.values[i] - expected).abs() < 1e-12);
        }
        assert!((v.init - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed_rows() {
        let r = Dtmc::new(
            0,
            vec![vec![t(0, 0.5)]],
            vec![false],
            vec![],
            vec![Letter::EMPTY],
        );
        assert!(matches!(r, Err(McError::RowSum { .. })));
        let r = Dtmc::new(0, vec![vec![]], vec![false], vec![], vec![Letter::EMPTY]);
        assert!(matches!(r, Err(McError::EmptyRow(0))));
    }

    #[test]
    fn geometric_identity() {
        for u in [0.1, 0.5, 0.9] {
            let row = vec![Transition {
                to: 0,
                probability: 1.0,
                reward: u,
                discount: 1.0 - u,
            }];
            let d = chain(vec![row], vec![true]);
            let g = expected_discounted_reward(&d).unwrap().init;
            assert!((g - 1.0).abs() < 1e-10, "{u}: {g}");
        }
    }

    #[test]
    fn unrewarded_chain_is_worth_zero() {
        let d = chain(vec![vec![t(1, 1.0)], vec![t(0, 1.0)]], vec![false, false]);
        assert_eq!(expected_discounted_reward(&d).unwrap().init, 0.0);
    }

    #[test]
    fn undiscounted_rewarding_cycle_is_rejected() {
        let row = vec![Transition {
            to: 0,
            probability: 1.0,
            reward: 0.5,
            discount: 1.0,
        }];
        let d = chain(vec![row], vec![true]);
        assert!(matches!(
            expected_discounted_reward(&d),
            Err(McError::NonContractive(0))
        ));
    }

    #[test]
    fn discounted_value_matches_closed_form() {
        // 0 -> 1 with reward 0 and discount 0.9; 1 loops paying 0.2 with discount 0.8.
        let rows = vec![
            vec![t(1, 1.0)]
                .into_iter()
                .map(|x| Transition { discount: 0.9, ..x })
                .collect(),
            vec![Transition {
                to: 1,
                probability: 1.0,
                reward: 0.2,
                discount: 0.8,
            }],
        ];
        let d = chain(rows, vec![false, true]);
        let v = expected_discounted_reward(&d).unwrap();
        assert!((v.values[1] - 1.0).abs() < 1e-12);
        assert!((v.init - 0.9).abs() < 1e-12);
    }

    fn random_chain(rng: &mut ChaCha8Rng) -> Dtmc {
        let n = rng.gen_range(1..9);
        let rows = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=3);
                let targets: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
                let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = weights.iter().sum();
                let mut row: Vec<Transition> = Vec::new();
                for (to, w) in targets.into_iter().zip(weights) {
                    match row.iter_mut().find(|x| x.to == to) {
                        Some(x) => x.probability += w / total,
                        None => row.push(t(to, w / total)),
                    }
                }
                let sum: f64 = row.iter().map(|x| x.probability).sum();
                row[0].probability += 1.0 - sum;
                row
            })
            .collect();
        let accepting = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        chain(rows, accepting)
    }

    /// Simulates until the run has been inside a bottom component long enough
    /// that every accepting state there has been seen with overwhelming
    /// probability; accepts if an accepting state is seen in the second half.
    fn simulate(d: &Dtmc, rng: &mut ChaCha8Rng, steps: usize) -> bool {
        let mut s = d.init;
        let mut seen = false;
        for i in 0..steps {
            if i >= steps / 2 && d.accepting[s] {
                seen = true;
            }
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let row = &d.rows[s];
            s = row[row.len() - 1].to;
            for x in row {
                acc += x.probability;
                if u < acc {
                    s = x.to;
                    break;
                }
            }
        }
        seen
    }

    #[test]
    fn agrees_with_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let d = random_chain(&mut rng);
            let exact = buchi_probability(&d).unwrap().init;
            let runs = 10_000;
            let hits = (0..runs).filter(|_| simulate(&d, &mut rng, 200)).count();
            let est = hits as f64 / runs as f64;
            assert!((est - exact).abs() < 0.02, "exact {exact}, estimate {est}");
        }
    }

    #[test]
    fn bottom_components_are_closed_and_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let d = random_chain(&mut rng);
            let dec = bsccs(&d);
            let v = buchi_probability(&d).unwrap();
            for (c, &acc) in dec.components.iter().zip(&dec.accepting) {
                for &s in c {
                    assert!(d.rows[s].iter().all(|x| c.contains(&x.to)));
                    assert_eq!(v.values[s], if acc { 1.0 } else { 0.0 });
                }
            }
            assert!(v.values.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn json_lines_dump() {
        let d = chain(vec![vec![t(1, 1.0)], vec![t(1, 1.0)]], vec![false, true]);
        let dump = d.to_json_lines();
        let first: serde_json::Value = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
        assert_eq!(first["from"], 0);
        assert_eq!(first["to"], 1);
        assert_eq!(first["p"], 1.0);
        assert_eq!(dump.lines().count(), 2);
    }
}
