//! Tabular Q-learning on the product MDP with a Q-function keyed on
//! `(s, q)` only (the counter is tracked but not part of the key), optionally
//! with counterfactual updates for every automaton state.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::sample_from;
use crate::mc::{McError, PolicyEvaluator};
use crate::product::{CollapsedPolicy, Product, ProductAction, ProductState};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("policy evaluation failed: {0}")]
    Evaluation(#[from] McError),
}

/// Q-values over `((s, q), action)` with every entry starting at `optimistic_init`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    num_q: usize,
    slots: usize,
    num_env_actions: usize,
    optimistic_init: f64,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(
        num_s: usize,
        num_q: usize,
        num_env_actions: usize,
        num_eps_targets: usize,
        optimistic_init: f64,
    ) -> Self {
        let slots = num_env_actions + num_eps_targets;
        Self {
            num_q,
            slots,
            num_env_actions,
            optimistic_init,
            values: vec![optimistic_init; num_s * num_q * slots],
        }
    }

    pub fn for_product(product: &Product, optimistic_init: f64) -> Self {
        Self::new(
            product.mdp().num_states(),
            product.num_automaton_states(),
            product.mdp().num_actions(),
            product.ldba().num_states(),
            optimistic_init,
        )
    }

    pub fn optimistic_init(&self) -> f64 {
        self.optimistic_init
    }

    fn slot(&self, s: usize, q: usize, act: ProductAction) -> usize {
        (s * self.num_q + q) * self.slots + act.index(self.num_env_actions)
    }

    pub fn get(&self, s: usize, q: usize, act: ProductAction) -> f64 {
        self.values[self.slot(s, q, act)]
    }

    pub fn set(&mut self, s: usize, q: usize, act: ProductAction, v: f64) {
        let i = self.slot(s, q, act);
        self.values[i] = v;
    }

    /// Greedy action among `actions` (given in action order); ties go to the
    /// lowest index.
    pub fn argmax(&self, s: usize, q: usize, actions: &[ProductAction]) -> ProductAction {
        let mut best = actions[0];
        let mut best_v = self.get(s, q, best);
        for &a in &actions[1..] {
            let v = self.get(s, q, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    pub fn max(&self, s: usize, q: usize, actions: &[ProductAction]) -> f64 {
        actions
            .iter()
            .map(|&a| self.get(s, q, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Every stored value; entries of unavailable actions keep the initial value.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `Q + α·(r + γ_eff·next_max − Q)`.
pub fn q_update(old: f64, alpha: f64, reward: f64, gamma_eff: f64, next_max: f64) -> f64 {
    old + alpha * (reward + gamma_eff * next_max - old)
}

/// Explores uniformly among `actions` with probability `epsilon`, otherwise
/// acts greedily. Consumes one draw when `0 < epsilon < 1` plus one more when
/// exploring.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    q: &QTable,
    s: usize,
    qs: usize,
    actions: &[ProductAction],
    epsilon: f64,
    rng: &mut R,
) -> ProductAction {
    let explore = if epsilon >= 1.0 {
        true
    } else if epsilon <= 0.0 {
        false
    } else {
        rng.gen::<f64>() < epsilon
    };
    if explore {
        actions[rng.gen_range(0..actions.len())]
    } else {
        q.argmax(s, qs, actions)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub alpha: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub max_steps: usize,
    /// Product steps between policy evaluations; 0 disables the curve.
    pub eval_interval: u64,
    /// Update every automaton state per real step.
    pub counterfactual: bool,
    /// Check every update against the product's transition function (slow).
    pub verify_transitions: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 0.1,
            episodes: 40_000,
            max_steps: 100,
            eval_interval: 10_000,
            counterfactual: false,
            verify_transitions: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Hyperparams(m.into()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon must be in [0, 1]");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub q: QTable,
    /// `(product steps so far, satisfaction probability of the greedy policy)`.
    pub curve: Vec<(u64, f64)>,
    pub policy: CollapsedPolicy,
    /// Satisfaction probability of the final greedy policy, when evaluated.
    pub final_satisfaction: Option<f64>,
    pub steps: u64,
    pub seed: u64,
    pub wallclock_secs: f64,
}

/// Per-`(s, q)` data that does not change during training.
struct Tables {
    num_q: usize,
    trap: usize,
    actions: Vec<Vec<ProductAction>>,
}

impl Tables {
    fn new(p: &Product) -> Self {
        let num_q = p.num_automaton_states();
        let n = p.mdp().num_states() * num_q;
        let mut actions = Vec::with_capacity(n);
        for s in 0..p.mdp().num_states() {
            for q in 0..num_q {
                actions.push(p.actions_at(s, q).collect());
            }
        }
        Self {
            num_q,
            trap: p.trap(),
            actions,
        }
    }

    fn actions(&self, s: usize, q: usize) -> &[ProductAction] {
        &self.actions[s * self.num_q + q]
    }
}

/// Greedy policy of `q` at every `(s, q)`, ties to the lowest action index.
pub fn extract_policy(q: &QTable, product: &Product) -> CollapsedPolicy {
    let mut policy = CollapsedPolicy::for_product(product);
    for s in 0..product.mdp().num_states() {
        for qs in 0..product.num_automaton_states() {
            let acts: Vec<ProductAction> = product.actions_at(s, qs).collect();
            policy.set(s, qs, q.argmax(s, qs, &acts));
        }
    }
    policy
}

/// Runs Q-learning on `product` from seed `seed`.
///
/// Episodes start at `(s0, q0, 0)` and last at most `max_steps` product steps
/// (ε-moves included). Entering the rejecting trap ends the episode and is
/// valued at 0. When `evaluator` is given, the greedy policy is model-checked
/// every `eval_interval` steps and once more at the end.
pub fn train(
    product: &Product,
    hp: &Hyperparams,
    seed: u64,
    evaluator: Option<&PolicyEvaluator>,
) -> Result<TrainResult, LearnError> {
    hp.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = Tables::new(product);
    let u = product.rewards().u();
    let mut q = QTable::for_product(product, 2.0 * u);
    let mut curve = Vec::new();
    let mut steps: u64 = 0;
    let cf_states: Vec<usize> = (0..product.ldba().num_states()).collect();

    for _ in 0..hp.episodes {
        let mut st = product.initial();
        for _ in 0..hp.max_steps {
            let actions = tables.actions(st.s, st.q);
            let act = epsilon_greedy(&q, st.s, st.q, actions, hp.epsilon, &mut rng);
            let next_s = match act {
                ProductAction::Env(a) => sample_from(
                    product
                        .mdp()
                        .distribution(st.s, a)
                        .expect("available action"),
                    &mut rng,
                ),
                ProductAction::Eps(_) => st.s,
            };
            let real = product.step(st, act, next_s);

            let mut update = |qbar: usize| {
                let from = ProductState { q: qbar, ..st };
                let step = if qbar == st.q {
                    real
                } else {
                    product.step(from, act, next_s)
                };
                if hp.verify_transitions {
                    verify(product, from, act, next_s, &step);
                }
                let next_max = if step.to.q == tables.trap {
                    0.0
                } else {
                    q.max(next_s, step.to.q, tables.actions(next_s, step.to.q))
                };
                let old = q.get(st.s, qbar, act);
                q.set(
                    st.s,
                    qbar,
                    act,
                    q_update(old, hp.alpha, step.reward, step.discount, next_max),
                );
            };
            if hp.counterfactual && st.q != tables.trap {
                for &qbar in &cf_states {
                    let available = match act {
                        ProductAction::Env(_) => true,
                        ProductAction::Eps(target) => product
                            .ldba()
                            .epsilon_successors(qbar)
                            .is_ok_and(|e| e.contains(&target)),
                    };
                    if available {
                        update(qbar);
                    }
                }
            } else {
                update(st.q);
            }

            steps += 1;
            if let Some(ev) = evaluator {
                if hp.eval_interval > 0 && steps.is_multiple_of(hp.eval_interval) {
                    let policy = extract_policy(&q, product);
                    curve.push((steps, ev.satisfaction(&policy)?));
                }
            }
            st = real.to;
            if st.q == tables.trap {
                break;
            }
        }
    }
    let policy = extract_policy(&q, product);
    let final_satisfaction = match evaluator {
        Some(ev) => Some(ev.satisfaction(&policy)?),
        None => None,
    };
    Ok(TrainResult {
        q,
        curve,
        policy,
        final_satisfaction,
        steps,
        seed,
        wallclock_secs: start.elapsed().as_secs_f64(),
    })
}

fn verify(
    product: &Product,
    from: ProductState,
    act: ProductAction,
    next_s: usize,
    step: &crate::product::Step,
) {
    let legal = product
        .successors(from, act)
        .unwrap_or_else(|e| panic!("update on illegal action: {e}"));
    assert!(
        legal.iter().any(|t| t.to.s == next_s
            && t.to == step.to
            && t.reward == step.reward
            && t.discount == step.discount),
        "update {from:?} --{act:?}--> {:?} is not a product transition",
        step.to
    );
}

/// `(U, γ)` from the state count and the smallest nonzero transition
/// probability: `C = |S|/p_min`, `U = 1/C`, `γ = 1 − 1/(C·|S| + C)`, both
/// clamped into `(0, 1)`.
pub fn suggest_hyperparameters(state_count: usize, p_min: f64) -> (f64, f64) {
    let n = state_count.max(1) as f64;
    let c = n / p_min.clamp(f64::MIN_POSITIVE, 1.0);
    let u = (1.0 / c).clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    let gamma = (1.0 - 1.0 / (c * n + c)).clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    (u, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{load_bundled, Ldba};
    use crate::envs::{probabilistic_gate, LabeledMdp};
    use crate::ltl::{Alphabet, Letter};
    use crate::product::RewardStructure;

    #[test]
    fn update_arithmetic() {
        assert!((q_update(0.2, 0.1, 0.0, 0.99, 0.2) - 0.1998).abs() < 1e-15);
        assert!((q_update(0.2, 0.1, 0.1, 0.9, 0.0) - 0.19).abs() < 1e-15);
        assert_eq!(q_update(0.37, 0.0, 0.5, 0.5, 0.9), 0.37);
    }

    #[test]
    fn suggested_hyperparameters() {
        let (u, g) = suggest_hyperparameters(1, 1.0);
        assert_eq!(u, 1.0 - f64::EPSILON);
        assert_eq!(g, 0.5);
        let (u, g) = suggest_hyperparameters(30, 0.2);
        assert!((u - 1.0 / 150.0).abs() < 1e-15);
        assert!((g - (1.0 - 1.0 / 4650.0)).abs() < 1e-15);
        // The informal gate estimate C = 10, N = 1 gives U = 0.1 and γ = 0.95.
        let c: f64 = 10.0;
        assert!((1.0 - 1.0 / (c * 1.0 + c) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn greedy_ties_and_exploration() {
        let mut q = QTable::new(1, 1, 3, 0, 0.5);
        let acts = [
            ProductAction::Env(0),
            ProductAction::Env(1),
            ProductAction::Env(2),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            epsilon_greedy(&q, 0, 0, &acts, 0.0, &mut rng),
            ProductAction::Env(0)
        );
        q.set(0, 0, ProductAction::Env(2), 0.9);
        assert_eq!(
            epsilon_greedy(&q, 0, 0, &acts, 0.0, &mut rng),
            ProductAction::Env(2)
        );
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            let ProductAction::Env(a) = epsilon_greedy(&q, 0, 0, &acts, 1.0, &mut rng) else {
                unreachable!()
            };
            counts[a] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    /// Deterministic MDP: `s0 -> s1 -> s2 -> s2`, only `s2` labelled `a`, with
    /// a one-state deterministic component reached by ε that accepts on `a`.
    fn chain_product(rewards: RewardStructure) -> Product {
        let ab = Alphabet::new(["a"]).unwrap();
        let rows = vec![
            (0, 0, vec![(1, 1.0)]),
            (1, 0, vec![(2, 1.0)]),
            (2, 0, vec![(2, 1.0)]),
        ];
        let labels = vec![Letter::EMPTY, Letter::EMPTY, Letter(1)];
        let m = LabeledMdp::new(3, 0, vec!["go".into()], rows, ab.clone(), labels).unwrap();
        // 0 (initial) loops on everything and jumps to 1; 1 moves to 2 on `a`, 2 accepts and loops on `a`.
        let edges = [
            (0, Letter(0), 0),
            (0, Letter(1), 0),
            (1, Letter(0), 1),
            (1, Letter(1), 2),
            (2, Letter(1), 2),
            (2, Letter(0), 1),
        ];
        let ldba = Ldba::from_parts(ab, 3, 0, &[0], &[2], &edges, &[(0, 1)]).unwrap();
        assert!(ldba.validate().ok());
        Product::new(m, ldba, rewards)
    }

    #[test]
    fn two_state_accepting_loop_converges_to_one() {
        // A one-state MDP labelled `a` under `F G a`-style acceptance: after the
        // jump every step enters the accepting state.
        let ab = Alphabet::new(["a"]).unwrap();
        let m = LabeledMdp::new(
            1,
            0,
            vec!["stay".into()],
            vec![(0, 0, vec![(0, 1.0)])],
            ab.clone(),
            vec![Letter(1)],
        )
        .unwrap();
        let edges = [(0, Letter(1), 0), (0, Letter(0), 0), (1, Letter(1), 1)];
        let ldba = Ldba::from_parts(ab, 2, 0, &[0], &[1], &edges, &[(0, 1)]).unwrap();
        let p = Product::new(m, ldba, RewardStructure::constant(0.3, 0.9).unwrap());
        let hp = Hyperparams {
            episodes: 200,
            max_steps: 50,
            epsilon: 0.2,
            ..Hyperparams::default()
        };
        let r = train(&p, &hp, 3, None).unwrap();
        assert!((r.q.get(0, 1, ProductAction::Env(0)) - 1.0).abs() < 1e-6);
        // Jumping is worth the discounted loop value plus the entry reward.
        let jump = r.q.get(0, 0, ProductAction::Eps(1));
        assert!((jump - 1.0).abs() < 1e-6, "{jump}");
    }

    #[test]
    fn chain_converges_to_bellman_fixpoint() {
        let u = 0.2;
        let gamma = 0.9;
        let p = chain_product(RewardStructure::constant(u, gamma).unwrap());
        let hp = Hyperparams {
            episodes: 3_000,
            max_steps: 12,
            epsilon: 0.3,
            ..Hyperparams::default()
        };
        let r = train(&p, &hp, 11, None).unwrap();
        let go = ProductAction::Env(0);
        // In component {1, 2} the accepting loop at s2 is worth 1.
        let v_loop = 1.0;
        // (s2, q1) --go--> enters q2 with reward U.
        let q_s2_q1 = u + (1.0 - u) * v_loop;
        // (s1, q1) reads the empty letter, stays in q1, lands in s2.
        let q_s1_q1 = gamma * q_s2_q1;
        let q_s0_q1 = gamma * q_s1_q1;
        for (s, q, want) in [
            (2, 2, v_loop),
            (2, 1, q_s2_q1),
            (1, 1, q_s1_q1),
            (0, 1, q_s0_q1),
        ] {
            let got = r.q.get(s, q, go);
            assert!(
                (got - want).abs() < 1e-3,
                "Q(({s},{q}),go) = {got}, want {want}"
            );
        }
        // The jump itself is a non-accepting, discounted step.
        assert!((r.q.get(0, 0, ProductAction::Eps(1)) - gamma * q_s0_q1).abs() < 1e-3);
    }

    fn gate_product() -> Product {
        Product::new(
            probabilistic_gate(),
            load_bundled("fga_gnc").unwrap(),
            RewardStructure::linear(10, 0.1, 0.99).unwrap(),
        )
    }

    #[test]
    fn zero_episodes_give_lowest_index_policy() {
        let p = gate_product();
        let hp = Hyperparams {
            episodes: 0,
            ..Hyperparams::default()
        };
        let r = train(&p, &hp, 0, None).unwrap();
        assert!(r.curve.is_empty());
        assert_eq!(r.steps, 0);
        for (s, q, a) in r.policy.entries() {
            assert_eq!(a, p.available_actions(ProductState { s, q, n: 0 })[0]);
        }
    }

    #[test]
    fn training_is_deterministic_and_bounded() {
        let p = gate_product();
        let ev = PolicyEvaluator::new(&p).unwrap();
        let hp = Hyperparams {
            episodes: 300,
            eval_interval: 1_000,
            ..Hyperparams::default()
        };
        let a = train(&p, &hp, 7, Some(&ev)).unwrap();
        let b = train(&p, &hp, 7, Some(&ev)).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.q, b.q);
        assert!(!a.curve.is_empty());
        for w in a.curve.windows(2) {
            assert_eq!(w[1].0 - w[0].0, 1_000);
        }
        let hi = f64::max(2.0 * p.rewards().u(), 1.0);
        assert!(a.q.values().iter().all(|&v| (0.0..=hi).contains(&v)));
    }

    #[test]
    fn counterfactual_updates_are_product_transitions() {
        let p = Product::new(
            crate::envs::frozen_lake8(),
            load_bundled("frozen_lake").unwrap(),
            RewardStructure::linear(10, 0.1, 0.99).unwrap(),
        );
        let hp = Hyperparams {
            episodes: 20,
            max_steps: 200,
            counterfactual: true,
            verify_transitions: true,
            ..Hyperparams::default()
        };
        let r = train(&p, &hp, 5, None).unwrap();
        assert!(r.steps > 0);
    }

    #[test]
    fn counterfactual_flag_off_matches_plain_training() {
        let p = gate_product();
        let plain = Hyperparams {
            episodes: 50,
            ..Hyperparams::default()
        };
        let a = train(&p, &plain, 2, None).unwrap();
        let b = train(
            &p,
            &Hyperparams {
                counterfactual: false,
                ..plain.clone()
            },
            2,
            None,
        )
        .unwrap();
        assert_eq!(a.q, b.q);
        let cf = train(
            &p,
            &Hyperparams {
                counterfactual: true,
                ..plain
            },
            2,
            None,
        )
        .unwrap();
        assert_ne!(a.q, cf.q);
    }
}
