//! The K-counter product of a labelled MDP with an LDBA.
//!
//! A product state `(s, q, n)` pairs an environment state, an automaton state
//! and a saturating counter of accepting visits. Environment actions move the
//! automaton on the label of the *current* environment state; ε-actions jump
//! inside the automaton without moving the environment. Entering an accepting
//! automaton state pays `R_n` (indexed by the source counter) and uses the
//! discount `1 - R_n`; every other transition pays nothing and uses `γ`.

use std::collections::{HashMap, VecDeque};

use crate::automata::Ldba;
use crate::envs::LabeledMdp;
use crate::ltl::Letter;

/// Default limit on enumerated product states.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;
/// Environment variable overriding [`DEFAULT_STATE_CAP`].
pub const STATE_CAP_VAR: &str = "BUCHI_RL_STATE_CAP";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProductError {
    #[error("action {action:?} is not available in {state:?}")]
    UnavailableAction {
        state: ProductState,
        action: ProductAction,
    },
    #[error("reachable product has more than {0} states")]
    StateCap(usize),
    #[error("invalid reward structure: {0}")]
    Reward(String),
}

/// `(s, q, n)`. `q == num_automaton_states` denotes the rejecting trap entered
/// when the automaton has no move on a label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductState {
    pub s: usize,
    pub q: usize,
    pub n: usize,
}

/// Environment actions come first in the action order, then ε-jumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProductAction {
    Env(usize),
    Eps(usize),
}

impl ProductAction {
    /// Dense index: `Env(a) -> a`, `Eps(q) -> num_env_actions + q`.
    pub fn index(self, num_env_actions: usize) -> usize {
        match self {
            ProductAction::Env(a) => a,
            ProductAction::Eps(q) => num_env_actions + q,
        }
    }

    pub fn from_index(index: usize, num_env_actions: usize) -> Self {
        if index < num_env_actions {
            ProductAction::Env(index)
        } else {
            ProductAction::Eps(index - num_env_actions)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardSchedule {
    /// `R_n = U·n/K`.
    Linear,
    /// `K = 0`, `R_0 = U`.
    Constant,
    /// `R_n = U·(n+1)/(K+1)`, strictly positive for every `n`.
    StrictlyPositiveLinear,
}

impl RewardSchedule {
    pub fn name(self) -> &'static str {
        match self {
            RewardSchedule::Linear => "linear",
            RewardSchedule::Constant => "constant",
            RewardSchedule::StrictlyPositiveLinear => "strictly_positive_linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Linear, Self::Constant, Self::StrictlyPositiveLinear]
            .into_iter()
            .find(|r| r.name() == s)
    }
}

/// Counter cap `K`, reward bound `U`, rewards `R_0..=R_K` and base discount `γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardStructure {
    k: usize,
    u: f64,
    rewards: Vec<f64>,
    gamma: f64,
}

impl RewardStructure {
    pub fn new(u: f64, rewards: Vec<f64>, gamma: f64) -> Result<Self, ProductError> {
        let bad = |m: String| Err(ProductError::Reward(m));
        if !(u > 0.0 && u <= 1.0) {
            return bad(format!("U = {u} is outside (0, 1]"));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return bad(format!("gamma = {gamma} is outside (0, 1]"));
        }
        if rewards.is_empty() {
            return bad("no rewards".into());
        }
        if let Some(r) = rewards.iter().find(|&&r| !(0.0..=u).contains(&r)) {
            return bad(format!("reward {r} is outside [0, U]"));
        }
        Ok(Self {
            k: rewards.len() - 1,
            u,
            rewards,
            gamma,
        })
    }

    /// `R_n = U·n/K`; note `R_0 = 0`.
    pub fn linear(k: usize, u: f64, gamma: f64) -> Result<Self, ProductError> {
        if k == 0 {
            return Err(ProductError::Reward(
                "the linear schedule needs K >= 1; use the constant schedule for K = 0".into(),
            ));
        }
        Self::new(
            u,
            (0..=k).map(|n| u * (n as f64 / k as f64)).collect(),
            gamma,
        )
    }

    /// `K = 0` and `R_0 = U`.
    pub fn constant(u: f64, gamma: f64) -> Result<Self, ProductError> {
        Self::new(u, vec![u], gamma)
    }

    /// `R_n = U·(n+1)/(K+1)`.
    pub fn strictly_positive_linear(k: usize, u: f64, gamma: f64) -> Result<Self, ProductError> {
        Self::new(
            u,
            (0..=k)
                .map(|n| u * ((n + 1) as f64 / (k + 1) as f64))
                .collect(),
            gamma,
        )
    }

    pub fn from_schedule(
        schedule: RewardSchedule,
        k: usize,
        u: f64,
        gamma: f64,
    ) -> Result<Self, ProductError> {
        match schedule {
            RewardSchedule::Linear => Self::linear(k, u, gamma),
            RewardSchedule::Constant => Self::constant(u, gamma),
            RewardSchedule::StrictlyPositiveLinear => Self::strictly_positive_linear(k, u, gamma),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn reward(&self, n: usize) -> f64 {
        self.rewards[n]
    }

    /// Discount attached to a transition paying `reward`.
    pub fn discount(&self, reward: f64) -> f64 {
        if reward > 0.0 {
            1.0 - reward
        } else {
            self.gamma
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductTransition {
    pub from: ProductState,
    pub action: ProductAction,
    pub to: ProductState,
    pub probability: f64,
    pub reward: f64,
    pub discount: f64,
}

/// Everything a product transition produces except the probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub to: ProductState,
    pub reward: f64,
    pub discount: f64,
}

/// On-the-fly product of an MDP, an LDBA and a reward structure.
#[derive(Clone, Debug)]
pub struct Product {
    mdp: LabeledMdp,
    ldba: Ldba,
    rewards: RewardStructure,
    /// Environment labels projected onto the automaton alphabet.
    letters: Vec<Letter>,
}

impl Product {
    /// Atoms of the MDP that the automaton does not mention are ignored;
    /// automaton atoms the MDP never emits are always false.
    pub fn new(mdp: LabeledMdp, ldba: Ldba, rewards: RewardStructure) -> Self {
        let env_ab = mdp.alphabet();
        let mapping: Vec<Option<usize>> = env_ab
            .atoms()
            .iter()
            .map(|a| ldba.alphabet().index_of(a))
            .collect();
        let letters = (0..mdp.num_states())
            .map(|s| {
                let l = mdp.label(s);
                let bits = mapping
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| l.contains(i))
                    .filter_map(|(_, m)| *m)
                    .fold(0u64, |acc, j| acc | (1 << j));
                Letter(bits)
            })
            .collect();
        Self {
            mdp,
            ldba,
            rewards,
            letters,
        }
    }

    pub fn mdp(&self) -> &LabeledMdp {
        &self.mdp
    }

    pub fn ldba(&self) -> &Ldba {
        &self.ldba
    }

    pub fn rewards(&self) -> &RewardStructure {
        &self.rewards
    }

    /// The same product with a different reward structure.
    pub fn with_rewards(&self, rewards: RewardStructure) -> Self {
        Self {
            rewards,
            ..self.clone()
        }
    }

    /// Automaton states plus the trap.
    pub fn num_automaton_states(&self) -> usize {
        self.ldba.num_states() + 1
    }

    pub fn trap(&self) -> usize {
        self.ldba.num_states()
    }

    /// Width of the dense action index space.
    pub fn num_action_slots(&self) -> usize {
        self.mdp.num_actions() + self.ldba.num_states()
    }

    pub fn initial(&self) -> ProductState {
        ProductState {
            s: self.mdp.init(),
            q: self.ldba.initial(),
            n: 0,
        }
    }

    /// Automaton label of environment state `s`.
    pub fn letter(&self, s: usize) -> Letter {
        self.letters[s]
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.ldba.is_accepting(q)
    }

    /// Available actions at `(s, q)`; independent of the counter.
    pub fn actions_at(&self, s: usize, q: usize) -> impl Iterator<Item = ProductAction> + '_ {
        let eps: &[usize] = if q < self.ldba.num_states() {
            self.ldba.epsilon_successors(q).unwrap_or(&[])
        } else {
            &[]
        };
        self.mdp
            .actions(s)
            .iter()
            .map(|&a| ProductAction::Env(a))
            .chain(eps.iter().map(|&q2| ProductAction::Eps(q2)))
    }

    pub fn available_actions(&self, st: ProductState) -> Vec<ProductAction> {
        self.actions_at(st.s, st.q).collect()
    }

    pub fn is_available(&self, st: ProductState, act: ProductAction) -> bool {
        match act {
            ProductAction::Env(a) => self.mdp.actions(st.s).contains(&a),
            ProductAction::Eps(q2) => {
                st.q < self.ldba.num_states()
                    && self
                        .ldba
                        .epsilon_successors(st.q)
                        .is_ok_and(|e| e.contains(&q2))
            }
        }
    }

    /// Automaton successor on the label of `s`; the trap when there is none.
    pub fn automaton_step(&self, s: usize, q: usize) -> usize {
        if q >= self.ldba.num_states() {
            return self.trap();
        }
        self.ldba.step(q, self.letters[s]).unwrap_or(self.trap())
    }

    fn settle(&self, s: usize, q2: usize, n: usize) -> Step {
        let accepting = q2 < self.ldba.num_states() && self.ldba.is_accepting(q2);
        let (reward, n2) = if accepting {
            (self.rewards.reward(n), (n + 1).min(self.rewards.k()))
        } else {
            (0.0, n)
        };
        Step {
            to: ProductState { s, q: q2, n: n2 },
            reward,
            discount: self.rewards.discount(reward),
        }
    }

    /// The product transition taken by `act` when the environment lands in
    /// `next_s` (ignored for ε-actions). Availability is not checked.
    pub fn step(&self, st: ProductState, act: ProductAction, next_s: usize) -> Step {
        match act {
            ProductAction::Env(_) => self.settle(next_s, self.automaton_step(st.s, st.q), st.n),
            ProductAction::Eps(q2) => {
                let mut step = self.settle(st.s, q2, st.n);
                // ε-moves never advance the counter.
                step.to.n = st.n;
                step
            }
        }
    }

    /// All transitions of `act` from `st`.
    pub fn successors(
        &self,
        st: ProductState,
        act: ProductAction,
    ) -> Result<Vec<ProductTransition>, ProductError> {
        if !self.is_available(st, act) {
            return Err(ProductError::UnavailableAction {
                state: st,
                action: act,
            });
        }
        let outcomes: Vec<(usize, f64)> = match act {
            ProductAction::Env(a) => self
                .mdp
                .distribution(st.s, a)
                .expect("availability checked")
                .to_vec(),
            ProductAction::Eps(_) => vec![(st.s, 1.0)],
        };
        Ok(outcomes
            .into_iter()
            .map(|(s2, p)| {
                let step = self.step(st, act, s2);
                ProductTransition {
                    from: st,
                    action: act,
                    to: step.to,
                    probability: p,
                    reward: step.reward,
                    discount: step.discount,
                }
            })
            .collect())
    }

    /// Breadth-first enumeration of the reachable product.
    pub fn enumerate(&self) -> Result<ExplicitProduct, ProductError> {
        self.enumerate_with_cap(state_cap())
    }

    pub fn enumerate_with_cap(&self, cap: usize) -> Result<ExplicitProduct, ProductError> {
        let mut states = vec![self.initial()];
        let mut index = HashMap::from([(self.initial(), 0usize)]);
        let mut choices = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let st = states[i];
            let mut here = Vec::new();
            for act in self.available_actions(st) {
                let mut outcomes = Vec::new();
                for t in self.successors(st, act)? {
                    let j = match index.get(&t.to) {
                        Some(&j) => j,
                        None => {
                            if states.len() >= cap {
                                return Err(ProductError::StateCap(cap));
                            }
                            let j = states.len();
                            states.push(t.to);
                            index.insert(t.to, j);
                            queue.push_back(j);
                            j
                        }
                    };
                    outcomes.push(Outcome {
                        to: j,
                        probability: t.probability,
                        reward: t.reward,
                        discount: t.discount,
                    });
                }
                here.push(Choice {
                    action: act,
                    outcomes,
                });
            }
            debug_assert_eq!(choices.len(), i);
            choices.push(here);
        }
        let accepting = states
            .iter()
            .map(|st| st.q < self.ldba.num_states() && self.ldba.is_accepting(st.q))
            .collect();
        Ok(ExplicitProduct {
            states,
            index,
            choices,
            accepting,
        })
    }
}

/// A deterministic memoryless product policy that ignores the counter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollapsedPolicy {
    num_q: usize,
    actions: Vec<Option<ProductAction>>,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl CollapsedPolicy {
    /// An empty policy for `num_s` environment states and `num_q` automaton
    /// states (including the trap).
    pub fn new(num_s: usize, num_q: usize) -> Self {
        Self {
            num_q,
            actions: vec![None; num_s * num_q],
        }
    }

    pub fn for_product(product: &Product) -> Self {
        Self::new(product.mdp().num_states(), product.num_automaton_states())
    }

    pub fn get(&self, s: usize, q: usize) -> Option<ProductAction> {
        self.actions.get(s * self.num_q + q).copied().flatten()
    }

    pub fn set(&mut self, s: usize, q: usize, act: ProductAction) {
        self.actions[s * self.num_q + q] = Some(act);
    }

    pub fn action(&self, st: ProductState) -> Option<ProductAction> {
        self.get(st.s, st.q)
    }

    /// Defined entries as `(s, q, action)`, ordered by `(s, q)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, ProductAction)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .filter_map(move |(i, a)| a.map(|a| (i / self.num_q, i % self.num_q, a)))
    }

    /// One `s q action` line per defined entry; actions are `env:<name>` or `eps:<q>`.
    pub fn to_text(&self, product: &Product) -> String {
        let mut out = String::from("# s q action\n");
        for (s, q, a) in self.entries() {
            let act = match a {
                ProductAction::Env(a) => format!("env:{}", product.mdp().action_names()[a]),
                ProductAction::Eps(q2) => format!("eps:{q2}"),
            };
            out.push_str(&format!("{s} {q} {act}\n"));
        }
        out
    }

    pub fn parse(text: &str, product: &Product) -> Result<Self, PolicyFileError> {
        let mut policy = Self::for_product(product);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| PolicyFileError::Parse { line: i + 1, msg };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [s, q, act] = parts[..] else {
                return Err(err("expected `s q action`".into()));
            };
            let s: usize = s.parse().map_err(|e| err(format!("state: {e}")))?;
            let q: usize = q
                .parse()
                .map_err(|e| err(format!("automaton state: {e}")))?;
            if s >= product.mdp().num_states() || q >= product.num_automaton_states() {
                return Err(err(format!("({s}, {q}) is out of range")));
            }
            let act = match act.split_once(':') {
                Some(("env", name)) => ProductAction::Env(
                    product
                        .mdp()
                        .action_index(name)
                        .ok_or_else(|| err(format!("unknown action {name:?}")))?,
                ),
                Some(("eps", q2)) => {
                    ProductAction::Eps(q2.parse().map_err(|e| err(format!("ε target: {e}")))?)
                }
                _ => return Err(err(format!("bad action {act:?}"))),
            };
            if !product.is_available(ProductState { s, q, n: 0 }, act) {
                return Err(err(format!("{act:?} is not available at ({s}, {q})")));
            }
            policy.set(s, q, act);
        }
        Ok(policy)
    }
}

/// The product-state cap, honouring `BUCHI_RL_STATE_CAP`.
pub fn state_cap() -> usize {
    std::env::var(STATE_CAP_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_STATE_CAP)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub to: usize,
    pub probability: f64,
    pub reward: f64,
    pub discount: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub action: ProductAction,
    pub outcomes: Vec<Outcome>,
}

/// Reachable fragment of a product, states numbered in BFS order from index 0.
#[derive(Clone, Debug)]
pub struct ExplicitProduct {
    pub states: Vec<ProductState>,
    index: HashMap<ProductState, usize>,
    /// `choices[i]` lists the available actions of state `i` in action order.
    pub choices: Vec<Vec<Choice>>,
    /// Whether the automaton component of state `i` is accepting.
    pub accepting: Vec<bool>,
}

impl ExplicitProduct {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, st: &ProductState) -> Option<usize> {
        self.index.get(st).copied()
    }

    pub fn choice(&self, i: usize, act: ProductAction) -> Option<&Choice> {
        self.choices[i].iter().find(|c| c.action == act)
    }

    pub fn num_transitions(&self) -> usize {
        self.choices
            .iter()
            .flatten()
            .map(|c| c.outcomes.len())
            .sum()
    }

    /// Smallest nonzero transition probability.
    pub fn p_min(&self) -> f64 {
        self.choices
            .iter()
            .flatten()
            .flat_map(|c| c.outcomes.iter().map(|o| o.probability))
            .fold(1.0, f64::min)
    }
}
