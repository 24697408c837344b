#![allow(dead_code)]

use buchi_rl::automata::{load_bundled, Ldba, BUNDLED};
use buchi_rl::envs::{probabilistic_gate, LabeledMdp};
use buchi_rl::ltl::Letter;
use buchi_rl::product::{CollapsedPolicy, Product, ProductAction, RewardStructure};
use rand::Rng;

pub const GATE_START: usize = 10;
pub const GATE_ACCEPTING_SINK: usize = 29;

pub fn gate_product(k: usize, u: f64, gamma: f64) -> Product {
    Product::new(
        probabilistic_gate(),
        load_bundled("fga_gnc").unwrap(),
        RewardStructure::linear(k, u, gamma).unwrap(),
    )
}

/// Down from the start, right along the middle row, and jump into the
/// accepting component once standing on the `a` sink.
pub fn optimal_gate_policy(p: &Product) -> CollapsedPolicy {
    let m = p.mdp();
    let right = m.action_index("right").unwrap();
    let down = m.action_index("down").unwrap();
    let mut policy = CollapsedPolicy::for_product(p);
    for s in 0..m.num_states() {
        let a = if m.actions(s).contains(&right) {
            right
        } else {
            m.actions(s)[0]
        };
        for q in 0..p.num_automaton_states() {
            policy.set(s, q, ProductAction::Env(a));
        }
    }
    let init = p.ldba().initial();
    policy.set(GATE_START, init, ProductAction::Env(down));
    let jump = p.ldba().epsilon_successors(init).unwrap()[0];
    policy.set(GATE_ACCEPTING_SINK, init, ProductAction::Eps(jump));
    policy
}

/// A small random labelled MDP over `ldba`'s alphabet with two actions.
pub fn random_mdp<R: Rng>(ldba: &Ldba, rng: &mut R) -> LabeledMdp {
    let n = rng.gen_range(2..=6);
    let mut rows = Vec::new();
    for s in 0..n {
        for a in 0..2 {
            let k = rng.gen_range(1..=3.min(n));
            let mut targets: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.gen_range(i..n);
                targets.swap(i, j);
            }
            let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(1..=4) as f64).collect();
            let total: f64 = weights.iter().sum();
            let mut dist: Vec<(usize, f64)> = targets[..k]
                .iter()
                .zip(&weights)
                .map(|(&t, &w)| (t, w / total))
                .collect();
            let head: f64 = dist[1..].iter().map(|&(_, p)| p).sum();
            dist[0].1 = 1.0 - head;
            rows.push((s, a, dist));
        }
    }
    let letters = ldba.alphabet().letter_count() as u64;
    let labels = (0..n).map(|_| Letter(rng.gen_range(0..letters))).collect();
    LabeledMdp::new(
        n,
        0,
        vec!["x".into(), "y".into()],
        rows,
        ldba.alphabet().clone(),
        labels,
    )
    .unwrap()
}

/// A uniformly random deterministic policy over the available actions.
pub fn random_policy<R: Rng>(p: &Product, rng: &mut R) -> CollapsedPolicy {
    let mut policy = CollapsedPolicy::for_product(p);
    for s in 0..p.mdp().num_states() {
        for q in 0..p.num_automaton_states() {
            let acts: Vec<ProductAction> = p.actions_at(s, q).collect();
            policy.set(s, q, acts[rng.gen_range(0..acts.len())]);
        }
    }
    policy
}

pub fn bundled_automata() -> Vec<(&'static str, Ldba)> {
    BUNDLED
        .iter()
        .map(|b| (b.name, load_bundled(b.name).unwrap()))
        .collect()
}
