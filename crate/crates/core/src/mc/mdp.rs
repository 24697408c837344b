use super::McError;
use crate::graph::{backward_reachable, tarjan_scc};
use crate::product::ExplicitProduct;

/// Largest per-sweep change at which value iteration stops.
const VI_TOLERANCE: f64 = 1e-13;
const VI_MAX_SWEEPS: usize = 10_000_000;

/// State sets of the maximal end components.
///
/// Repeatedly splits the graph into SCCs and drops every choice that can
/// leave its SCC, until stable.
pub fn maximal_end_components(p: &ExplicitProduct) -> Vec<Vec<usize>> {
    let n = p.len();
    let mut allowed: Vec<Vec<usize>> = p.choices.iter().map(|c| (0..c.len()).collect()).collect();
    loop {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                allowed[i]
                    .iter()
                    .flat_map(|&c| p.choices[i][c].outcomes.iter().map(|o| o.to))
                    .collect()
            })
            .collect();
        let sccs = tarjan_scc(&adj);
        let mut comp_of = vec![0; n];
        for (k, c) in sccs.iter().enumerate() {
            for &v in c {
                comp_of[v] = k;
            }
        }
        let mut changed = false;
        for i in 0..n {
            let before = allowed[i].len();
            allowed[i].retain(|&c| {
                p.choices[i][c]
                    .outcomes
                    .iter()
                    .all(|o| comp_of[o.to] == comp_of[i] && !p.choices[o.to].is_empty())
            });
            changed |= allowed[i].len() != before;
        }
        if !changed {
            return sccs
                .into_iter()
                .filter(|c| c.iter().all(|&v| !allowed[v].is_empty()))
                .collect();
        }
    }
}

/// Optimal Büchi satisfaction probabilities of an explicit product.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxBuchi {
    pub values: Vec<f64>,
    pub init: f64,
}

/// Maximum over policies of the probability of visiting accepting states
/// infinitely often: maximal reachability of accepting end components.
pub fn mdp_max_buchi_probability(p: &ExplicitProduct) -> Result<MaxBuchi, McError> {
    let n = p.len();
    let mut target = vec![false; n];
    for mec in maximal_end_components(p) {
        if mec.iter().any(|&v| p.accepting[v]) {
            for v in mec {
                target[v] = true;
            }
        }
    }
    let adj: Vec<Vec<usize>> = p
        .choices
        .iter()
        .map(|cs| {
            cs.iter()
                .flat_map(|c| c.outcomes.iter().map(|o| o.to))
                .collect()
        })
        .collect();
    let can_reach = backward_reachable(&adj, &target);
    let sure = almost_sure_reach(p, &target, &can_reach);
    let mut x: Vec<f64> = (0..n).map(|v| if sure[v] { 1.0 } else { 0.0 }).collect();
    let open: Vec<usize> = (0..n).rev().filter(|&v| can_reach[v] && !sure[v]).collect();
    let mut delta = f64::INFINITY;
    for _ in 0..VI_MAX_SWEEPS {
        delta = 0.0;
        for &v in &open {
            let best = p.choices[v]
                .iter()
                .map(|c| {
                    c.outcomes
                        .iter()
                        .map(|o| o.probability * x[o.to])
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            delta = f64::max(delta, (best - x[v]).abs());
            x[v] = best;
        }
        if delta <= VI_TOLERANCE {
            for v in &mut x {
                *v = v.clamp(0.0, 1.0);
            }
            return Ok(MaxBuchi {
                init: x[0],
                values: x,
            });
        }
    }
    Err(McError::NotConverged(delta))
}

/// States from which some policy reaches `target` with probability 1.
fn almost_sure_reach(p: &ExplicitProduct, target: &[bool], can_reach: &[bool]) -> Vec<bool> {
    let n = p.len();
    let mut keep: Vec<bool> = can_reach.to_vec();
    loop {
        // Least fixpoint: states reaching target using choices that stay in `keep`.
        let mut reach = target.to_vec();
        let mut grew = true;
        while grew {
            grew = false;
            for v in 0..n {
                if reach[v] || !keep[v] {
                    continue;
                }
                let ok = p.choices[v].iter().any(|c| {
                    c.outcomes.iter().all(|o| keep[o.to]) && c.outcomes.iter().any(|o| reach[o.to])
                });
                if ok {
                    reach[v] = true;
                    grew = true;
                }
            }
        }
        if reach == keep {
            return reach;
        }
        keep = reach;
    }
}
