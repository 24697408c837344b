use nalgebra::{DMatrix, DVector};

use super::McError;
use crate::graph::tarjan_scc;

/// Components up to this size are solved by dense LU; larger ones iteratively.
pub(crate) const DENSE_LIMIT: usize = 1_000;
/// Residual at which iterative solving stops.
pub(crate) const RESIDUAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 10_000_000;

/// Solves `x_i = b_i + Σ_j w_ij·x_j` for every `i` with `fixed[i] == None`;
/// fixed entries keep their value.
///
/// The unknowns are split into strongly connected components that are solved
/// one at a time in dependency order, so each solve only sees one component.
pub(crate) fn solve_fixpoint(
    weights: &[Vec<(usize, f64)>],
    b: &[f64],
    fixed: &[Option<f64>],
) -> Result<Vec<f64>, McError> {
    let n = weights.len();
    let mut x: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if fixed[i].is_some() {
                Vec::new()
            } else {
                weights[i]
                    .iter()
                    .filter(|&&(j, _)| fixed[j].is_none())
                    .map(|&(j, _)| j)
                    .collect()
            }
        })
        .collect();
    let mut local = vec![usize::MAX; n];
    for comp in tarjan_scc(&adj) {
        if fixed[comp[0]].is_some() {
            continue;
        }
        for (k, &v) in comp.iter().enumerate() {
            local[v] = k;
        }
        // Right-hand side including everything already solved outside the component.
        let rhs: Vec<f64> = comp
            .iter()
            .map(|&v| {
                b[v] + weights[v]
                    .iter()
                    .filter(|&&(j, _)| local[j] == usize::MAX)
                    .map(|&(j, w)| w * x[j])
                    .sum::<f64>()
            })
            .collect();
        let values = if comp.len() <= DENSE_LIMIT {
            solve_dense(&comp, weights, &local, &rhs)?
        } else {
            solve_iterative(&comp, weights, &local, &rhs)?
        };
        for (&v, val) in comp.iter().zip(values) {
            x[v] = val;
        }
        for &v in &comp {
            local[v] = usize::MAX;
        }
    }
    Ok(x)
}

fn solve_dense(
    comp: &[usize],
    weights: &[Vec<(usize, f64)>],
    local: &[usize],
    rhs: &[f64],
) -> Result<Vec<f64>, McError> {
    let m = comp.len();
    if m == 1 {
        let v = comp[0];
        let self_w: f64 = weights[v]
            .iter()
            .filter(|&&(j, _)| j == v)
            .map(|&(_, w)| w)
            .sum();
        let denom = 1.0 - self_w;
        if denom.abs() < 1e-300 {
            return Err(McError::Singular);
        }
        return Ok(vec![rhs[0] / denom]);
    }
    let mut a = DMatrix::<f64>::identity(m, m);
    for (k, &v) in comp.iter().enumerate() {
        for &(j, w) in &weights[v] {
            if local[j] != usize::MAX {
                a[(k, local[j])] -= w;
            }
        }
    }
    let sol = a
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .ok_or(McError::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(McError::Singular);
    }
    Ok(sol.iter().copied().collect())
}

fn solve_iterative(
    comp: &[usize],
    weights: &[Vec<(usize, f64)>],
    local: &[usize],
    rhs: &[f64],
) -> Result<Vec<f64>, McError> {
    let inside = |j: usize| local[j] != usize::MAX;
    let rows: Vec<(f64, Vec<(usize, f64)>)> = comp
        .iter()
        .map(|&v| {
            let mut diag = 1.0;
            let mut off = Vec::new();
            for &(j, w) in &weights[v] {
                if j == v {
                    diag -= w;
                } else if inside(j) {
                    off.push((local[j], w));
                }
            }
            (diag, off)
        })
        .collect();
    if rows.iter().any(|(d, _)| *d <= 0.0) {
        return Err(McError::Singular);
    }
    let mut x = vec![0.0; comp.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        residual = 0.0;
        for (k, (diag, off)) in rows.iter().enumerate() {
            let s: f64 = off.iter().map(|&(l, w)| w * x[l]).sum();
            let new = (rhs[k] + s) / diag;
            residual = f64::max(residual, (new - x[k]).abs());
            x[k] = new;
        }
        if residual <= RESIDUAL_TOLERANCE {
            return Ok(x);
        }
    }
    Err(McError::NotConverged(residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_iterative_agree() {
        // A ring with leakage to a fixed node 0 of value 1.
        let n = 40;
        let mut weights = vec![Vec::new(); n];
        for (i, row) in weights.iter_mut().enumerate().skip(1) {
            let next = if i + 1 < n { i + 1 } else { 1 };
            *row = vec![(next, 0.7), (0, 0.2)];
        }
        let b = vec![0.05; n];
        let mut fixed = vec![None; n];
        fixed[0] = Some(1.0);
        let dense = solve_fixpoint(&weights, &b, &fixed).unwrap();
        let comp: Vec<usize> = (1..n).collect();
        let mut local = vec![usize::MAX; n];
        for (k, &v) in comp.iter().enumerate() {
            local[v] = k;
        }
        let rhs: Vec<f64> = comp.iter().map(|_| 0.05 + 0.2).collect();
        let iter = solve_iterative(&comp, &weights, &local, &rhs).unwrap();
        for (k, &v) in comp.iter().enumerate() {
            assert!((dense[v] - iter[k]).abs() < 1e-10);
        }
        // Symmetric ring: every unknown has the same value v = 0.25 + 0.7 v.
        assert!((dense[5] - 0.25 / 0.3).abs() < 1e-12);
    }
}
