//! Stationary distributions of the instantiated chain.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::ChainModel;
use crate::error::{Error, Result};

/// Largest closed class solved by dense elimination.
pub const DENSE_CAP: usize = 2048;
/// Required `‖πP − π‖₁`.
pub const RESIDUAL_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMethod {
    Gth,
    PowerIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub epsilon: f64,
    pub pi: Vec<f64>,
    pub residual: f64,
    pub method: StationaryMethod,
    /// States of the unique closed communicating class.
    pub recurrent: Vec<usize>,
    /// States carrying no stationary mass.
    pub transient: Vec<usize>,
}

impl Stationary {
    pub fn mass(&self, states: &[usize]) -> f64 {
        states.iter().map(|&x| self.pi[x]).sum()
    }

    pub fn min_recurrent_mass(&self) -> f64 {
        self.recurrent.iter().map(|&x| self.pi[x]).fold(f64::INFINITY, f64::min)
    }
}

/// Grassmann–Taylor–Heyman elimination for an irreducible dense stochastic
/// matrix. Subtraction-free, so small transition probabilities keep their
/// relative accuracy.
pub fn gth_stationary(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if p.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    let mut a: Vec<Vec<f64>> = p.to_vec();
    for k in (1..n).rev() {
        let s: f64 = a[k][..k].iter().sum();
        if !(s > 0.0) {
            return Err(Error::Analysis(format!("matrix is reducible at elimination step {k}")));
        }
        for i in 0..k {
            a[i][k] /= s;
        }
        let (upper, lower) = a.split_at_mut(k);
        let row_k = &lower[0];
        for row in upper.iter_mut() {
            let f = row[k];
            if f != 0.0 {
                for j in 0..k {
                    row[j] += f * row_k[j];
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * a[i][k]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// `π ← π P` from `start` until successive iterates differ by less than `tol`
/// in ℓ₁.
pub fn power_iteration(rows: &[Vec<(usize, f64)>], start: &[f64], tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let mut pi = start.to_vec();
    let mut next = vec![0.0; pi.len()];
    for _ in 0..max_iters {
        step(rows, &pi, &mut next);
        let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < tol {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|v| *v /= total);
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence { what: "power iteration", iterations: max_iters })
}

/// `out = π P` for sparse rows.
pub(crate) fn step(rows: &[Vec<(usize, f64)>], pi: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (x, row) in rows.iter().enumerate() {
        let m = pi[x];
        if m != 0.0 {
            for &(y, p) in row {
                out[y] += m * p;
            }
        }
    }
}

pub(crate) fn residual(rows: &[Vec<(usize, f64)>], pi: &[f64]) -> f64 {
    let mut next = vec![0.0; pi.len()];
    step(rows, pi, &mut next);
    next.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

/// The unique closed communicating class of the transition graph.
pub fn closed_class(model: &ChainModel) -> Result<Vec<usize>> {
    let n = model.num_states();
    let mut g = DiGraph::<(), ()>::with_capacity(n, model.num_edges());
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for x in 0..n {
        for e in model.edges(x) {
            g.add_edge(nodes[x], nodes[e.target], ());
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; n];
    for (k, scc) in sccs.iter().enumerate() {
        for v in scc {
            comp[v.index()] = k;
        }
    }
    let closed: Vec<&Vec<_>> = sccs
        .iter()
        .enumerate()
        .filter(|(k, scc)| {
            scc.iter().all(|v| model.edges(v.index()).iter().all(|e| comp[e.target] == *k))
        })
        .map(|(_, scc)| scc)
        .collect();
    match closed.as_slice() {
        [one] => {
            let mut states: Vec<usize> = one.iter().map(|v| v.index()).collect();
            states.sort_unstable();
            Ok(states)
        }
        _ => Err(Error::Analysis(format!("chain has {} closed classes; expected exactly one", closed.len()))),
    }
}

/// Exact `π_ε`: dense elimination on the closed class when it fits, power
/// iteration otherwise. Transient states get zero mass.
pub fn stationary_distribution(model: &ChainModel, epsilon: f64) -> Result<Stationary> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon {epsilon} must lie in (0, 1)")));
    }
    let n = model.num_states();
    let rows = model.transition_rows(epsilon);
    for (x, row) in rows.iter().enumerate() {
        let s: f64 = row.iter().map(|(_, p)| p).sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!("row {x} of P sums to {s}")));
        }
    }
    let recurrent = closed_class(model)?;
    let mut pi = vec![0.0; n];
    let method = if recurrent.len() <= DENSE_CAP {
        let mut local = vec![usize::MAX; n];
        for (k, &x) in recurrent.iter().enumerate() {
            local[x] = k;
        }
        let m = recurrent.len();
        let mut dense = vec![vec![0.0; m]; m];
        for (k, &x) in recurrent.iter().enumerate() {
            for &(y, p) in &rows[x] {
                dense[k][local[y]] += p;
            }
        }
        for (k, v) in gth_stationary(&dense)?.into_iter().enumerate() {
            pi[recurrent[k]] = v;
        }
        StationaryMethod::Gth
    } else {
        let mut start = vec![0.0; n];
        for &x in &recurrent {
            start[x] = 1.0 / recurrent.len() as f64;
        }
        pi = power_iteration(&rows, &start, 1e-15, POWER_MAX_ITERS)?;
        StationaryMethod::PowerIteration
    };
    let res = residual(&rows, &pi);
    if res > RESIDUAL_TOL {
        return Err(Error::Analysis(format!("stationary residual {res} exceeds {RESIDUAL_TOL}")));
    }
    let in_class: std::collections::HashSet<usize> = recurrent.iter().copied().collect();
    let transient = (0..n).filter(|x| !in_class.contains(x)).collect();
    Ok(Stationary { epsilon, pi, residual: res, method, recurrent, transient })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_two_state_chain_is_uniform() {
        let p = vec![vec![0.3, 0.7], vec![0.7, 0.3]];
        let pi = gth_stationary(&p).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gth_matches_power_iteration() {
        let p = vec![vec![0.5, 0.25, 0.25], vec![0.1, 0.8, 0.1], vec![0.0, 0.6, 0.4]];
        let a = gth_stationary(&p).unwrap();
        let rows: Vec<Vec<(usize, f64)>> =
            p.iter().map(|r| r.iter().cloned().enumerate().filter(|(_, v)| *v > 0.0).collect()).collect();
        let b = power_iteration(&rows, &[1.0, 0.0, 0.0], 1e-15, 100_000).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(residual(&rows, &a) < 1e-15);
    }

    #[test]
    fn reducible_matrix_is_rejected() {
        let p = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(gth_stationary(&p).is_err());
    }
}
