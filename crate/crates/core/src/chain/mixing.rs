//! Ergodic coefficients, mixing-time bounds and exact TV decay curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stationary::step;
use super::{ChainAlgorithm, ChainModel, Stationary};
use crate::error::{Error, Result};
use crate::numeric::tv_distance;

const ROW_TOL: f64 = 1e-12;
/// Slack allowed when comparing a TV distance against its bound.
pub const BOUND_SLACK: f64 = 1e-12;

/// Largest total-variation distance between two rows of `p`.
pub fn ergodic_coefficient(p: &[Vec<f64>]) -> Result<f64> {
    let n = p.len();
    for (x, row) in p.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidInput("matrix is not square".into()));
        }
        if row.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidInput(format!("row {x} has a negative or NaN entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidInput(format!("row {x} sums to {s}")));
        }
    }
    let worst = (0..n)
        .into_par_iter()
        .map(|x| ((x + 1)..n).map(|y| tv_distance(&p[x], &p[y])).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    Ok(worst.clamp(0.0, 1.0))
}

fn check_bound_args(epsilon: f64, c: f64, n: usize, zeta: f64) -> Result<()> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::Config(format!("zeta {zeta} must lie in (0, 1)")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Config(format!("epsilon {epsilon} must lie in (0, 0.5)")));
    }
    if !(c > n as f64) {
        return Err(Error::Config(format!("exponent c = {c} must exceed N = {n}")));
    }
    Ok(())
}

/// `ln(1/ζ) / ε^{(c+1)N}` slots.
pub fn mixing_bound_cnum(epsilon: f64, c: f64, n: usize, zeta: f64) -> Result<f64> {
    check_bound_args(epsilon, c, n, zeta)?;
    Ok((1.0 / zeta).ln() / epsilon.powf((c + 1.0) * n as f64))
}

/// `⌈ln(1/ζ) / (K ε^{(c+1)NK})⌉ · K` slots.
pub fn mixing_bound_gnum(epsilon: f64, c: f64, n: usize, window: usize, zeta: f64) -> Result<f64> {
    check_bound_args(epsilon, c, n, zeta)?;
    if window == 0 {
        return Err(Error::Config("window K must be at least 1".into()));
    }
    let k = window as f64;
    Ok(((1.0 / zeta).ln() / (k * epsilon.powf((c + 1.0) * n as f64 * k))).ceil() * k)
}

/// Dispatches on the dynamics of `model`.
pub fn mixing_bound(model: &ChainModel, epsilon: f64, zeta: f64) -> Result<f64> {
    let (c, n) = (model.exponent_c(), model.num_nodes());
    match model.algorithm() {
        ChainAlgorithm::Cnum { .. } => mixing_bound_cnum(epsilon, c, n, zeta),
        ChainAlgorithm::Gnum { window } => mixing_bound_gnum(epsilon, c, n, *window, zeta),
    }
}

/// `d_V(π_t, π_ε)` maximized over point-mass starts, with the contraction
/// bound at each `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvCurve {
    pub epsilon: f64,
    pub distances: Vec<f64>,
    pub bound: Vec<f64>,
    /// Slots where the distance exceeded the bound.
    pub violations: Vec<usize>,
}

impl TvCurve {
    /// First `t` with distance at most `zeta`.
    pub fn first_below(&self, zeta: f64) -> Option<usize> {
        self.distances.iter().position(|&d| d <= zeta)
    }

    pub fn bound_first_below(&self, zeta: f64) -> Option<usize> {
        self.bound.iter().position(|&d| d <= zeta)
    }
}

/// Contraction bound at slot `t`: `(1 − ε^{(c+1)N})^t` for the frame-based
/// dynamics, and the `K`-step version `(1 − ε^{(c+1)NK})^{⌊t/K⌋}` for the
/// windowed dynamics.
pub fn tv_bound(model: &ChainModel, epsilon: f64, t: usize) -> f64 {
    let (c, n, k) = (model.exponent_c(), model.num_nodes() as f64, model.window());
    let per = epsilon.powf((c + 1.0) * n * k as f64);
    ((t / k) as f64 * (-per).ln_1p()).exp()
}

/// Evolves `π_0 Pᵗ` exactly for each start in `starts` (all states when
/// `None`) for `horizon` slots.
pub fn empirical_tv_curve(
    model: &ChainModel,
    stationary: &Stationary,
    starts: Option<&[usize]>,
    horizon: usize,
) -> Result<TvCurve> {
    let epsilon = stationary.epsilon;
    let n = model.num_states();
    if stationary.pi.len() != n {
        return Err(Error::InvalidInput("stationary distribution does not match the chain".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let starts = starts.unwrap_or(&all);
    if let Some(bad) = starts.iter().find(|&&x| x >= n) {
        return Err(Error::InvalidInput(format!("start state {bad} out of range")));
    }
    let rows = model.transition_rows(epsilon);
    let per_start: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&x0| {
            let mut pi = vec![0.0; n];
            pi[x0] = 1.0;
            let mut next = vec![0.0; n];
            let mut out = Vec::with_capacity(horizon + 1);
            out.push(tv_distance(&pi, &stationary.pi));
            for _ in 0..horizon {
                step(&rows, &pi, &mut next);
                std::mem::swap(&mut pi, &mut next);
                out.push(tv_distance(&pi, &stationary.pi));
            }
            out
        })
        .collect();
    let distances: Vec<f64> =
        (0..=horizon).map(|t| per_start.iter().map(|d| d[t]).fold(0.0, f64::max)).collect();
    let bound: Vec<f64> = (0..=horizon).map(|t| tv_bound(model, epsilon, t)).collect();
    let violations = (0..=horizon).filter(|&t| distances[t] > bound[t] + BOUND_SLACK).collect();
    Ok(TvCurve { epsilon, distances, bound, violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_examples() {
        let same = vec![vec![0.4, 0.6], vec![0.4, 0.6]];
        assert_eq!(ergodic_coefficient(&same).unwrap(), 0.0);
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(ergodic_coefficient(&id).unwrap(), 1.0);
        let p = vec![vec![0.5, 0.5], vec![0.3, 0.7]];
        assert!((ergodic_coefficient(&p).unwrap() - 0.2).abs() < 1e-15);
        assert!(ergodic_coefficient(&[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn bound_arithmetic() {
        let b = mixing_bound_cnum(0.1, 3.0, 2, 0.01).unwrap();
        assert!((b / (100f64.ln() * 1e8) - 1.0).abs() < 1e-9);
        let g = mixing_bound_gnum(0.1, 3.0, 2, 2, 0.01).unwrap();
        assert!((g / (100f64.ln() * 1e16) - 1.0).abs() < 1e-6);
        assert!(mixing_bound_cnum(0.1, 3.0, 2, 1.0 - 1e-12).unwrap() < 1e-3);
        assert!(mixing_bound_cnum(0.1, 2.0, 2, 0.01).is_err());
        assert!(mixing_bound_cnum(0.6, 3.0, 2, 0.01).is_err());
    }
}
