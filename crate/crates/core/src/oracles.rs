//! Ground-truth optima on small games.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{max_weight_oracle, ENUMERATION_CAP};
use crate::cnum::flow_control_solve;
use crate::error::{Error, Result};
use crate::game::GameEnvironment;
use crate::utility::{Scale, UtilitySpec};

/// Default multiset enumeration limit.
pub const MULTISET_CAP: u128 = 2_000_000;
/// Values within this distance of the best are reported as ties.
pub const TIE_TOL: f64 = 1e-12;

/// Best `K`-multisets of joint profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnumOptimum {
    pub window: usize,
    pub scale: Scale,
    /// Each maximizer as a nondecreasing list of profile indices.
    pub best: Vec<Vec<usize>>,
    /// Mean payoff under the first maximizer.
    pub rates: Vec<f64>,
    pub value: f64,
    pub examined: u128,
}

/// `C(n + k − 1, k)`, saturating.
pub fn multiset_count(n: usize, k: usize) -> u128 {
    let mut c: u128 = 1;
    for j in 0..k as u128 {
        c = match c.checked_mul(n as u128 + j) {
            Some(v) => v / (j + 1),
            None => return u128::MAX,
        };
    }
    c
}

fn check_utilities(env: &GameEnvironment, utilities: &[UtilitySpec]) -> Result<()> {
    if utilities.len() != env.num_nodes() {
        return Err(Error::InvalidInput(format!("{} utilities for {} nodes", utilities.len(), env.num_nodes())));
    }
    for u in utilities {
        u.validate()?;
    }
    Ok(())
}

fn objective(rates: &[f64], utilities: &[UtilitySpec], scale: Scale) -> f64 {
    rates
        .iter()
        .zip(utilities)
        .map(|(&r, u)| u.value(r.clamp(0.0, 1.0), scale).expect("clamped into [0, 1]"))
        .sum()
}

/// Maximizes `Σ_i U_i(r̄_i)` over all multisets of `window` joint profiles,
/// where `r̄` is the mean payoff over the multiset.
pub fn brute_force_gnum_optimum(
    env: &GameEnvironment,
    utilities: &[UtilitySpec],
    window: usize,
    scale: Scale,
    cap: u128,
) -> Result<GnumOptimum> {
    check_utilities(env, utilities)?;
    if window == 0 {
        return Err(Error::Config("window K must be at least 1".into()));
    }
    let p = env.num_profiles();
    let count = multiset_count(p, window);
    if count > cap {
        return Err(Error::SizeCap { what: "profile multisets", size: count, cap });
    }
    let n = env.num_nodes();
    let table = env.dense_table(ENUMERATION_CAP.max(p))?;

    // Split on the first element; each worker walks nondecreasing tails.
    let partial: Vec<(f64, Vec<Vec<usize>>)> = (0..p)
        .into_par_iter()
        .map(|first| {
            let mut best = f64::NEG_INFINITY;
            let mut ties: Vec<Vec<usize>> = Vec::new();
            let mut seq = vec![first; window];
            let mut sums = vec![0.0; n];
            let mut rates = vec![0.0; n];
            loop {
                sums.iter_mut().for_each(|s| *s = 0.0);
                for &a in &seq {
                    for i in 0..n {
                        sums[i] += table[a * n + i];
                    }
                }
                for i in 0..n {
                    rates[i] = sums[i] / window as f64;
                }
                let v = objective(&rates, utilities, scale);
                if v > best + TIE_TOL {
                    best = v;
                    ties.clear();
                    ties.push(seq.clone());
                } else if v >= best - TIE_TOL {
                    best = best.max(v);
                    ties.push(seq.clone());
                }
                // Next nondecreasing sequence with seq[0] fixed.
                let Some(j) = (1..window).rev().find(|&j| seq[j] + 1 < p) else { break };
                let next = seq[j] + 1;
                seq[j..].iter_mut().for_each(|a| *a = next);
            }
            (best, ties)
        })
        .collect();

    let value = partial.iter().map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<Vec<usize>> = partial
        .into_iter()
        .filter(|(v, _)| *v >= value - TIE_TOL)
        .flat_map(|(_, t)| t)
        .collect();
    let mut rates = vec![0.0; n];
    for &a in &best[0] {
        for i in 0..n {
            rates[i] += table[a * n + i] / window as f64;
        }
    }
    let value = objective(&rates, utilities, scale);
    Ok(GnumOptimum { window, scale, best, rates, value, examined: count })
}

/// Solution of the relaxed problem over all occupation measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcaveOptimum {
    pub scale: Scale,
    /// Dense occupation measure over profile indices.
    pub measure: Vec<f64>,
    pub rates: Vec<f64>,
    pub value: f64,
    /// Final Frank–Wolfe duality gap.
    pub gap: f64,
    pub iterations: usize,
}

pub const CONCAVE_TOL: f64 = 1e-8;
pub const CONCAVE_MAX_ITERS: usize = 200_000;

/// Away-step conditional gradient over the profile simplex. The forward
/// vertex comes from the max-weight oracle with weights `∇U(r̄)`.
pub fn concave_optimum(
    env: &GameEnvironment,
    utilities: &[UtilitySpec],
    scale: Scale,
    tol: f64,
    max_iters: usize,
) -> Result<ConcaveOptimum> {
    check_utilities(env, utilities)?;
    if let Some(u) = utilities.iter().find(|u| !u.is_concave()) {
        return Err(Error::UnsupportedUtility(format!("{:?} is not concave", u.kind)));
    }
    let n = env.num_nodes();
    let p = env.num_profiles();
    let table = env.dense_table(ENUMERATION_CAP)?;
    let payoff = |a: usize| &table[a * n..(a + 1) * n];
    let grad = |r: &[f64]| -> Vec<f64> {
        r.iter()
            .zip(utilities)
            .map(|(&x, u)| u.derivative(x.clamp(0.0, 1.0), scale).expect("clamped into [0, 1]"))
            .collect()
    };
    let score = |w: &[f64], a: usize| -> f64 { w.iter().zip(payoff(a)).map(|(w, r)| w * r).sum() };

    let start = max_weight_oracle(env, &vec![1.0; n], ENUMERATION_CAP)?.index;
    let mut measure = vec![0.0; p];
    measure[start] = 1.0;
    let mut active = vec![start];
    let mut rates = payoff(start).to_vec();
    let mut gap = f64::INFINITY;

    for iteration in 0..max_iters {
        let w = grad(&rates);
        let here: f64 = w.iter().zip(&rates).map(|(w, r)| w * r).sum();
        let forward = max_weight_oracle(env, &w, ENUMERATION_CAP)?;
        gap = forward.value - here;
        if gap < tol {
            let value = objective(&rates, utilities, scale);
            return Ok(ConcaveOptimum { scale, measure, rates, value, gap, iterations: iteration });
        }
        let away = *active
            .iter()
            .min_by(|&&a, &&b| score(&w, a).total_cmp(&score(&w, b)))
            .expect("active set is nonempty");
        let away_gap = here - score(&w, away);

        let (dir, max_step, toward, from) = if gap >= away_gap || measure[away] >= 1.0 {
            let d: Vec<f64> = payoff(forward.index).iter().zip(&rates).map(|(v, r)| v - r).collect();
            (d, 1.0, Some(forward.index), None)
        } else {
            let pa = measure[away];
            let d: Vec<f64> = rates.iter().zip(payoff(away)).map(|(r, v)| r - v).collect();
            (d, pa / (1.0 - pa), None, Some(away))
        };
        let step = line_search(&rates, &dir, max_step, utilities, scale);
        if step <= 0.0 {
            // Numerically flat direction; the gap cannot shrink further.
            log::warn!("conditional gradient stalled with gap {gap:e}");
            return Err(Error::NoConvergence { what: "conditional gradient", iterations: iteration });
        }
        for (r, d) in rates.iter_mut().zip(&dir) {
            *r += step * d;
        }
        match (toward, from) {
            (Some(v), _) => {
                measure.iter_mut().for_each(|m| *m *= 1.0 - step);
                measure[v] += step;
            }
            (_, Some(v)) => {
                measure.iter_mut().for_each(|m| *m *= 1.0 + step);
                measure[v] -= step;
                if step >= max_step * (1.0 - 1e-15) {
                    measure[v] = 0.0;
                }
            }
            _ => unreachable!(),
        }
        active.retain(|&a| measure[a] > 0.0);
        if let Some(v) = toward {
            if !active.contains(&v) {
                active.push(v);
            }
        }
        // Keep r̄ consistent with the measure.
        if iteration % 64 == 63 {
            rates = (0..n).map(|i| active.iter().map(|&a| measure[a] * payoff(a)[i]).sum()).collect();
        }
    }
    log::warn!("conditional gradient stopped with gap {gap:e}");
    Err(Error::NoConvergence { what: "conditional gradient", iterations: max_iters })
}

/// Exact maximization of the concave `φ(t) = Σ U_i(r_i + t d_i)` over
/// `[0, t_max]` by bisection on `φ'`.
fn line_search(rates: &[f64], dir: &[f64], t_max: f64, utilities: &[UtilitySpec], scale: Scale) -> f64 {
    let slope = |t: f64| -> f64 {
        rates
            .iter()
            .zip(dir)
            .zip(utilities)
            .map(|((&r, &d), u)| d * u.derivative((r + t * d).clamp(0.0, 1.0), scale).expect("clamped"))
            .sum()
    };
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    if slope(t_max) >= 0.0 {
        return t_max;
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `d(λ) = Σ_i [U_i(α_i) − λ_i α_i] + max_a Σ_i λ_i f_i(a)` on the natural
/// scale, with `α_i` the flow-control response.
pub fn dual_value(env: &GameEnvironment, utilities: &[UtilitySpec], lambda: &[f64]) -> Result<f64> {
    check_utilities(env, utilities)?;
    let mw = max_weight_oracle(env, lambda, ENUMERATION_CAP)?;
    let mut total = mw.value;
    for (u, &l) in utilities.iter().zip(lambda) {
        let alpha = flow_control_solve(u, l)?;
        total += u.natural(alpha)? - l * alpha;
    }
    Ok(total)
}
