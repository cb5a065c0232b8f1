//! Closed-form stochastic potentials of the extreme satisfaction states.
//!
//! With window `K ≥ 2` the all-content state at a history reaches all of its
//! cyclic rotations at zero resistance, so the count of histories that each
//! cost `c` to leave is the number of rotation orbits. At `K = 1` the two
//! counts coincide.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ChainModel;

/// How histories are counted in the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryCount {
    /// `|A|^K`.
    Histories,
    /// Rotation orbits of length-`K` histories.
    RotationOrbits,
}

/// Lexicographically smallest rotation of `h`.
pub fn canonical_rotation(h: &[usize]) -> Vec<usize> {
    (0..h.len().max(1))
        .map(|s| h[s..].iter().chain(&h[..s]).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

/// Number of distinct rotation orbits among the model's histories.
pub fn rotation_orbit_count(model: &ChainModel) -> usize {
    let n = model.num_nodes();
    let distinct: HashSet<Vec<usize>> = (0..model.history_count())
        .map(|h| canonical_rotation(&model.state(h << n).history))
        .collect();
    distinct.len()
}

fn count(model: &ChainModel, mode: HistoryCount) -> f64 {
    match mode {
        HistoryCount::Histories => model.history_count() as f64,
        HistoryCount::RotationOrbits => rotation_orbit_count(model) as f64,
    }
}

/// `c (M − 1) + N − Σ_i U_i` for the all-content state at `history`, with `M`
/// the history count selected by `mode`.
pub fn content_potential(model: &ChainModel, history: usize, mode: HistoryCount) -> f64 {
    model.exponent_c() * (count(model, mode) - 1.0) + model.num_nodes() as f64 - model.history_score(history)
}

/// `c M` for any all-discontent state.
pub fn discontent_potential(model: &ChainModel, mode: HistoryCount) -> f64 {
    model.exponent_c() * count(model, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormCheck {
    pub mode: HistoryCount,
    pub content_max_error: f64,
    pub discontent_max_error: f64,
    /// `min γ(x) − c M` over mixed-satisfaction states; nonnegative when the
    /// lower bound holds.
    pub mixed_min_margin: f64,
    /// States without an in-tree, excluded from all three comparisons.
    pub unreachable: usize,
    pub passed: bool,
}

pub fn check_closed_forms(model: &ChainModel, potentials: &[Option<f64>], mode: HistoryCount, tol: f64) -> ClosedFormCheck {
    let n = model.num_nodes();
    let floor = discontent_potential(model, mode);
    let mut content_max_error: f64 = 0.0;
    let mut discontent_max_error: f64 = 0.0;
    let mut mixed_min_margin = f64::INFINITY;
    let mut unreachable = 0;
    for (x, g) in potentials.iter().enumerate() {
        let Some(g) = *g else {
            unreachable += 1;
            continue;
        };
        let s = model.state(x);
        if s.all_content() {
            content_max_error = content_max_error.max((g - content_potential(model, x >> n, mode)).abs());
        } else if s.all_discontent() {
            discontent_max_error = discontent_max_error.max((g - floor).abs());
        } else {
            mixed_min_margin = mixed_min_margin.min(g - floor);
        }
    }
    let passed = content_max_error <= tol && discontent_max_error <= tol && mixed_min_margin >= -tol;
    ClosedFormCheck { mode, content_max_error, discontent_max_error, mixed_min_margin, unreachable, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{stochastic_potentials, ChainAlgorithm, STATE_CAP};
    use crate::game::GameEnvironment;
    use crate::utility::UtilitySpec;

    #[test]
    fn rotations() {
        assert_eq!(canonical_rotation(&[2, 0, 1]), vec![0, 1, 2]);
        assert_eq!(canonical_rotation(&[1, 1]), vec![1, 1]);
    }

    #[test]
    fn orbit_counts_match_necklace_formula() {
        let env = GameEnvironment::two_node_example();
        let u = vec![UtilitySpec::log1p(), UtilitySpec::log1p()];
        // (1/K) Σ_{d | K} φ(d) 4^{K/d}: 4, 10, 24.
        for (k, expected) in [(1, 4), (2, 10), (3, 24)] {
            let m = ChainModel::new(&env, &u, ChainAlgorithm::Gnum { window: k }, None, STATE_CAP).unwrap();
            assert_eq!(rotation_orbit_count(&m), expected);
        }
    }

    #[test]
    fn two_node_window_one_matches_literal_forms() {
        let env = GameEnvironment::two_node_example();
        let u = vec![UtilitySpec::log1p(), UtilitySpec::log1p()];
        let m = ChainModel::new(&env, &u, ChainAlgorithm::Gnum { window: 1 }, None, STATE_CAP).unwrap();
        let g = stochastic_potentials(&m);
        let check = check_closed_forms(&m, &g, HistoryCount::Histories, 1e-9);
        assert!(check.passed, "{check:?}");
    }
}
