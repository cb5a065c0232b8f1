//! Exact analysis of the Markov chain induced by the dynamics on small games.
//!
//! A state is a window of `K` joint profiles (oldest first) together with the
//! satisfaction bits of all nodes. State `(h, q)` has index
//! `(Σ_j h_j |A|^(K-1-j)) · 2^N + Σ_i q_i 2^i`. The frame-based dynamics use
//! `K = 1` with the weights held fixed.

pub mod arborescence;
pub mod closed_form;
pub mod diagnostics;
pub mod mixing;
pub mod report;
pub mod stationary;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameEnvironment;
use crate::numeric::{eps_pow, one_minus_eps_pow};
use crate::utility::UtilitySpec;

pub use arborescence::{exhaustive_min_in_tree, min_in_arborescence};
pub use closed_form::{check_closed_forms, ClosedFormCheck, HistoryCount};
pub use diagnostics::{dual_diagnostics, DualDiagnostics};
pub use mixing::{
    empirical_tv_curve, ergodic_coefficient, mixing_bound, mixing_bound_cnum, mixing_bound_gnum, TvCurve,
};
pub use report::{analyze, AnalysisOptions, AnalysisReport};
pub use stationary::{gth_stationary, power_iteration, stationary_distribution, Stationary, StationaryMethod};

/// Default limit on `|Ω|`.
pub const STATE_CAP: usize = 20_000;

/// Which dynamics induce the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum ChainAlgorithm {
    Gnum { window: usize },
    /// Fixed weights; `λ_max` comes from the utilities.
    Cnum { lambda: Vec<f64> },
}

/// Decoded state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainState {
    /// Profile indices, oldest first.
    pub history: Vec<usize>,
    pub content: Vec<bool>,
}

impl ChainState {
    pub fn all_content(&self) -> bool {
        self.content.iter().all(|&q| q)
    }

    pub fn all_discontent(&self) -> bool {
        self.content.iter().all(|&q| !q)
    }
}

/// One leading-order term `coefficient · ε^exponent · Π_k (1 − ε^{γ_k})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTerm {
    pub coefficient: f64,
    pub exponent: f64,
    /// Exponents `γ_k > 0` of the `1 − ε^γ` factors; they tend to 1 as ε → 0.
    pub one_minus: Vec<f64>,
}

impl TransitionTerm {
    pub fn probability(&self, epsilon: f64) -> f64 {
        let ln = epsilon.ln();
        self.one_minus
            .iter()
            .fold(self.coefficient * eps_pow(ln, self.exponent), |p, &g| p * one_minus_eps_pow(ln, g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub target: usize,
    pub term: TransitionTerm,
}

/// The enumerated chain with its exact transition terms.
#[derive(Debug, Clone)]
pub struct ChainModel {
    algorithm: ChainAlgorithm,
    num_nodes: usize,
    sizes: Vec<usize>,
    num_profiles: usize,
    window: usize,
    num_histories: usize,
    c: f64,
    /// Dense payoff table, profile-major.
    payoff: Vec<f64>,
    /// Satisfaction exponent `γ_i` indexed by `(history', node)`.
    sat_exponent: Vec<f64>,
    edges: Vec<Vec<Edge>>,
}

impl ChainModel {
    /// Enumerates the chain. `c` defaults to `N + 1`.
    pub fn new(
        env: &GameEnvironment,
        utilities: &[UtilitySpec],
        algorithm: ChainAlgorithm,
        c: Option<f64>,
        cap: usize,
    ) -> Result<Self> {
        let n = env.num_nodes();
        if utilities.len() != n {
            return Err(Error::InvalidInput(format!("{} utilities for {n} nodes", utilities.len())));
        }
        let c = c.unwrap_or(n as f64 + 1.0);
        if !(c.is_finite() && c > n as f64) {
            return Err(Error::Config(format!("exponent c = {c} must exceed N = {n}")));
        }
        if let Some(i) = env.space().sizes().iter().position(|&s| s < 2) {
            return Err(Error::Config(format!("node {i} has a single action")));
        }
        let window = match &algorithm {
            ChainAlgorithm::Gnum { window } if *window == 0 => {
                return Err(Error::Config("window K must be at least 1".into()))
            }
            ChainAlgorithm::Gnum { window } => *window,
            ChainAlgorithm::Cnum { .. } => 1,
        };
        let num_profiles = env.num_profiles();
        let states = (num_profiles as u128)
            .checked_pow(window as u32)
            .and_then(|h| h.checked_mul(1u128 << n.min(127)))
            .unwrap_or(u128::MAX);
        if states > cap as u128 {
            return Err(Error::SizeCap { what: "chain states", size: states, cap: cap as u128 });
        }
        let num_histories = num_profiles.pow(window as u32);
        let payoff = env.dense_table(cap)?;

        let mut sat_exponent = vec![0.0; num_histories * n];
        match &algorithm {
            ChainAlgorithm::Gnum { .. } => {
                let mut hist = vec![0usize; window];
                for h in 0..num_histories {
                    decode_history(h, num_profiles, &mut hist);
                    for i in 0..n {
                        let sum: f64 = hist.iter().map(|&a| payoff[a * n + i]).sum();
                        let mean = sum / window as f64;
                        sat_exponent[h * n + i] = 1.0 - utilities[i].normalized_unchecked(mean.clamp(0.0, 1.0));
                    }
                }
            }
            ChainAlgorithm::Cnum { lambda } => {
                if lambda.len() != n {
                    return Err(Error::InvalidInput(format!("{} weights for {n} nodes", lambda.len())));
                }
                let lambda_max = crate::cnum::lambda_max(utilities);
                if let Some(bad) = lambda.iter().find(|&&l| !(0.0..=lambda_max).contains(&l)) {
                    return Err(Error::Config(format!("weight {bad} outside [0, {lambda_max}]")));
                }
                for a in 0..num_profiles {
                    for i in 0..n {
                        sat_exponent[a * n + i] = (1.0 - lambda[i] * payoff[a * n + i] / lambda_max).clamp(0.0, 1.0);
                    }
                }
            }
        }

        let mut model = Self {
            algorithm,
            num_nodes: n,
            sizes: env.space().sizes().to_vec(),
            num_profiles,
            window,
            num_histories,
            c,
            payoff,
            sat_exponent,
            edges: Vec::new(),
        };
        let num_states = model.num_states();
        model.edges = (0..num_states).into_par_iter().map(|x| model.outgoing(x)).collect();
        Ok(model)
    }

    pub fn algorithm(&self) -> &ChainAlgorithm {
        &self.algorithm
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_profiles(&self) -> usize {
        self.num_profiles
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn num_histories(&self) -> usize {
        self.num_histories
    }

    pub fn exponent_c(&self) -> f64 {
        self.c
    }

    pub fn num_states(&self) -> usize {
        self.num_histories << self.num_nodes
    }

    pub fn edges(&self, x: usize) -> &[Edge] {
        &self.edges[x]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn payoff(&self, profile: usize, node: usize) -> f64 {
        self.payoff[profile * self.num_nodes + node]
    }

    pub fn state_index(&self, history: &[usize], content: &[bool]) -> Result<usize> {
        if history.len() != self.window || content.len() != self.num_nodes {
            return Err(Error::InvalidInput("state has the wrong shape".into()));
        }
        let mut h = 0usize;
        for &a in history {
            if a >= self.num_profiles {
                return Err(Error::InvalidInput(format!("profile index {a} out of range")));
            }
            h = h * self.num_profiles + a;
        }
        let q = content.iter().enumerate().fold(0usize, |m, (i, &b)| m | ((b as usize) << i));
        Ok((h << self.num_nodes) | q)
    }

    pub fn state(&self, x: usize) -> ChainState {
        let mut history = vec![0; self.window];
        decode_history(x >> self.num_nodes, self.num_profiles, &mut history);
        let content = (0..self.num_nodes).map(|i| x >> i & 1 == 1).collect();
        ChainState { history, content }
    }

    /// Complete list of states in index order.
    pub fn enumerate(&self) -> Vec<ChainState> {
        (0..self.num_states()).map(|x| self.state(x)).collect()
    }

    /// All terms of the transition `x → y` (at most one: the joint action
    /// and the satisfaction bits are read off `y`).
    pub fn transition_terms(&self, x: usize, y: usize) -> Vec<TransitionTerm> {
        self.edges[x].iter().filter(|e| e.target == y).map(|e| e.term.clone()).collect()
    }

    /// Leading exponent of `x → y`, or `None` when the transition is
    /// impossible.
    pub fn resistance(&self, x: usize, y: usize) -> Option<f64> {
        self.transition_terms(x, y).iter().map(|t| t.exponent).reduce(f64::min)
    }

    /// Sparse rows of `P_ε`.
    pub fn transition_rows(&self, epsilon: f64) -> Vec<Vec<(usize, f64)>> {
        self.edges
            .par_iter()
            .map(|row| row.iter().map(|e| (e.target, e.term.probability(epsilon))).collect())
            .collect()
    }

    pub fn dense_matrix(&self, epsilon: f64) -> Vec<Vec<f64>> {
        let n = self.num_states();
        self.transition_rows(epsilon)
            .into_iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for (y, p) in row {
                    dense[y] += p;
                }
                dense
            })
            .collect()
    }

    /// Resistance edges, self-loops dropped.
    pub fn resistance_edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (x, row) in self.edges.iter().enumerate() {
            for e in row {
                if e.target != x {
                    out.push((x, e.target, e.term.exponent));
                }
            }
        }
        out
    }

    /// `|A|^K` for content-state closed forms.
    pub fn history_count(&self) -> usize {
        self.num_histories
    }

    /// Σ_i normalized U_i of the mean payoff over a history, recovered from
    /// the stored exponents (G-NUM) or Σ λ_i r_i / λ_max (C-NUM).
    pub fn history_score(&self, history: usize) -> f64 {
        (0..self.num_nodes).map(|i| 1.0 - self.sat_exponent[history * self.num_nodes + i]).sum()
    }

    fn outgoing(&self, x: usize) -> Vec<Edge> {
        let n = self.num_nodes;
        let p = self.num_profiles;
        let hist = x >> n;
        let q = x & ((1 << n) - 1);
        let oldest = hist / (self.num_histories / p);
        let oldest_profile = self.profile_of(oldest);
        let shifted = (hist * p) % self.num_histories;

        let mut out = Vec::with_capacity(p << n);
        let mut profile = vec![0usize; n];
        for a in 0..p {
            self.decode_profile(a, &mut profile);
            let next_hist = shifted + a;
            // Action factors.
            let mut coefficient = 1.0;
            let mut exponent = 0.0;
            let mut one_minus = Vec::with_capacity(2 * n);
            for i in 0..n {
                let content = q >> i & 1 == 1;
                if content {
                    if profile[i] == oldest_profile[i] {
                        one_minus.push(self.c);
                    } else {
                        coefficient /= (self.sizes[i] - 1) as f64;
                        exponent += self.c;
                    }
                } else {
                    coefficient /= self.sizes[i] as f64;
                }
            }
            // Satisfaction outcomes: each node is either forced content or
            // branches on ε^γ.
            let mut forced = 0usize;
            for i in 0..n {
                let content = q >> i & 1 == 1;
                if content && profile[i] == oldest_profile[i] && self.payoff(a, i) == self.payoff(oldest, i) {
                    forced |= 1 << i;
                }
            }
            'outcomes: for q_next in 0..(1usize << n) {
                if q_next & forced != forced {
                    continue;
                }
                let mut term = TransitionTerm { coefficient, exponent, one_minus: one_minus.clone() };
                for i in 0..n {
                    if forced >> i & 1 == 1 {
                        continue;
                    }
                    let gamma = self.sat_exponent[next_hist * n + i];
                    if q_next >> i & 1 == 1 {
                        term.exponent += gamma;
                    } else if gamma > 0.0 {
                        term.one_minus.push(gamma);
                    } else {
                        continue 'outcomes;
                    }
                }
                out.push(Edge { target: (next_hist << n) | q_next, term });
            }
        }
        out
    }

    fn profile_of(&self, a: usize) -> Vec<usize> {
        let mut p = vec![0; self.num_nodes];
        self.decode_profile(a, &mut p);
        p
    }

    fn decode_profile(&self, mut a: usize, out: &mut [usize]) {
        for i in (0..self.num_nodes).rev() {
            out[i] = a % self.sizes[i];
            a /= self.sizes[i];
        }
    }
}

fn decode_history(mut h: usize, num_profiles: usize, out: &mut [usize]) {
    for j in (0..out.len()).rev() {
        out[j] = h % num_profiles;
        h /= num_profiles;
    }
}

/// All states of the chain.
pub fn enumerate_chain(model: &ChainModel) -> Vec<ChainState> {
    model.enumerate()
}

/// Stochastic potential of every state: the weight of a minimum in-tree
/// rooted there, `None` when no in-tree exists (the state is unreachable).
/// Roots are solved in parallel.
pub fn stochastic_potentials(model: &ChainModel) -> Vec<Option<f64>> {
    let n = model.num_states();
    let edges = model.resistance_edges();
    (0..n).into_par_iter().map(|root| min_in_arborescence(n, &edges, root)).collect()
}

/// `γ(x)` for a single state.
pub fn stochastic_potential(model: &ChainModel, x: usize) -> Result<f64> {
    min_in_arborescence(model.num_states(), &model.resistance_edges(), x)
        .ok_or_else(|| Error::Analysis(format!("state {x} is unreachable: no in-tree rooted there")))
}

/// Tolerance for potential ties.
pub const POTENTIAL_TIE_TOL: f64 = 1e-9;

/// States of minimum stochastic potential.
pub fn stable_states(potentials: &[Option<f64>]) -> Vec<usize> {
    let best = potentials.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    potentials
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_some_and(|g| g <= best + POTENTIAL_TIE_TOL))
        .map(|(x, _)| x)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(k: usize) -> ChainModel {
        let env = GameEnvironment::two_node_example();
        ChainModel::new(&env, &[UtilitySpec::log1p(), UtilitySpec::log1p()], ChainAlgorithm::Gnum { window: k }, None, STATE_CAP)
            .unwrap()
    }

    #[test]
    fn state_counts() {
        assert_eq!(two_node(1).num_states(), 16);
        assert_eq!(two_node(2).num_states(), 64);
        let env = GameEnvironment::constant(vec![2, 2, 2], 0.3).unwrap();
        let m = ChainModel::new(&env, &vec![UtilitySpec::affine(); 3], ChainAlgorithm::Gnum { window: 1 }, None, STATE_CAP)
            .unwrap();
        assert_eq!(m.num_states(), 64);
        let states = m.enumerate();
        let unique: std::collections::HashSet<_> = states.iter().cloned().collect();
        assert_eq!(unique.len(), 64);
    }

    #[test]
    fn cap_is_enforced() {
        let env = GameEnvironment::two_node_example();
        let err = ChainModel::new(&env, &[UtilitySpec::log1p(), UtilitySpec::log1p()], ChainAlgorithm::Gnum { window: 2 }, None, 63);
        assert!(matches!(err, Err(Error::SizeCap { .. })));
    }

    #[test]
    fn index_round_trip() {
        let m = two_node(2);
        for x in 0..m.num_states() {
            let s = m.state(x);
            assert_eq!(m.state_index(&s.history, &s.content).unwrap(), x);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        for k in [1, 2] {
            let m = two_node(k);
            for eps in [0.2, 0.01, 1e-4] {
                for row in m.transition_rows(eps) {
                    let s: f64 = row.iter().map(|(_, p)| p).sum();
                    assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
                }
            }
        }
    }

    #[test]
    fn content_self_loop_has_zero_resistance() {
        let m = two_node(1);
        let x = m.state_index(&[3], &[true, true]).unwrap();
        assert_eq!(m.resistance(x, x), Some(0.0));
    }
}
