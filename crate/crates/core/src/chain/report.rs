//! One-call analysis of a small instance, serializable as JSON.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    empirical_tv_curve, mixing_bound, stable_states, stationary_distribution, stochastic_potentials, ChainAlgorithm,
    ChainModel, ChainState, TvCurve, STATE_CAP,
};
use crate::baselines::{max_weight_oracle, ENUMERATION_CAP};
use crate::error::Result;
use crate::game::GameEnvironment;
use crate::oracles::{brute_force_gnum_optimum, GnumOptimum, MULTISET_CAP};
use crate::utility::{Scale, UtilitySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    #[serde(flatten)]
    pub algorithm: ChainAlgorithm,
    #[serde(default)]
    pub exponent_c: Option<f64>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Slots of exact distribution evolution per TV curve; 0 disables curves.
    #[serde(default = "default_tv_horizon")]
    pub tv_horizon: usize,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.1, 0.01]
}

fn default_tv_horizon() -> usize {
    1000
}

fn default_zeta() -> f64 {
    0.1
}

fn default_state_cap() -> usize {
    STATE_CAP
}

impl AnalysisOptions {
    pub fn new(algorithm: ChainAlgorithm) -> Self {
        Self {
            algorithm,
            exponent_c: None,
            epsilons: default_epsilons(),
            tv_horizon: default_tv_horizon(),
            zeta: default_zeta(),
            state_cap: default_state_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub index: usize,
    #[serde(flatten)]
    pub state: ChainState,
    pub potential: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub epsilon: f64,
    pub pi: Vec<f64>,
    pub residual: f64,
    pub stable_mass: f64,
    pub min_recurrent_mass: f64,
    pub transient_states: usize,
    pub mixing_bound: Option<f64>,
    pub tv_curve: Option<TvCurve>,
    /// First slot where the exact TV distance is at most `zeta`.
    pub tv_first_below_zeta: Option<usize>,
}

/// Stable histories against the brute-force optimum, both as multisets of
/// profile indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub expected: Vec<Vec<usize>>,
    pub stable: Vec<Vec<usize>>,
    pub all_stable_content: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub options: AnalysisOptions,
    pub num_states: usize,
    pub num_edges: usize,
    pub exponent_c: f64,
    pub states: Vec<StateReport>,
    pub stable_states: Vec<usize>,
    pub min_potential: f64,
    pub oracle: Option<GnumOptimum>,
    pub certification: Certification,
    pub stationary: Vec<StationaryReport>,
}

fn multisets_of(model: &ChainModel, states: &[usize]) -> Vec<Vec<usize>> {
    let set: BTreeSet<Vec<usize>> = states
        .iter()
        .map(|&x| {
            let mut h = model.state(x).history;
            h.sort_unstable();
            h
        })
        .collect();
    set.into_iter().collect()
}

/// Maximizing multisets of the objective the chain's potentials rank:
/// normalized utilities for G-NUM, weighted payoff for C-NUM.
fn expected_multisets(env: &GameEnvironment, utilities: &[UtilitySpec], model: &ChainModel) -> Result<(Vec<Vec<usize>>, Option<GnumOptimum>)> {
    match model.algorithm() {
        ChainAlgorithm::Gnum { window } => {
            let opt = brute_force_gnum_optimum(env, utilities, *window, Scale::Normalized, MULTISET_CAP)?;
            Ok((opt.best.clone(), Some(opt)))
        }
        ChainAlgorithm::Cnum { lambda } => {
            let best = max_weight_oracle(env, lambda, ENUMERATION_CAP)?.value;
            let ties: Vec<Vec<usize>> = (0..model.num_profiles())
                .filter(|&a| {
                    let v: f64 = lambda.iter().enumerate().map(|(i, l)| l * model.payoff(a, i)).sum();
                    v >= best - 1e-12
                })
                .map(|a| vec![a])
                .collect();
            Ok((ties, None))
        }
    }
}

/// Compares the stable set with the brute-force optimum.
pub fn certify(
    env: &GameEnvironment,
    utilities: &[UtilitySpec],
    model: &ChainModel,
    stable: &[usize],
) -> Result<(Certification, Option<GnumOptimum>)> {
    let (expected, oracle) = expected_multisets(env, utilities, model)?;
    let stable_sets = multisets_of(model, stable);
    let all_stable_content = stable.iter().all(|&x| model.state(x).all_content());
    let certification = Certification {
        passed: all_stable_content && stable_sets == expected,
        expected,
        stable: stable_sets,
        all_stable_content,
    };
    Ok((certification, oracle))
}

pub fn analyze(env: &GameEnvironment, utilities: &[UtilitySpec], options: &AnalysisOptions) -> Result<AnalysisReport> {
    let model = ChainModel::new(env, utilities, options.algorithm.clone(), options.exponent_c, options.state_cap)?;
    let potentials = stochastic_potentials(&model);
    let stable = stable_states(&potentials);
    let min_potential = stable.first().and_then(|&x| potentials[x]).unwrap_or(f64::INFINITY);
    let (certification, oracle) = certify(env, utilities, &model, &stable)?;

    let mut stationary = Vec::with_capacity(options.epsilons.len());
    for &eps in &options.epsilons {
        let st = stationary_distribution(&model, eps)?;
        let tv_curve = if options.tv_horizon > 0 {
            Some(empirical_tv_curve(&model, &st, None, options.tv_horizon)?)
        } else {
            None
        };
        stationary.push(StationaryReport {
            epsilon: eps,
            residual: st.residual,
            stable_mass: st.mass(&stable),
            min_recurrent_mass: st.min_recurrent_mass(),
            transient_states: st.transient.len(),
            mixing_bound: mixing_bound(&model, eps, options.zeta).ok(),
            tv_first_below_zeta: tv_curve.as_ref().and_then(|c| c.first_below(options.zeta)),
            tv_curve,
            pi: st.pi,
        });
    }

    let states = (0..model.num_states())
        .map(|x| StateReport { index: x, state: model.state(x), potential: potentials[x] })
        .collect();
    Ok(AnalysisReport {
        options: options.clone(),
        num_states: model.num_states(),
        num_edges: model.num_edges(),
        exponent_c: model.exponent_c(),
        states,
        stable_states: stable,
        min_potential,
        oracle,
        certification,
        stationary,
    })
}

fn state_label(model: &ChainModel, x: usize) -> String {
    let s = model.state(x);
    let h: Vec<String> = s.history.iter().map(|a| a.to_string()).collect();
    let q: String = s.content.iter().map(|&b| if b { '1' } else { '0' }).collect();
    format!("{}|{}", h.join(","), q)
}

/// Graphviz export of the resistance graph; self-loops omitted.
pub fn resistance_dot(model: &ChainModel, potentials: Option<&[Option<f64>]>) -> String {
    let mut out = String::from("digraph resistance {\n");
    for x in 0..model.num_states() {
        let label = state_label(model, x);
        match potentials.and_then(|p| p[x]) {
            Some(g) => writeln!(out, "  s{x} [label=\"{label}\\nγ={g:.4}\"];").unwrap(),
            None => writeln!(out, "  s{x} [label=\"{label}\"];").unwrap(),
        }
    }
    for (x, y, r) in model.resistance_edges() {
        writeln!(out, "  s{x} -> s{y} [label=\"{r:.4}\"];").unwrap();
    }
    out.push_str("}\n");
    out
}
