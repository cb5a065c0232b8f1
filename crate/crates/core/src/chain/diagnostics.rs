//! Dual quantities evaluated under an exact stationary distribution.

use serde::{Deserialize, Serialize};

use super::{ChainModel, Stationary};
use crate::baselines::{max_weight_oracle, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::game::GameEnvironment;
use crate::oracles::dual_value;
use crate::utility::UtilitySpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualDiagnostics {
    pub dual_value: f64,
    /// `max_a Σ λ_i f_i(a) − E_π[Σ λ_i f_i(a)]`.
    pub delta: f64,
    /// Stationary expected service `s_i(λ)`.
    pub expected_service: Vec<f64>,
    /// `Σ λ_i (s_i(λ) − s_i(l))` when a frame service is supplied.
    pub frame_error: Option<f64>,
}

/// Marginal of the current joint profile under `π`.
pub fn profile_marginal(model: &ChainModel, stationary: &Stationary) -> Vec<f64> {
    let p = model.num_profiles();
    let mut out = vec![0.0; p];
    for (x, &m) in stationary.pi.iter().enumerate() {
        out[(x >> model.num_nodes()) % p] += m;
    }
    out
}

pub fn dual_diagnostics(
    env: &GameEnvironment,
    utilities: &[UtilitySpec],
    model: &ChainModel,
    lambda: &[f64],
    stationary: &Stationary,
    frame_service: Option<&[f64]>,
) -> Result<DualDiagnostics> {
    let n = env.num_nodes();
    if model.num_profiles() != env.num_profiles() || model.num_nodes() != n {
        return Err(Error::InvalidInput("chain does not match the environment".into()));
    }
    if frame_service.is_some_and(|s| s.len() != n) {
        return Err(Error::InvalidInput("frame service has the wrong length".into()));
    }
    let marginal = profile_marginal(model, stationary);
    let mut expected_service = vec![0.0; n];
    for (a, &m) in marginal.iter().enumerate() {
        for (i, s) in expected_service.iter_mut().enumerate() {
            *s += m * model.payoff(a, i);
        }
    }
    let achieved: f64 = lambda.iter().zip(&expected_service).map(|(l, s)| l * s).sum();
    let best = max_weight_oracle(env, lambda, ENUMERATION_CAP)?.value;
    let delta = (best - achieved).max(0.0);
    let frame_error = frame_service
        .map(|s| lambda.iter().zip(&expected_service).zip(s).map(|((l, e), f)| l * (e - f)).sum());
    Ok(DualDiagnostics { dual_value: dual_value(env, utilities, lambda)?, delta, expected_service, frame_error })
}
