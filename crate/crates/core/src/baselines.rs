//! Centralized reference algorithms: the exact dual subgradient method with a
//! max-weight oracle, and a log-linear (Glauber) sampler.
//!
//! The log-linear sampler is illustrative only. It reads other nodes' actions
//! and the full payoff function, which the uncoupled dynamics never do, and it
//! is not a reproduction of any particular CSMA algorithm.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnum::{flow_control_solve, lambda_update, FrameAccumulator, InitialWeights, StepSchedule};
use crate::error::{Error, Result};
use crate::game::GameEnvironment;
use crate::gnum::COUNTER_CAP;
use crate::numeric::{central_stream, CompensatedSum};
use crate::trace::{Algorithm, RunTrace, SlotRecord, SlotStats, TraceMeta};
use crate::utility::UtilitySpec;

/// Default limit on exhaustive profile enumeration.
pub const ENUMERATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxWeight {
    pub index: usize,
    pub profile: Vec<usize>,
    pub value: f64,
}

/// `argmax_a Σ_i λ_i f_i(a)`; ties go to the smallest profile index, which is
/// the lexicographically smallest profile.
pub fn max_weight_oracle(env: &GameEnvironment, lambda: &[f64], cap: usize) -> Result<MaxWeight> {
    let n = env.num_nodes();
    if lambda.len() != n {
        return Err(Error::InvalidInput(format!("{} weights for {n} nodes", lambda.len())));
    }
    if let Some(bad) = lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidInput(format!("weight {bad} must be finite and nonnegative")));
    }
    let size = env.num_profiles();
    if size > cap {
        return Err(Error::SizeCap { what: "profiles", size: size as u128, cap: cap as u128 });
    }
    let mut payoff = vec![0.0; n];
    let mut best: Option<(usize, f64)> = None;
    for (idx, profile) in env.space().profiles().enumerate() {
        env.payoffs_into(idx, &profile, &mut payoff)?;
        let value: f64 = lambda.iter().zip(&payoff).map(|(l, r)| l * r).sum();
        if best.is_none_or(|(_, v)| value > v) {
            best = Some((idx, value));
        }
    }
    let (index, value) = best.expect("action space is nonempty");
    Ok(MaxWeight { index, profile: env.space().profile_of(index)?, value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactGradientConfig {
    pub num_frames: usize,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default)]
    pub lambda0: InitialWeights,
}

impl ExactGradientConfig {
    pub fn new(num_frames: usize, schedule: StepSchedule) -> Self {
        Self { num_frames, schedule, lambda0: InitialWeights::default() }
    }
}

/// Dual subgradient iterations with exact service `s(l) = f(a*(λ(l)))`.
pub fn exact_gradient_run(
    env: &GameEnvironment,
    utilities: &[UtilitySpec],
    cfg: &ExactGradientConfig,
) -> Result<RunTrace> {
    let started = Instant::now();
    let n = env.num_nodes();
    if utilities.len() != n {
        return Err(Error::InvalidInput(format!("{} utilities for {n} nodes", utilities.len())));
    }
    cfg.schedule.validate(true)?;
    let mut lambda = cfg.lambda0.resolve(n)?;
    if let Some(bad) = lambda.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::Config(format!("initial weight {bad} must be nonnegative")));
    }
    let lambda_max = crate::cnum::lambda_max(utilities);
    let mut acc = FrameAccumulator::new(n, &lambda);
    let mut frames = Vec::with_capacity(cfg.num_frames);
    for l in 1..=cfg.num_frames {
        let best = max_weight_oracle(env, &lambda, ENUMERATION_CAP)?;
        let service = env.payoffs_at(best.index)?;
        let target = utilities
            .iter()
            .zip(&lambda)
            .map(|(u, &lam)| flow_control_solve(u, lam))
            .collect::<Result<Vec<_>>>()?;
        let step = cfg.schedule.step(l);
        let next: Vec<f64> = (0..n).map(|i| lambda_update(lambda[i], step, target[i], service[i])).collect();
        let weighted_service = lambda.iter().zip(&service).map(|(l, s)| l * s).sum::<f64>();
        frames.push(acc.push(l, step, &lambda, &next, service, target, 1.0, Some(best.value - weighted_service), utilities));
        lambda = next;
    }
    let stats = acc.finish(cfg.num_frames, lambda, lambda_max, utilities);
    let mut meta = TraceMeta::new(
        Algorithm::ExactGradient,
        0,
        n,
        serde_json::to_value(cfg).expect("config serializes"),
    );
    meta.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(RunTrace { meta, slots: Vec::new(), frames, slot_stats: None, frame_stats: Some(stats) })
}

/// How the log-linear sampler chooses its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LogLinearMode {
    /// Constant weights for `horizon` slots.
    Fixed { lambda: Vec<f64>, horizon: u64 },
    /// Frame-based weight updates using the sampled frame service.
    Adaptive {
        frame_len: u64,
        num_frames: usize,
        #[serde(default)]
        schedule: StepSchedule,
        #[serde(default)]
        lambda0: InitialWeights,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLinearConfig {
    /// Inverse temperature `β`.
    pub beta: f64,
    #[serde(flatten)]
    pub mode: LogLinearMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_stride: u64,
}

struct Sampler<'a> {
    env: &'a GameEnvironment,
    beta: f64,
    profile: Vec<usize>,
    payoff: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(env: &'a GameEnvironment, beta: f64) -> Self {
        let n = env.num_nodes();
        let max_actions = env.space().sizes().iter().copied().max().unwrap_or(1);
        Self { env, beta, profile: vec![0; n], payoff: vec![0.0; n], weights: vec![0.0; max_actions] }
    }

    /// One single-site update; returns the new profile index.
    fn step<R: Rng>(&mut self, lambda: &[f64], rng: &mut R) -> Result<usize> {
        let n = self.profile.len();
        let space = self.env.space();
        let i = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
        let m = space.size_of(i);
        let mut peak = f64::NEG_INFINITY;
        for a in 0..m {
            self.profile[i] = a;
            let idx = space.index_unchecked(&self.profile);
            self.env.payoffs_into(idx, &self.profile, &mut self.payoff)?;
            let weighted: f64 = lambda.iter().zip(&self.payoff).map(|(l, r)| l * r).sum();
            self.weights[a] = self.beta * weighted;
            peak = peak.max(self.weights[a]);
        }
        let mut total = 0.0;
        for w in &mut self.weights[..m] {
            *w = (*w - peak).exp();
            total += *w;
        }
        let mut u = rng.random::<f64>() * total;
        let mut choice = m - 1;
        for (a, &w) in self.weights[..m].iter().enumerate() {
            if u < w {
                choice = a;
                break;
            }
            u -= w;
        }
        self.profile[i] = choice;
        let idx = space.index_unchecked(&self.profile);
        self.env.payoffs_into(idx, &self.profile, &mut self.payoff)?;
        Ok(idx)
    }
}

/// Centralized single-site log-linear dynamics on the weighted sum
/// `Σ_j λ_j f_j(a)`: a uniformly chosen node resamples its action with
/// probability proportional to `exp(β Σ_j λ_j f_j)`. The stationary law is
/// `π(a) ∝ exp(β Σ_j λ_j f_j(a))`. Starts from the all-first profile.
pub fn loglinear_baseline_run(
    env: &GameEnvironment,
    utilities: &[UtilitySpec],
    cfg: &LogLinearConfig,
) -> Result<RunTrace> {
    let started = Instant::now();
    let n = env.num_nodes();
    if utilities.len() != n {
        return Err(Error::InvalidInput(format!("{} utilities for {n} nodes", utilities.len())));
    }
    if !(cfg.beta > 0.0 && cfg.beta.is_finite()) {
        return Err(Error::Config(format!("temperature parameter beta = {} must be positive", cfg.beta)));
    }
    let mut rng = central_stream(cfg.seed);
    let mut sampler = Sampler::new(env, cfg.beta);
    let num_profiles = env.num_profiles();
    let mut totals = vec![CompensatedSum::default(); n];
    let mut slots = Vec::new();
    let meta_config = serde_json::to_value(cfg).expect("config serializes");

    let trace = match &cfg.mode {
        LogLinearMode::Fixed { lambda, horizon } => {
            if lambda.len() != n || lambda.iter().any(|l| !(*l >= 0.0)) {
                return Err(Error::Config("fixed weights must be nonnegative, one per node".into()));
            }
            let mut counts = if num_profiles <= COUNTER_CAP { vec![0u64; num_profiles] } else { Vec::new() };
            for t in 1..=*horizon {
                let idx = sampler.step(lambda, &mut rng)?;
                if !counts.is_empty() {
                    counts[idx] += 1;
                }
                for (s, &r) in totals.iter_mut().zip(&sampler.payoff) {
                    s.add(r);
                }
                if cfg.record_stride > 0 && t % cfg.record_stride == 0 {
                    slots.push(slot_record(t, &sampler, &totals, utilities));
                }
            }
            let mean: Vec<f64> = totals.iter().map(|s| s.value() / (*horizon).max(1) as f64).collect();
            let stats = SlotStats {
                slots: *horizon,
                profile_counts: counts,
                final_sum_utility: mean.iter().zip(utilities).map(|(&m, u)| u.normalized_unchecked(m)).sum(),
                final_mean_payoff: mean,
                ..Default::default()
            };
            RunTrace {
                meta: TraceMeta::new(Algorithm::Loglinear, cfg.seed, n, meta_config),
                slots,
                frames: Vec::new(),
                slot_stats: Some(stats),
                frame_stats: None,
            }
        }
        LogLinearMode::Adaptive { frame_len, num_frames, schedule, lambda0 } => {
            if *frame_len == 0 {
                return Err(Error::Config("frame length must be at least 1".into()));
            }
            schedule.validate(false)?;
            let mut lambda = lambda0.resolve(n)?;
            let lambda_max = crate::cnum::lambda_max(utilities);
            let mut acc = FrameAccumulator::new(n, &lambda);
            let mut frames = Vec::with_capacity(*num_frames);
            let mut t = 0u64;
            for l in 1..=*num_frames {
                let mut frame_sum = vec![CompensatedSum::default(); n];
                for _ in 0..*frame_len {
                    t += 1;
                    sampler.step(&lambda, &mut rng)?;
                    for i in 0..n {
                        frame_sum[i].add(sampler.payoff[i]);
                        totals[i].add(sampler.payoff[i]);
                    }
                    if cfg.record_stride > 0 && t % cfg.record_stride == 0 {
                        slots.push(slot_record(t, &sampler, &totals, utilities));
                    }
                }
                let service: Vec<f64> = frame_sum.iter().map(|s| s.value() / *frame_len as f64).collect();
                let target = utilities
                    .iter()
                    .zip(&lambda)
                    .map(|(u, &lam)| flow_control_solve(u, lam))
                    .collect::<Result<Vec<_>>>()?;
                let step = schedule.step(l);
                let next: Vec<f64> =
                    (0..n).map(|i| lambda_update(lambda[i], step, target[i], service[i])).collect();
                let error = crate::cnum::subgradient_error(env, &lambda, &service);
                frames.push(acc.push(l, step, &lambda, &next, service, target, *frame_len as f64, error, utilities));
                lambda = next;
            }
            let stats = acc.finish(*num_frames, lambda, lambda_max, utilities);
            RunTrace {
                meta: TraceMeta::new(Algorithm::Loglinear, cfg.seed, n, meta_config),
                slots,
                frames,
                slot_stats: None,
                frame_stats: Some(stats),
            }
        }
    };
    let mut trace = trace;
    trace.meta.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(trace)
}

fn slot_record(t: u64, s: &Sampler<'_>, totals: &[CompensatedSum], utilities: &[UtilitySpec]) -> SlotRecord {
    let mean: Vec<f64> = totals.iter().map(|x| x.value() / t as f64).collect();
    let utility: Vec<f64> = mean.iter().zip(utilities).map(|(&m, u)| u.normalized_unchecked(m.clamp(0.0, 1.0))).collect();
    SlotRecord {
        slot: t,
        actions: s.profile.clone(),
        payoffs: s.payoff.clone(),
        content: Vec::new(),
        sum_utility: utility.iter().sum(),
        mean_payoff: mean,
        utility,
    }
}
