//! Frame-based dynamics for concave utilities: one-slot memory, weighted
//! satisfaction, and a subgradient weight update at the end of every frame.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{max_weight_oracle, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::game::GameEnvironment;
use crate::gnum::{decode_action, ActionDraw, COUNTER_CAP};
use crate::numeric::{eps_pow, node_streams, CompensatedSum, ExactSum};
use crate::trace::{Algorithm, FrameRecord, FrameStats, RunTrace, SlotRecord, TraceMeta};
use crate::utility::{Scale, UtilityKind, UtilitySpec};

/// Slack allowed on the weight bound and on the content exponent.
pub const LAMBDA_TOLERANCE: f64 = 1e-12;
const BISECTION_TOL: f64 = 1e-10;

/// Step sizes `b(l)`, frames counted from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `b(l) = b0 / l`.
    Decreasing {
        #[serde(default = "one")]
        b0: f64,
    },
    /// `b(l) = b`.
    Fixed {
        #[serde(default = "tenth")]
        b: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Decreasing { b0: 1.0 }
    }
}

impl StepSchedule {
    pub fn fixed(b: f64) -> Self {
        StepSchedule::Fixed { b }
    }

    pub fn decreasing(b0: f64) -> Self {
        StepSchedule::Decreasing { b0 }
    }

    pub fn step(&self, frame: usize) -> f64 {
        match *self {
            StepSchedule::Decreasing { b0 } => b0 / frame.max(1) as f64,
            StepSchedule::Fixed { b } => b,
        }
    }

    /// Largest step the schedule ever takes.
    pub fn max_step(&self) -> f64 {
        match *self {
            StepSchedule::Decreasing { b0 } => b0,
            StepSchedule::Fixed { b } => b,
        }
    }

    fn scale(&self) -> f64 {
        self.max_step()
    }

    pub(crate) fn validate(&self, allow_zero: bool) -> Result<()> {
        let b = self.scale();
        let ok = b.is_finite() && (b > 0.0 || allow_zero && b == 0.0);
        if !ok {
            return Err(Error::Config(format!("step size {b} must be positive and finite")));
        }
        if b > 1.0 {
            log::warn!("step size {b} exceeds 1; the weight bound is not guaranteed");
        }
        Ok(())
    }
}

/// Initial weights: one value for every node, or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialWeights {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl Default for InitialWeights {
    fn default() -> Self {
        InitialWeights::Uniform(DEFAULT_LAMBDA0)
    }
}

pub const DEFAULT_LAMBDA0: f64 = 0.5;

impl InitialWeights {
    pub fn resolve(&self, num_nodes: usize) -> Result<Vec<f64>> {
        match self {
            InitialWeights::Uniform(v) => Ok(vec![*v; num_nodes]),
            InitialWeights::PerNode(v) if v.len() == num_nodes => Ok(v.clone()),
            InitialWeights::PerNode(v) => {
                Err(Error::Config(format!("{} initial weights for {num_nodes} nodes", v.len())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CNumConfig {
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_c: Option<f64>,
    /// Frame length `T` in slots.
    pub frame_len: u64,
    /// Number of frames `L`.
    pub num_frames: usize,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default)]
    pub lambda0: InitialWeights,
    #[serde(default)]
    pub seed: u64,
    /// Target non-stationarity error, used only to report the prescribed `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Keep every `record_stride`-th slot in the trace; 0 keeps none.
    #[serde(default)]
    pub record_stride: u64,
}

impl CNumConfig {
    pub fn new(epsilon: f64, frame_len: u64, num_frames: usize, seed: u64) -> Self {
        Self {
            epsilon,
            exponent_c: None,
            frame_len,
            num_frames,
            schedule: StepSchedule::default(),
            lambda0: InitialWeights::default(),
            seed,
            eta: None,
            record_stride: 0,
        }
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_lambda0(mut self, lambda0: InitialWeights) -> Self {
        self.lambda0 = lambda0;
        self
    }

    pub fn with_exponent(mut self, c: f64) -> Self {
        self.exponent_c = Some(c);
        self
    }

    pub fn exponent(&self, num_nodes: usize) -> f64 {
        self.exponent_c.unwrap_or(num_nodes as f64 + 1.0)
    }

    pub fn params(&self, env: &GameEnvironment, utilities: &[UtilitySpec]) -> Result<CNumParams> {
        let n = env.num_nodes();
        let c = self.exponent(n);
        if utilities.len() != n {
            return Err(Error::InvalidInput(format!("{} utilities for {n} nodes", utilities.len())));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!("epsilon {} must lie in (0, 0.5)", self.epsilon)));
        }
        if !(c.is_finite() && c > n as f64) {
            return Err(Error::Config(format!("exponent c = {c} must exceed N = {n}")));
        }
        if self.frame_len == 0 {
            return Err(Error::Config("frame length T must be at least 1".into()));
        }
        if let Some(i) = env.space().sizes().iter().position(|&s| s < 2) {
            return Err(Error::Config(format!("node {i} has a single action; content nodes need an alternative")));
        }
        self.schedule.validate(false)?;
        for u in utilities {
            u.validate()?;
            if !u.is_concave() {
                return Err(Error::UnsupportedUtility(format!("{:?} is not concave", u.kind)));
            }
            if !u.is_strictly_concave() {
                log::warn!("utility {:?} is not strictly concave", u.kind);
            }
        }
        let lambda_max = lambda_max(utilities);
        let lambda0 = self.lambda0.resolve(n)?;
        if let Some(bad) = lambda0.iter().find(|&&l| !(l >= 0.0 && l < lambda_max)) {
            return Err(Error::Config(format!("initial weight {bad} must lie in [0, V+1 = {lambda_max})")));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::Config(format!("eta {eta} must be positive")));
            }
        }
        Ok(CNumParams::new(self.epsilon, c, lambda_max, lambda0))
    }

    pub fn resolved_json(&self, num_nodes: usize, lambda_max: f64) -> serde_json::Value {
        let mut cfg = self.clone();
        cfg.exponent_c = Some(self.exponent(num_nodes));
        let mut v = serde_json::to_value(cfg).expect("config serializes");
        v["lambda_max"] = serde_json::json!(lambda_max);
        if let Some(eta) = self.eta {
            let c = self.exponent(num_nodes);
            v["suggested_frame_len"] =
                serde_json::json!(suggest_frame_size(num_nodes, lambda_max - 1.0, eta, self.epsilon, c));
        }
        v
    }
}

/// Common weight bound `V + 1`, with `V` the largest derivative bound.
pub fn lambda_max(utilities: &[UtilitySpec]) -> f64 {
    utilities.iter().map(UtilitySpec::derivative_bound).fold(0.0, f64::max) + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct CNumParams {
    pub epsilon: f64,
    pub c: f64,
    pub ln_eps: f64,
    pub p_experiment: f64,
    pub lambda_max: f64,
    pub lambda0: Vec<f64>,
}

impl CNumParams {
    pub fn new(epsilon: f64, c: f64, lambda_max: f64, lambda0: Vec<f64>) -> Self {
        let ln_eps = epsilon.ln();
        Self { epsilon, c, ln_eps, p_experiment: eps_pow(ln_eps, c), lambda_max, lambda0 }
    }

    /// `ε^(1 - λ r / λ_max)`, failing when the exponent leaves `[0, 1]`.
    pub fn content_probability(&self, lambda: f64, payoff: f64) -> Result<f64> {
        let exponent = 1.0 - lambda * payoff / self.lambda_max;
        if !(-LAMBDA_TOLERANCE..=1.0 + LAMBDA_TOLERANCE).contains(&exponent) {
            return Err(Error::Invariant(format!(
                "content exponent {exponent} outside [0, 1] (lambda {lambda}, payoff {payoff})"
            )));
        }
        Ok(eps_pow(self.ln_eps, exponent.clamp(0.0, 1.0)))
    }
}

#[derive(Debug, Clone)]
pub struct CNumNodeState {
    num_actions: usize,
    prev_action: Option<usize>,
    prev_payoff: f64,
    content: bool,
    lambda: f64,
    frame_sum: ExactSum,
    frame_slots: u64,
    target: f64,
}

impl CNumNodeState {
    pub fn new(num_actions: usize, lambda: f64) -> Self {
        Self {
            num_actions,
            prev_action: None,
            prev_payoff: 0.0,
            content: false,
            lambda,
            frame_sum: ExactSum::default(),
            frame_slots: 0,
            target: 0.0,
        }
    }

    pub fn with_previous(num_actions: usize, action: usize, payoff: f64, content: bool, lambda: f64) -> Self {
        Self { prev_action: Some(action), prev_payoff: payoff, content, ..Self::new(num_actions, lambda) }
    }

    pub fn is_content(&self) -> bool {
        self.content
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn prev_action(&self) -> Option<usize> {
        self.prev_action
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn frame_slots(&self) -> u64 {
        self.frame_slots
    }

    /// Exact sum of the payoffs received in the current frame.
    pub fn frame_payoff_sum(&self) -> f64 {
        self.frame_sum.value()
    }

    /// Closes the frame: returns `s_i(l)`, stores `r̄_i(l)`, applies the
    /// weight update and resets the accumulator.
    pub fn end_frame(&mut self, utility: &UtilitySpec, step: f64) -> Result<(f64, f64)> {
        if self.frame_slots == 0 {
            return Err(Error::InvalidInput("frame has no slots".into()));
        }
        let service = self.frame_sum.value() / self.frame_slots as f64;
        self.target = flow_control_solve(utility, self.lambda)?;
        self.lambda = lambda_update(self.lambda, step, self.target, service);
        self.frame_sum.clear();
        self.frame_slots = 0;
        Ok((service, self.target))
    }
}

/// Action update for one slot. Consumes exactly one draw.
pub fn cnum_action_update<R: Rng + ?Sized>(
    node: &CNumNodeState,
    params: &CNumParams,
    rng: &mut R,
) -> Result<ActionDraw> {
    let u: f64 = rng.random();
    match (node.content, node.prev_action) {
        (true, None) => Err(Error::InvalidInput("content node without a previous action".into())),
        (true, Some(_)) if node.num_actions < 2 => {
            Err(Error::Config("content node has no alternative action".into()))
        }
        (content, prev) => Ok(decode_action(u, content, prev.unwrap_or(0), node.num_actions, params.p_experiment)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CNumSatisfaction {
    pub content: bool,
    pub deterministic: bool,
    pub content_probability: f64,
}

/// Satisfaction update for one slot. Consumes exactly one draw and adds the
/// payoff to the frame accumulator.
pub fn cnum_satisfaction_update<R: Rng + ?Sized>(
    node: &mut CNumNodeState,
    action: usize,
    payoff: f64,
    params: &CNumParams,
    rng: &mut R,
) -> Result<CNumSatisfaction> {
    if !(0.0..=1.0).contains(&payoff) {
        return Err(Error::Domain(payoff));
    }
    let p = params.content_probability(node.lambda, payoff)?;
    Ok(satisfaction_with(node, action, payoff, p, rng))
}

#[inline]
fn satisfaction_with<R: Rng + ?Sized>(
    node: &mut CNumNodeState,
    action: usize,
    payoff: f64,
    p: f64,
    rng: &mut R,
) -> CNumSatisfaction {
    let u: f64 = rng.random();
    let deterministic = node.content && node.prev_action == Some(action) && node.prev_payoff == payoff;
    let content = deterministic || u < p;
    node.prev_action = Some(action);
    node.prev_payoff = payoff;
    node.content = content;
    node.frame_sum.add(payoff);
    node.frame_slots += 1;
    CNumSatisfaction { content, deterministic, content_probability: p }
}

/// `argmax_{α ∈ [0,1]} U(α) − λα` on the natural scale.
pub fn flow_control_solve(u: &UtilitySpec, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("weight {lambda} must be finite and nonnegative")));
    }
    if !u.is_concave() {
        return Err(Error::UnsupportedUtility(format!("{:?} is not concave", u.kind)));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    if let Some(alpha) = u.inverse_derivative(lambda) {
        return Ok(alpha.clamp(0.0, 1.0));
    }
    if let UtilityKind::Affine = u.kind {
        return Ok(if lambda < 1.0 { 1.0 } else { 0.0 });
    }
    // Smallest α with U'(α) ≤ λ; the right derivative is nonincreasing.
    let d = |a: f64| u.derivative(a, Scale::Natural).expect("point lies in [0, 1]");
    if d(0.0) <= lambda {
        return Ok(0.0);
    }
    if d(1.0 - BISECTION_TOL) > lambda {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if d(mid) > lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `max(0, λ + b (r̄ − s))`.
pub fn lambda_update(lambda: f64, step: f64, target: f64, service: f64) -> f64 {
    (lambda + step * (target - service)).max(0.0)
}

/// Frame length `N (V + 1) / (η ε^{(c+1) N})`, at least 1.
pub fn suggest_frame_size(num_nodes: usize, v: f64, eta: f64, epsilon: f64, c: f64) -> f64 {
    let n = num_nodes as f64;
    let t = n * (v + 1.0) / (eta * epsilon.powf((c + 1.0) * n));
    if t.is_nan() {
        1.0
    } else {
        t.max(1.0)
    }
}

/// Per-frame Cesàro bookkeeping shared with the exact-gradient baseline.
pub(crate) struct FrameAccumulator {
    step_sum: f64,
    weighted_target: Vec<f64>,
    weighted_error: Option<f64>,
    service_sum: Vec<CompensatedSum>,
    service_weight: f64,
    max_lambda: f64,
}

impl FrameAccumulator {
    pub(crate) fn new(n: usize, lambda0: &[f64]) -> Self {
        Self {
            step_sum: 0.0,
            weighted_target: vec![0.0; n],
            weighted_error: Some(0.0),
            service_sum: vec![CompensatedSum::default(); n],
            service_weight: 0.0,
            max_lambda: lambda0.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Records one frame. `weight` is the number of slots the frame service
    /// averages over (1 for the exact baseline).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(
        &mut self,
        frame: usize,
        step: f64,
        lambda: &[f64],
        next_lambda: &[f64],
        service: Vec<f64>,
        target: Vec<f64>,
        weight: f64,
        error: Option<f64>,
        utilities: &[UtilitySpec],
    ) -> FrameRecord {
        self.step_sum += step;
        for (w, &r) in self.weighted_target.iter_mut().zip(&target) {
            *w += step * r;
        }
        self.weighted_error = match (self.weighted_error, error) {
            (Some(acc), Some(e)) => Some(acc + step * e),
            _ => None,
        };
        for (acc, &s) in self.service_sum.iter_mut().zip(&service) {
            acc.add(s * weight);
        }
        self.service_weight += weight;
        self.max_lambda = next_lambda.iter().cloned().fold(self.max_lambda, f64::max);

        let mean_service = self.mean_service();
        let utility: Vec<f64> = mean_service.iter().zip(utilities).map(|(&s, u)| normalized(u, s)).collect();
        let cesaro = self.cesaro_target();
        FrameRecord {
            frame,
            step,
            lambda: lambda.to_vec(),
            service,
            target,
            sum_utility: utility.iter().sum(),
            utility,
            cesaro_sum_utility: sum_utility(&cesaro, utilities, Scale::Normalized),
            cesaro_sum_utility_natural: sum_utility(&cesaro, utilities, Scale::Natural),
            cesaro_target: cesaro,
            subgradient_error: error,
        }
    }

    fn mean_service(&self) -> Vec<f64> {
        self.service_sum
            .iter()
            .map(|s| if self.service_weight > 0.0 { s.value() / self.service_weight } else { 0.0 })
            .collect()
    }

    fn cesaro_target(&self) -> Vec<f64> {
        self.weighted_target
            .iter()
            .map(|&w| if self.step_sum > 0.0 { w / self.step_sum } else { 0.0 })
            .collect()
    }

    pub(crate) fn finish(self, frames: usize, final_lambda: Vec<f64>, lambda_max: f64, utilities: &[UtilitySpec]) -> FrameStats {
        let cesaro = self.cesaro_target();
        let mean_service = self.mean_service();
        FrameStats {
            frames,
            step_sum: self.step_sum,
            cesaro_sum_utility: sum_utility(&cesaro, utilities, Scale::Normalized),
            cesaro_sum_utility_natural: sum_utility(&cesaro, utilities, Scale::Natural),
            cesaro_target: cesaro,
            cesaro_subgradient_error: self
                .weighted_error
                .map(|e| if self.step_sum > 0.0 { e / self.step_sum } else { 0.0 }),
            final_lambda,
            max_lambda: self.max_lambda,
            lambda_max,
            sum_utility_of_mean_service: mean_service.iter().zip(utilities).map(|(&s, u)| normalized(u, s)).sum(),
            mean_service,
        }
    }
}

fn normalized(u: &UtilitySpec, r: f64) -> f64 {
    u.normalized_unchecked(r.clamp(0.0, 1.0))
}

pub(crate) fn sum_utility(rates: &[f64], utilities: &[UtilitySpec], scale: Scale) -> f64 {
    rates
        .iter()
        .zip(utilities)
        .map(|(&r, u)| u.value(r.clamp(0.0, 1.0), scale).expect("clamped into [0, 1]"))
        .sum()
}

/// `max_a Σ λ_i r_i(a) − Σ λ_i s_i`, when the game can be enumerated.
pub(crate) fn subgradient_error(env: &GameEnvironment, lambda: &[f64], service: &[f64]) -> Option<f64> {
    if env.num_profiles() > ENUMERATION_CAP {
        return None;
    }
    let best = max_weight_oracle(env, lambda, ENUMERATION_CAP).ok()?;
    Some(best.value - lambda.iter().zip(service).map(|(l, s)| l * s).sum::<f64>())
}

pub(crate) fn check_lambda_bound(frame: usize, lambda: &[f64], lambda_max: f64) -> Result<()> {
    if let Some((i, l)) = lambda.iter().enumerate().find(|(_, &l)| l > lambda_max + LAMBDA_TOLERANCE || l < 0.0) {
        return Err(Error::Invariant(format!(
            "after frame {frame}, weight of node {i} is {l}, outside [0, V+1 = {lambda_max}]"
        )));
    }
    Ok(())
}

/// Runs `L` frames of `T` slots.
pub fn run_cnum(env: &GameEnvironment, cfg: &CNumConfig, utilities: &[UtilitySpec]) -> Result<RunTrace> {
    let started = Instant::now();
    let params = cfg.params(env, utilities)?;
    let n = env.num_nodes();
    let space = env.space();
    let sizes = space.sizes().to_vec();
    let num_profiles = space.num_profiles();
    let table = (num_profiles <= COUNTER_CAP).then(|| env.dense_table(COUNTER_CAP)).transpose()?;

    let mut rngs = node_streams(cfg.seed, n);
    let mut nodes: Vec<CNumNodeState> =
        sizes.iter().zip(&params.lambda0).map(|(&s, &l)| CNumNodeState::new(s, l)).collect();
    let mut acc = FrameAccumulator::new(n, &params.lambda0);
    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut slots = Vec::new();
    let mut totals = vec![CompensatedSum::default(); n];
    let mut profile = vec![0usize; n];
    let mut payoff = vec![0.0; n];
    let mut frame_counts = if table.is_some() { vec![0u64; num_profiles] } else { Vec::new() };
    // Per-frame content probabilities, node-major over profiles.
    let mut p_content = vec![0.0; if table.is_some() { n * num_profiles } else { 0 }];
    let mut slot = 0u64;

    for l in 1..=cfg.num_frames {
        let lambda: Vec<f64> = nodes.iter().map(|nd| nd.lambda).collect();
        if let Some(t) = &table {
            for i in 0..n {
                for a in 0..num_profiles {
                    p_content[i * num_profiles + a] = params.content_probability(lambda[i], t[a * n + i])?;
                }
            }
            frame_counts.iter_mut().for_each(|c| *c = 0);
        }

        for _ in 0..cfg.frame_len {
            slot += 1;
            for i in 0..n {
                profile[i] = cnum_action_update(&nodes[i], &params, &mut rngs[i])?.action;
            }
            let idx = space.index_unchecked(&profile);
            env.payoffs_into(idx, &profile, &mut payoff)?;
            for i in 0..n {
                if table.is_some() {
                    let p = p_content[i * num_profiles + idx];
                    satisfaction_with(&mut nodes[i], profile[i], payoff[i], p, &mut rngs[i]);
                } else {
                    cnum_satisfaction_update(&mut nodes[i], profile[i], payoff[i], &params, &mut rngs[i])?;
                }
                totals[i].add(payoff[i]);
            }
            if table.is_some() {
                frame_counts[idx] += 1;
            }
            if cfg.record_stride > 0 && slot % cfg.record_stride == 0 {
                let mean: Vec<f64> = totals.iter().map(|s| s.value() / slot as f64).collect();
                let utility: Vec<f64> = mean.iter().zip(utilities).map(|(&m, u)| normalized(u, m)).collect();
                slots.push(SlotRecord {
                    slot,
                    actions: profile.clone(),
                    payoffs: payoff.clone(),
                    content: nodes.iter().map(|nd| nd.content).collect(),
                    sum_utility: utility.iter().sum(),
                    mean_payoff: mean,
                    utility,
                });
            }
        }

        if let Some(t) = &table {
            for (i, nd) in nodes.iter().enumerate() {
                let mut by_count = ExactSum::default();
                for (a, &cnt) in frame_counts.iter().enumerate() {
                    if cnt > 0 {
                        by_count.add(cnt as f64 * t[a * n + i]);
                    }
                }
                let direct = nd.frame_payoff_sum();
                if (direct - by_count.value()).abs() > 1e-9 * direct.abs().max(1.0) {
                    return Err(Error::Invariant(format!(
                        "frame {l}: payoff sum {direct} of node {i} disagrees with profile counts {}",
                        by_count.value()
                    )));
                }
            }
        }

        let step = cfg.schedule.step(l);
        let mut service = Vec::with_capacity(n);
        let mut target = Vec::with_capacity(n);
        for (nd, u) in nodes.iter_mut().zip(utilities) {
            let (s, r) = nd.end_frame(u, step)?;
            service.push(s);
            target.push(r);
        }
        let next: Vec<f64> = nodes.iter().map(|nd| nd.lambda).collect();
        let error = subgradient_error(env, &lambda, &service);
        frames.push(acc.push(l, step, &lambda, &next, service, target, cfg.frame_len as f64, error, utilities));
        check_lambda_bound(l, &next, params.lambda_max)?;
    }

    let final_lambda = nodes.iter().map(|nd| nd.lambda).collect();
    let stats = acc.finish(cfg.num_frames, final_lambda, params.lambda_max, utilities);
    let mut meta = TraceMeta::new(Algorithm::Cnum, cfg.seed, n, cfg.resolved_json(n, params.lambda_max));
    meta.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(RunTrace { meta, slots, frames, slot_stats: None, frame_stats: Some(stats) })
}
