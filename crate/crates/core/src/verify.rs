//! Machine-readable certification of a small game: optimality of the stable
//! states, closed-form potentials, weight bounds and mixing bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::report::certify;
use crate::chain::{
    check_closed_forms, empirical_tv_curve, stable_states, stationary_distribution, stochastic_potentials,
    ChainAlgorithm, ChainModel, HistoryCount, STATE_CAP,
};
use crate::cnum::{lambda_max, run_cnum, CNumConfig, InitialWeights, StepSchedule};
use crate::error::{Error, Result};
use crate::gamefile::GameDefinition;
use crate::oracles::{brute_force_gnum_optimum, concave_optimum, dual_value, CONCAVE_MAX_ITERS, CONCAVE_TOL, MULTISET_CAP};
use crate::utility::Scale;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), status, detail: detail.into() }
    }

    fn skip(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Skip, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    /// Decreasing sequence for the stable-mass check.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_tv_epsilon")]
    pub tv_epsilon: f64,
    #[serde(default = "default_tv_horizon")]
    pub tv_horizon: usize,
    #[serde(default = "default_weight_runs")]
    pub weight_runs: usize,
    #[serde(default = "default_duality_samples")]
    pub duality_samples: usize,
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_windows() -> Vec<usize> {
    vec![1]
}
fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}
fn default_tv_epsilon() -> f64 {
    0.2
}
fn default_tv_horizon() -> usize {
    10_000
}
fn default_weight_runs() -> usize {
    10
}
fn default_duality_samples() -> usize {
    100
}
fn default_state_cap() -> usize {
    STATE_CAP
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            windows: default_windows(),
            epsilons: default_epsilons(),
            tv_epsilon: default_tv_epsilon(),
            tv_horizon: default_tv_horizon(),
            weight_runs: default_weight_runs(),
            duality_samples: default_duality_samples(),
            state_cap: default_state_cap(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub game: Option<String>,
    pub interdependent: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn count(&self, status: CheckStatus) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }
}

const POTENTIAL_TOL: f64 = 1e-9;
const WEIGHT_TOL: f64 = 1e-12;
const DUALITY_TOL: f64 = 1e-9;

/// Runs every check that fits under the caps. Checks that cannot run are
/// marked skipped with the reason; errors other than cap overruns abort.
pub fn verify(game: &GameDefinition, options: &VerifyOptions) -> Result<VerifyReport> {
    let env = &game.env;
    let mut checks = Vec::new();

    let interdependent = match env.check_interdependence() {
        Ok(r) => {
            let detail = match &r.witness {
                Some((set, profile)) => format!("subset {set:?} is invisible at profile {profile:?}"),
                None => "holds".into(),
            };
            checks.push(CheckResult::new("interdependence", true, detail));
            r.holds
        }
        Err(e) => {
            checks.push(CheckResult::skip("interdependence", e.to_string()));
            false
        }
    };

    for &k in &options.windows {
        window_checks(game, k, interdependent, options, &mut checks)?;
    }
    oracle_checks(game, options, &mut checks)?;
    mixing_checks(game, options, &mut checks)?;
    weight_checks(game, options, &mut checks)?;

    Ok(VerifyReport { game: game.name.clone(), interdependent, checks })
}

fn capped<T>(r: Result<T>) -> Result<std::result::Result<T, String>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e @ Error::SizeCap { .. }) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}

fn window_checks(
    game: &GameDefinition,
    k: usize,
    interdependent: bool,
    options: &VerifyOptions,
    checks: &mut Vec<CheckResult>,
) -> Result<()> {
    let tag = |name: &str| format!("{name}[K={k}]");
    let names = ["stable-states", "closed-forms", "stable-mass"];
    let model = match capped(ChainModel::new(&game.env, &game.utilities, ChainAlgorithm::Gnum { window: k }, None, options.state_cap))? {
        Ok(m) => m,
        Err(reason) => {
            for name in names {
                checks.push(CheckResult::skip(tag(name), format!("chain over cap: {reason}")));
            }
            return Ok(());
        }
    };
    let potentials = stochastic_potentials(&model);
    let stable = stable_states(&potentials);
    if !interdependent {
        for name in &names[..2] {
            checks.push(CheckResult::skip(tag(name), "assumption unmet, skipped: game is not interdependent"));
        }
    } else {
        match capped(certify(&game.env, &game.utilities, &model, &stable))? {
            Ok((c, _)) => checks.push(CheckResult::new(
                tag("stable-states"),
                c.passed,
                format!("stable {:?}, optimum {:?}, all content {}", c.stable, c.expected, c.all_stable_content),
            )),
            Err(reason) => checks.push(CheckResult::skip(tag("stable-states"), reason)),
        }
        let literal = check_closed_forms(&model, &potentials, HistoryCount::Histories, POTENTIAL_TOL);
        let orbits = check_closed_forms(&model, &potentials, HistoryCount::RotationOrbits, POTENTIAL_TOL);
        checks.push(CheckResult::new(
            tag("closed-forms"),
            literal.passed,
            format!(
                "per-history count: content err {:.3e}, discontent err {:.3e}, mixed margin {:.3e}; per-orbit count: {} ({} unreachable states excluded)",
                literal.content_max_error,
                literal.discontent_max_error,
                literal.mixed_min_margin,
                if orbits.passed { "holds" } else { "fails" },
                literal.unreachable
            ),
        ));
    }

    let mut masses = Vec::new();
    for &eps in &options.epsilons {
        let pi = stationary_distribution(&model, eps)?;
        if pi.min_recurrent_mass() <= 0.0 {
            checks.push(CheckResult::new(tag("stable-mass"), false, format!("zero mass on a recurrent state at {eps}")));
            return Ok(());
        }
        masses.push(pi.mass(&stable));
    }
    let increasing = masses.windows(2).all(|w| w[1] > w[0]);
    checks.push(CheckResult::new(tag("stable-mass"), increasing, format!("masses {masses:?} at {:?}", options.epsilons)));
    Ok(())
}

fn oracle_checks(game: &GameDefinition, options: &VerifyOptions, checks: &mut Vec<CheckResult>) -> Result<()> {
    let (env, u) = (&game.env, &game.utilities);
    let concave = match concave_optimum(env, u, Scale::Natural, CONCAVE_TOL, CONCAVE_MAX_ITERS) {
        Ok(c) => Some(c),
        Err(e @ (Error::UnsupportedUtility(_) | Error::SizeCap { .. })) => {
            checks.push(CheckResult::skip("window-monotonicity", e.to_string()));
            checks.push(CheckResult::skip("weak-duality", e.to_string()));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let concave = concave.expect("set above");
    let mut values = Vec::new();
    for k in [1, 2, 4] {
        match capped(brute_force_gnum_optimum(env, u, k, Scale::Natural, MULTISET_CAP))? {
            Ok(opt) => values.push((k, opt.value)),
            Err(_) => break,
        }
    }
    let ok = values.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-12)
        && values.last().is_none_or(|&(_, v)| v <= concave.value + CONCAVE_TOL);
    checks.push(CheckResult::new(
        "window-monotonicity",
        ok,
        format!("discretized optima {values:?}, relaxed optimum {:.6}", concave.value),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let lmax = lambda_max(u);
    let mut worst = f64::INFINITY;
    for _ in 0..options.duality_samples {
        let lambda: Vec<f64> = (0..env.num_nodes()).map(|_| rng.random::<f64>() * lmax).collect();
        worst = worst.min(dual_value(env, u, &lambda)? - concave.value);
    }
    checks.push(CheckResult::new(
        "weak-duality",
        worst >= -DUALITY_TOL,
        format!("min d(λ) − primal over {} samples: {worst:.3e}", options.duality_samples),
    ));
    Ok(())
}

fn mixing_checks(game: &GameDefinition, options: &VerifyOptions, checks: &mut Vec<CheckResult>) -> Result<()> {
    let lmax = lambda_max(&game.utilities);
    let lambda = vec![1.0f64.min(lmax); game.env.num_nodes()];
    let model = match capped(ChainModel::new(&game.env, &game.utilities, ChainAlgorithm::Cnum { lambda }, None, options.state_cap))? {
        Ok(m) => m,
        Err(reason) => {
            checks.push(CheckResult::skip("tv-contraction", reason));
            return Ok(());
        }
    };
    let pi = stationary_distribution(&model, options.tv_epsilon)?;
    let curve = empirical_tv_curve(&model, &pi, None, options.tv_horizon)?;
    checks.push(CheckResult::new(
        "tv-contraction",
        curve.violations.is_empty(),
        format!(
            "{} violations over {} slots at ε = {}; exact distance ≤ 0.1 after {:?} slots, bound after {:?}",
            curve.violations.len(),
            options.tv_horizon,
            options.tv_epsilon,
            curve.first_below(0.1),
            curve.bound_first_below(0.1)
        ),
    ));
    Ok(())
}

fn weight_checks(game: &GameDefinition, options: &VerifyOptions, checks: &mut Vec<CheckResult>) -> Result<()> {
    if options.weight_runs == 0 {
        checks.push(CheckResult::skip("weight-bound", "no runs requested"));
        return Ok(());
    }
    let lmax = lambda_max(&game.utilities);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    for run in 0..options.weight_runs {
        let lambda0: Vec<f64> = (0..game.env.num_nodes()).map(|_| rng.random::<f64>() * lmax).collect();
        let cfg = CNumConfig::new(0.1, 200, 20, options.seed + run as u64)
            .with_schedule(StepSchedule::fixed(1.0))
            .with_lambda0(InitialWeights::PerNode(lambda0));
        match run_cnum(&game.env, &cfg, &game.utilities) {
            Ok(trace) => worst = worst.max(trace.frame_stats.map_or(0.0, |s| s.max_lambda)),
            Err(e) if e.is_invariant() => {
                checks.push(CheckResult::new("weight-bound", false, e.to_string()));
                return Ok(());
            }
            Err(e) => return Err(e),
        }
    }
    checks.push(CheckResult::new(
        "weight-bound",
        worst <= lmax + WEIGHT_TOL,
        format!("max weight {worst:.6} over {} runs, bound {lmax}", options.weight_runs),
    ));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameEnvironment;
    use crate::utility::UtilitySpec;

    fn quick() -> VerifyOptions {
        VerifyOptions { tv_horizon: 200, weight_runs: 2, duality_samples: 10, ..VerifyOptions::default() }
    }

    #[test]
    fn two_node_passes() {
        let report = verify(&GameDefinition::two_node_example(), &quick()).unwrap();
        assert!(report.passed(), "{:#?}", report.checks);
        assert_eq!(report.count(CheckStatus::Skip), 0);
    }

    #[test]
    fn non_interdependent_game_skips_optimality() {
        // Node 1's payoff ignores node 0 and vice versa.
        let env = GameEnvironment::from_generator(vec![2, 2], |a| vec![0.2 + 0.5 * a[0] as f64, 0.3 + 0.4 * a[1] as f64])
            .unwrap();
        let game = GameDefinition::new(env, vec![UtilitySpec::log1p(), UtilitySpec::log1p()]).unwrap();
        let report = verify(&game, &quick()).unwrap();
        assert!(!report.interdependent);
        let s = report.checks.iter().find(|c| c.name == "stable-states[K=1]").unwrap();
        assert_eq!(s.status, CheckStatus::Skip);
        assert!(s.detail.contains("assumption unmet"));
    }

    #[test]
    fn over_cap_skips_chain_checks() {
        let opts = VerifyOptions { state_cap: 8, ..quick() };
        let report = verify(&GameDefinition::two_node_example(), &opts).unwrap();
        let skipped: Vec<_> = report.checks.iter().filter(|c| c.status == CheckStatus::Skip).map(|c| c.name.as_str()).collect();
        assert!(skipped.contains(&"stable-states[K=1]") && skipped.contains(&"tv-contraction"), "{skipped:?}");
        assert!(report.checks.iter().any(|c| c.name == "weak-duality" && c.status == CheckStatus::Pass));
    }
}
