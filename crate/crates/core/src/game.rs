//! Finite payoff games: action spaces, payoff maps, occupation measures and
//! the interdependence check.
//!
//! Joint profiles are vectors of per-node action indices. Profiles are also
//! addressed by a mixed-radix index with node 0 as the most significant digit,
//! so index order is the lexicographic order of profiles.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `2^N * |A|` before `check_interdependence` logs a warning.
pub const DEFAULT_INTERDEPENDENCE_WARN_CAP: u128 = 1 << 22;

/// Per-node finite action sets, with mixed-radix indexing of joint profiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    sizes: Vec<usize>,
}

impl ActionSpace {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidInput("a game needs at least one node".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidInput("every node needs at least one action".into()));
        }
        let total = sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
        if total.is_none() {
            return Err(Error::InvalidInput("joint action space overflows usize".into()));
        }
        Ok(Self { sizes })
    }

    pub fn num_nodes(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size_of(&self, node: usize) -> usize {
        self.sizes[node]
    }

    /// |A|, the number of joint profiles.
    pub fn num_profiles(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn index_of(&self, profile: &[usize]) -> Result<usize> {
        if profile.len() != self.sizes.len() {
            return Err(Error::InvalidInput(format!(
                "profile has {} entries, game has {} nodes",
                profile.len(),
                self.sizes.len()
            )));
        }
        let mut idx = 0usize;
        for (&a, &n) in profile.iter().zip(&self.sizes) {
            if a >= n {
                return Err(Error::InvalidInput(format!("action {a} out of range 0..{n}")));
            }
            idx = idx * n + a;
        }
        Ok(idx)
    }

    /// Unchecked variant of [`index_of`](Self::index_of) for hot loops.
    #[inline]
    pub fn index_unchecked(&self, profile: &[usize]) -> usize {
        profile.iter().zip(&self.sizes).fold(0, |idx, (&a, &n)| idx * n + a)
    }

    pub fn profile_of(&self, mut index: usize) -> Result<Vec<usize>> {
        if index >= self.num_profiles() {
            return Err(Error::InvalidInput(format!(
                "profile index {index} out of range 0..{}",
                self.num_profiles()
            )));
        }
        let mut out = vec![0; self.sizes.len()];
        for (slot, &n) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = index % n;
            index /= n;
        }
        Ok(out)
    }

    /// All joint profiles in index order.
    pub fn profiles(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.num_profiles()).map(move |i| self.profile_of(i).expect("index in range"))
    }
}

type PayoffFn = dyn Fn(&[usize]) -> Vec<f64> + Send + Sync;

/// How payoff vectors are produced.
#[derive(Clone)]
pub enum PayoffSource {
    /// Dense table, `N` payoffs per profile, profiles in index order.
    Table(Vec<f64>),
    /// Pure callback for games too large to tabulate. Values are range-checked
    /// on every evaluation.
    Generator(Arc<PayoffFn>),
}

impl fmt::Debug for PayoffSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffSource::Table(t) => f.debug_tuple("Table").field(&t.len()).finish(),
            PayoffSource::Generator(_) => f.write_str("Generator(..)"),
        }
    }
}

/// A finite game with payoffs normalized into `[0, 1]`.
///
/// Immutable after construction; share it between runs behind an `Arc` or by
/// reference.
#[derive(Debug, Clone)]
pub struct GameEnvironment {
    space: ActionSpace,
    labels: Vec<Vec<String>>,
    payoff: PayoffSource,
    /// Factor the raw table was divided by at construction (1 if untouched).
    rescale: f64,
}

fn check_unit(values: &[f64]) -> Result<()> {
    for &v in values {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            return Err(Error::InvalidInput(format!("payoff {v} outside [0, 1]")));
        }
    }
    Ok(())
}

fn default_labels(sizes: &[usize]) -> Vec<Vec<String>> {
    sizes
        .iter()
        .map(|&n| (1..=n).map(|k| format!("a{k}")).collect())
        .collect()
}

impl GameEnvironment {
    /// Builds a game from a dense table with one payoff vector per profile, in
    /// profile-index order. Tables with entries above 1 are divided by their
    /// global maximum; negative or non-finite entries are rejected.
    pub fn from_table(sizes: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let space = ActionSpace::new(sizes)?;
        let n = space.num_nodes();
        if rows.len() != space.num_profiles() {
            return Err(Error::InvalidInput(format!(
                "payoff table has {} rows, expected {}",
                rows.len(),
                space.num_profiles()
            )));
        }
        let mut flat = Vec::with_capacity(rows.len() * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "payoff row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        if let Some(bad) = flat.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!("payoff {bad} is negative or not finite")));
        }
        let max = flat.iter().cloned().fold(0.0f64, f64::max);
        let rescale = if max > 1.0 {
            flat.iter_mut().for_each(|v| *v /= max);
            max
        } else {
            1.0
        };
        let labels = default_labels(space.sizes());
        Ok(Self { space, labels, payoff: PayoffSource::Table(flat), rescale })
    }

    /// Builds a game backed by a deterministic payoff callback. The callback
    /// must return `N` values in `[0, 1]`.
    pub fn from_generator<F>(sizes: Vec<usize>, f: F) -> Result<Self>
    where
        F: Fn(&[usize]) -> Vec<f64> + Send + Sync + 'static,
    {
        let space = ActionSpace::new(sizes)?;
        let labels = default_labels(space.sizes());
        Ok(Self { space, labels, payoff: PayoffSource::Generator(Arc::new(f)), rescale: 1.0 })
    }

    /// Game where every node receives `value` in every profile.
    pub fn constant(sizes: Vec<usize>, value: f64) -> Result<Self> {
        let space = ActionSpace::new(sizes.clone())?;
        let rows = vec![vec![value; space.num_nodes()]; space.num_profiles()];
        Self::from_table(sizes, rows)
    }

    /// The two-node, two-action illustration game. Rows are node 1's action,
    /// columns node 2's.
    pub fn two_node_example() -> Self {
        let rows = vec![
            vec![0.0001, 0.0001], // (a1, a1)
            vec![0.001, 0.8],     // (a1, a2)
            vec![1.0, 0.001],     // (a2, a1)
            vec![0.01, 0.01],     // (a2, a2)
        ];
        Self::from_table(vec![2, 2], rows).expect("static table is valid")
    }

    pub fn with_labels(mut self, labels: Vec<Vec<String>>) -> Result<Self> {
        if labels.len() != self.space.num_nodes()
            || labels.iter().zip(self.space.sizes()).any(|(l, &n)| l.len() != n)
        {
            return Err(Error::InvalidInput("action labels do not match action sets".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn num_nodes(&self) -> usize {
        self.space.num_nodes()
    }

    pub fn num_profiles(&self) -> usize {
        self.space.num_profiles()
    }

    pub fn labels(&self) -> &[Vec<String>] {
        &self.labels
    }

    pub fn rescale_factor(&self) -> f64 {
        self.rescale
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.payoff, PayoffSource::Table(_))
    }

    pub fn source(&self) -> &PayoffSource {
        &self.payoff
    }

    /// Payoff vector `(f_1(a), ..., f_N(a))`.
    pub fn evaluate_payoffs(&self, profile: &[usize]) -> Result<Vec<f64>> {
        let idx = self.space.index_of(profile)?;
        match &self.payoff {
            PayoffSource::Table(t) => {
                let n = self.num_nodes();
                Ok(t[idx * n..(idx + 1) * n].to_vec())
            }
            PayoffSource::Generator(f) => {
                let out = f(profile);
                if out.len() != self.num_nodes() {
                    return Err(Error::InvalidInput(format!(
                        "generator returned {} payoffs, expected {}",
                        out.len(),
                        self.num_nodes()
                    )));
                }
                check_unit(&out)?;
                Ok(out)
            }
        }
    }

    /// Payoff vector by profile index.
    pub fn payoffs_at(&self, index: usize) -> Result<Vec<f64>> {
        match &self.payoff {
            PayoffSource::Table(t) => {
                let n = self.num_nodes();
                if index >= self.num_profiles() {
                    return Err(Error::InvalidInput(format!("profile index {index} out of range")));
                }
                Ok(t[index * n..(index + 1) * n].to_vec())
            }
            PayoffSource::Generator(_) => self.evaluate_payoffs(&self.space.profile_of(index)?),
        }
    }

    /// Writes `f(a)` into `out` without allocating for tabulated games.
    #[inline]
    pub(crate) fn payoffs_into(&self, index: usize, profile: &[usize], out: &mut [f64]) -> Result<()> {
        match &self.payoff {
            PayoffSource::Table(t) => {
                let n = out.len();
                out.copy_from_slice(&t[index * n..(index + 1) * n]);
                Ok(())
            }
            PayoffSource::Generator(_) => {
                out.copy_from_slice(&self.evaluate_payoffs(profile)?);
                Ok(())
            }
        }
    }

    /// Materializes the full payoff table (profile-major). Fails above `cap`
    /// profiles.
    pub fn tabulate(&self, cap: usize) -> Result<Vec<Vec<f64>>> {
        let size = self.num_profiles();
        if size > cap {
            return Err(Error::SizeCap { what: "profiles", size: size as u128, cap: cap as u128 });
        }
        (0..size).map(|i| self.payoffs_at(i)).collect()
    }

    /// Payoff lookup table for engine hot loops. Generator games are tabulated
    /// when they fit under `cap`.
    pub(crate) fn dense_table(&self, cap: usize) -> Result<Vec<f64>> {
        match &self.payoff {
            PayoffSource::Table(t) => Ok(t.clone()),
            PayoffSource::Generator(_) => Ok(self.tabulate(cap)?.into_iter().flatten().collect()),
        }
    }

    /// Average payoff `r̄_i = Σ_a p(a) f_i(a)` under an occupation measure.
    pub fn average_payoff(&self, measure: &OccupationMeasure) -> Result<Vec<f64>> {
        measure.validate(self.num_profiles(), false)?;
        let n = self.num_nodes();
        let mut out = vec![0.0; n];
        for (idx, &p) in measure.masses().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let f = self.payoffs_at(idx)?;
            for (o, v) in out.iter_mut().zip(f) {
                *o += p * v;
            }
        }
        Ok(out)
    }

    /// Exhaustive check of the interdependence condition: for every proper
    /// nonempty node subset `S` and every profile `a`, some node outside `S`
    /// sees its payoff change under some deviation of `S`.
    pub fn check_interdependence(&self) -> Result<Interdependence> {
        self.check_interdependence_capped(DEFAULT_INTERDEPENDENCE_WARN_CAP)
    }

    pub fn check_interdependence_capped(&self, warn_cap: u128) -> Result<Interdependence> {
        let n = self.num_nodes();
        if n < 2 {
            return Err(Error::InvalidInput("interdependence needs at least two nodes".into()));
        }
        if n >= 64 {
            return Err(Error::SizeCap { what: "nodes", size: n as u128, cap: 63 });
        }
        let work = (1u128 << n) * self.num_profiles() as u128;
        if work > warn_cap {
            log::warn!("interdependence check enumerates {work} (subset, profile) pairs");
        }
        let table = self.tabulate(usize::MAX)?;
        let sizes = self.space.sizes();
        for mask in 1u64..((1u64 << n) - 1) {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let outsiders: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
            for (idx, base) in self.space.profiles().enumerate() {
                let base_pay = &table[idx];
                let mut found = false;
                let mut dev = base.clone();
                // Odometer over the actions of the members of S.
                let mut digits = vec![0usize; members.len()];
                'outer: loop {
                    for (d, &m) in digits.iter().zip(&members) {
                        dev[m] = *d;
                    }
                    let dev_pay = &table[self.space.index_unchecked(&dev)];
                    if outsiders.iter().any(|&j| dev_pay[j] != base_pay[j]) {
                        found = true;
                        break;
                    }
                    let mut k = 0;
                    loop {
                        if k == digits.len() {
                            break 'outer;
                        }
                        digits[k] += 1;
                        if digits[k] < sizes[members[k]] {
                            break;
                        }
                        digits[k] = 0;
                        k += 1;
                    }
                }
                if !found {
                    return Ok(Interdependence { holds: false, witness: Some((members, base)) });
                }
            }
        }
        Ok(Interdependence { holds: true, witness: None })
    }
}

/// Result of the interdependence check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interdependence {
    pub holds: bool,
    /// Violating `(S, a)` pair: no node outside `S` can perceive a deviation
    /// of `S` from `a`.
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
}

/// Probability mass per joint profile, indexed like [`ActionSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationMeasure {
    masses: Vec<f64>,
}

/// Slack allowed on `Σ p(a) ≤ 1`.
pub const MEASURE_TOLERANCE: f64 = 1e-9;

impl OccupationMeasure {
    pub fn new(masses: Vec<f64>) -> Self {
        Self { masses }
    }

    pub fn zero(num_profiles: usize) -> Self {
        Self { masses: vec![0.0; num_profiles] }
    }

    pub fn point_mass(num_profiles: usize, index: usize) -> Self {
        let mut masses = vec![0.0; num_profiles];
        masses[index] = 1.0;
        Self { masses }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Checks nonnegativity and `Σ p ≤ 1` (or `= 1` when `exact`).
    pub fn validate(&self, num_profiles: usize, exact: bool) -> Result<()> {
        if self.masses.len() != num_profiles {
            return Err(Error::InvalidMeasure(format!(
                "measure has {} entries, game has {num_profiles} profiles",
                self.masses.len()
            )));
        }
        if let Some(p) = self.masses.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidMeasure(format!("mass {p} is negative or not finite")));
        }
        let total = self.total();
        if total > 1.0 + MEASURE_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("total mass {total} exceeds 1")));
        }
        if exact && (total - 1.0).abs() > MEASURE_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("total mass {total} is not 1")));
        }
        Ok(())
    }

    /// Convex combination `α·self + (1-α)·other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Self {
        let masses = self
            .masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        Self { masses }
    }
}
