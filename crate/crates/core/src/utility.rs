//! Per-node utilities of average payoff.
//!
//! Every utility has a natural scale (used by the price response of the
//! concave algorithm) and a range-normalized scale mapping `[0, 1]` onto
//! `[0, 1]` (used in satisfaction exponents).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UtilityKind {
    /// `log(offset + r)` with `offset > 0`.
    LogOffset { offset: f64 },
    /// `log(1 + r)`.
    Log1p,
    /// `r`.
    Affine,
    /// Piecewise-linear interpolation of nondecreasing values on an even grid
    /// over `[0, 1]`.
    Table { values: Vec<f64> },
}

/// Which scale a utility value is reported on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Natural,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    #[serde(flatten)]
    pub kind: UtilityKind,
    /// Bound `V` on the natural-scale derivative at zero. Defaults to `U'(0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative_bound: Option<f64>,
}

const CONCAVITY_TOL: f64 = 1e-12;

impl UtilitySpec {
    pub fn new(kind: UtilityKind) -> Result<Self> {
        let spec = Self { kind, derivative_bound: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn log1p() -> Self {
        Self { kind: UtilityKind::Log1p, derivative_bound: None }
    }

    pub fn affine() -> Self {
        Self { kind: UtilityKind::Affine, derivative_bound: None }
    }

    pub fn log_offset(offset: f64) -> Result<Self> {
        Self::new(UtilityKind::LogOffset { offset })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        Self::new(UtilityKind::Table { values })
    }

    pub fn with_derivative_bound(mut self, v: f64) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("derivative bound {v} must be positive")));
        }
        self.derivative_bound = Some(v);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            UtilityKind::LogOffset { offset } => {
                if !(offset.is_finite() && *offset > 0.0) {
                    return Err(Error::Config(format!("log offset {offset} must be positive")));
                }
            }
            UtilityKind::Log1p | UtilityKind::Affine => {}
            UtilityKind::Table { values } => {
                if values.len() < 2 {
                    return Err(Error::Config("utility table needs at least two points".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("utility table values must be finite".into()));
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Config("utility table must be nondecreasing".into()));
                }
                if values[values.len() - 1] <= values[0] {
                    return Err(Error::Config("utility table must not be constant".into()));
                }
            }
        }
        if let Some(v) = self.derivative_bound {
            if v < self.raw_derivative(0.0) - CONCAVITY_TOL {
                return Err(Error::Config(format!(
                    "derivative bound {v} is below U'(0) = {}",
                    self.raw_derivative(0.0)
                )));
            }
        }
        Ok(())
    }

    fn table_segment(values: &[f64], r: f64) -> (usize, f64) {
        let segments = values.len() - 1;
        let pos = r * segments as f64;
        let k = (pos.floor() as usize).min(segments - 1);
        (k, pos - k as f64)
    }

    /// Natural-scale value, no domain check.
    pub(crate) fn raw(&self, r: f64) -> f64 {
        match &self.kind {
            UtilityKind::LogOffset { offset } => (offset + r).ln(),
            UtilityKind::Log1p => r.ln_1p(),
            UtilityKind::Affine => r,
            UtilityKind::Table { values } => {
                let (k, frac) = Self::table_segment(values, r);
                values[k] + frac * (values[k + 1] - values[k])
            }
        }
    }

    /// Natural-scale right derivative.
    pub(crate) fn raw_derivative(&self, r: f64) -> f64 {
        match &self.kind {
            UtilityKind::LogOffset { offset } => 1.0 / (offset + r),
            UtilityKind::Log1p => 1.0 / (1.0 + r),
            UtilityKind::Affine => 1.0,
            UtilityKind::Table { values } => {
                let segments = values.len() - 1;
                let (k, _) = Self::table_segment(values, r);
                (values[k + 1] - values[k]) * segments as f64
            }
        }
    }

    fn check_domain(r: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(r));
        }
        Ok(())
    }

    /// `U(r)` on the natural scale.
    pub fn natural(&self, r: f64) -> Result<f64> {
        Self::check_domain(r)?;
        Ok(self.raw(r))
    }

    /// `U(r)` affinely mapped so that `U(0) = 0` and `U(1) = 1`.
    pub fn normalized(&self, r: f64) -> Result<f64> {
        Self::check_domain(r)?;
        Ok(self.normalized_unchecked(r))
    }

    #[inline]
    pub(crate) fn normalized_unchecked(&self, r: f64) -> f64 {
        match &self.kind {
            UtilityKind::Affine => r,
            UtilityKind::Log1p => r.ln_1p() / std::f64::consts::LN_2,
            _ => {
                let lo = self.raw(0.0);
                let hi = self.raw(1.0);
                ((self.raw(r) - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
        }
    }

    pub fn value(&self, r: f64, scale: Scale) -> Result<f64> {
        match scale {
            Scale::Natural => self.natural(r),
            Scale::Normalized => self.normalized(r),
        }
    }

    /// Derivative on the chosen scale.
    pub fn derivative(&self, r: f64, scale: Scale) -> Result<f64> {
        Self::check_domain(r)?;
        let d = self.raw_derivative(r);
        Ok(match scale {
            Scale::Natural => d,
            Scale::Normalized => d / (self.raw(1.0) - self.raw(0.0)),
        })
    }

    /// The bound `V` used to set `λ_max = V + 1`.
    pub fn derivative_bound(&self) -> f64 {
        self.derivative_bound.unwrap_or_else(|| self.raw_derivative(0.0))
    }

    pub fn lambda_max(&self) -> f64 {
        self.derivative_bound() + 1.0
    }

    pub fn is_concave(&self) -> bool {
        match &self.kind {
            UtilityKind::LogOffset { .. } | UtilityKind::Log1p | UtilityKind::Affine => true,
            UtilityKind::Table { values } => values
                .windows(3)
                .all(|w| (w[2] - w[1]) <= (w[1] - w[0]) + CONCAVITY_TOL),
        }
    }

    pub fn is_strictly_concave(&self) -> bool {
        match &self.kind {
            UtilityKind::LogOffset { .. } | UtilityKind::Log1p => true,
            UtilityKind::Affine | UtilityKind::Table { .. } => false,
        }
    }

    /// Closed-form inverse of `U'` on the natural scale, where one exists.
    pub(crate) fn inverse_derivative(&self, lambda: f64) -> Option<f64> {
        match &self.kind {
            UtilityKind::LogOffset { offset } => Some(1.0 / lambda - offset),
            UtilityKind::Log1p => Some(1.0 / lambda - 1.0),
            _ => None,
        }
    }
}

/// Range-normalized utility of payoff `r ∈ [0, 1]`.
pub fn normalized_utility(u: &UtilitySpec, r: f64) -> Result<f64> {
    u.normalized(r)
}
