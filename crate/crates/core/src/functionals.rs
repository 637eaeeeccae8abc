//! The φ-functions behind each Bayes-error bound, written in the plug-in form
//! `D_φ = E_{f2}[φ(t)]` with `t = f1/f2`, plus the affine post-transform that
//! turns `D_φ` into the bound quantity.
//!
//! | family               | φ(t)                                              | bound quantity |
//! |----------------------|---------------------------------------------------|----------------|
//! | Chernoff coefficient | `t^α`                                             | `D_φ`          |
//! | D̃ (rational)         | `4 q1 q2 t / (q1 t + q2)`                          | `1 − D_φ`      |
//! | D̃ (variational)      | `(q1 t − q2)² / (q1 t + q2)`                       | `D_φ`          |
//! | G_α                  | `(q1 t + q2) ln[(1 + e^{−α}) / (e^{−α a} + e^{−α b})]` | `D_φ / α`  |
//!
//! where `a = q1 t / (q1 t + q2)` and `b = q2 / (q1 t + q2)` are the two
//! posteriors at the point. The `(q1 t + q2)` factor in the G_α row turns an
//! expectation under the mixture `p = q1 f1 + q2 f2` into one under `f2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family and parameters of a φ-functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    ChernoffCoeff { alpha: f64 },
    DTildeRational { q1: f64 },
    DTildeVariational { q1: f64 },
    GAlpha { alpha: f64, q1: f64 },
}

/// How G_α's log-sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumericPolicy {
    /// Factor the dominant exponential out of the log-sum. Exact for every α.
    #[default]
    LogStable,
    /// Direct evaluation; underflows once `α · min(a, b)` passes about 745.
    Naive,
}

/// A φ-functional with its post-transform
/// `bound = post_offset + post_scale · D_φ` (then divided by α for G_α).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub family: Family,
    pub post_offset: f64,
    pub post_scale: f64,
    pub numeric_policy: NumericPolicy,
}

fn check_prior(q1: f64) -> Result<()> {
    if q1 > 0.0 && q1 < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("prior q1 = {q1} must lie in (0, 1)")))
    }
}

impl FunctionalSpec {
    fn with_family(family: Family, post_offset: f64, post_scale: f64) -> Self {
        Self {
            family,
            post_offset,
            post_scale,
            numeric_policy: NumericPolicy::LogStable,
        }
    }

    pub fn chernoff(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Chernoff α = {alpha} must lie in (0, 1)"
            )));
        }
        Ok(Self::with_family(Family::ChernoffCoeff { alpha }, 0.0, 1.0))
    }

    pub fn dtilde_rational(q1: f64) -> Result<Self> {
        check_prior(q1)?;
        Ok(Self::with_family(Family::DTildeRational { q1 }, 1.0, -1.0))
    }

    pub fn dtilde_variational(q1: f64) -> Result<Self> {
        check_prior(q1)?;
        Ok(Self::with_family(Family::DTildeVariational { q1 }, 0.0, 1.0))
    }

    pub fn galpha(alpha: f64, q1: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("G_α needs α > 0, got {alpha}")));
        }
        check_prior(q1)?;
        Ok(Self::with_family(Family::GAlpha { alpha, q1 }, 0.0, 1.0))
    }

    pub fn with_policy(mut self, policy: NumericPolicy) -> Self {
        self.numeric_policy = policy;
        self
    }

    /// Short identifier used in reports.
    pub fn name(&self) -> &'static str {
        match self.family {
            Family::ChernoffCoeff { .. } => "chernoff_coeff",
            Family::DTildeRational { .. } => "dtilde_rational",
            Family::DTildeVariational { .. } => "dtilde_variational",
            Family::GAlpha { .. } => "g_alpha",
        }
    }

    /// `φ(t)` without argument validation; `t` must be positive and finite.
    #[inline]
    pub fn phi(&self, t: f64) -> f64 {
        match self.family {
            Family::ChernoffCoeff { alpha } => t.powf(alpha),
            Family::DTildeRational { q1 } => {
                let q2 = 1.0 - q1;
                4.0 * q1 * q2 * t / (q1 * t + q2)
            }
            Family::DTildeVariational { q1 } => {
                let q2 = 1.0 - q1;
                let diff = q1 * t - q2;
                diff * diff / (q1 * t + q2)
            }
            Family::GAlpha { alpha, q1 } => {
                let q2 = 1.0 - q1;
                let mix = q1 * t + q2;
                let a = q1 * t / mix;
                let b = q2 / mix;
                let log_ratio = match self.numeric_policy {
                    NumericPolicy::LogStable => {
                        (-alpha).exp().ln_1p() + alpha * a.min(b) - (-alpha * (a - b).abs()).exp().ln_1p()
                    }
                    NumericPolicy::Naive => ((1.0 + (-alpha).exp()) / ((-alpha * a).exp() + (-alpha * b).exp())).ln(),
                };
                mix * log_ratio
            }
        }
    }
}

/// `φ(t)` for a positive finite likelihood ratio.
pub fn phi_eval(spec: &FunctionalSpec, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("likelihood ratio {t}")));
    }
    if t <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "likelihood ratio {t} must be positive"
        )));
    }
    Ok(spec.phi(t))
}

/// Maps an estimated `D_φ` to the bound quantity. No clamping.
pub fn bound_from_dphi(spec: &FunctionalSpec, dphi: f64) -> f64 {
    let affine = spec.post_offset + spec.post_scale * dphi;
    match spec.family {
        Family::GAlpha { alpha, .. } => affine / alpha,
        _ => affine,
    }
}
