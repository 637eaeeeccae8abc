//! Weighted ensembles of k-NN plug-in estimators.
//!
//! A base estimator `D̂_k = mean φ(f̂1/f̂2)` has bias terms growing like
//! `(k/M)^{j/d}`, `j = 1, …, d−1`. Picking `k(ℓ) = round(ℓ√M)` for an
//! ensemble `ℓ1 … ℓL` and weights `w` with `Σ w = 1` makes the combined bias
//! `Σ_j c_j M^{−j/(2d)} Σ_ℓ w(ℓ) ℓ^{j/d}`, so weights that shrink the inner
//! sums cancel the slow terms.
//!
//! Two weightings are available:
//!
//! * **Exact null**: the minimum-norm `w` with every inner sum exactly zero.
//!   Closed form, but `‖w‖₂` (and with it the variance) explodes as `d`
//!   grows.
//! * **Relaxed** (default): the minimum-norm `w` whose *scaled* inner sums
//!   `|Σ w ℓ^{j/d}| · M^{(d−j)/(2d)}` are all at most `ε`, with `ε` as small
//!   as the norm budget `‖w‖₂ ≤ η` allows. The scaling weighs each residual
//!   by the size of the bias term it multiplies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::neighbors::{effective_sample_size, k_for_ell, DensityProfile, NeighborTable, ProfileMode};

/// Largest accepted condition number of `AAᵀ` for exact nulling.
pub const MAX_CONDITION: f64 = 1e12;

/// Default norm budget of relaxed weights.
pub const DEFAULT_MAX_NORM: f64 = 3.0;

const MAX_ACTIVE_SET_STEPS: usize = 500;
const BISECTION_STEPS: usize = 200;

/// How ensemble weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum WeightMode {
    ExactNull,
    Relaxed { max_norm: f64 },
}

impl Default for WeightMode {
    fn default() -> Self {
        WeightMode::Relaxed {
            max_norm: DEFAULT_MAX_NORM,
        }
    }
}

/// Rule mapping `ℓ` to a neighbour count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KPolicy {
    /// `k = ⌊ℓ√M + ½⌋` clamped to `[1, M−1]`; two `ℓ` landing on the same
    /// `k` is an error.
    #[default]
    RoundHalfUpClamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub ell: Vec<f64>,
    pub mode: WeightMode,
    #[serde(default)]
    pub k_policy: KPolicy,
}

impl EnsembleConfig {
    /// `max(10, d)` values evenly spaced on `[0.3, 3]`, relaxed weights.
    pub fn default_for_dim(d: usize) -> Self {
        Self {
            ell: linspace(0.3, 3.0, d.max(10)),
            mode: WeightMode::default(),
            k_policy: KPolicy::default(),
        }
    }

    /// A single base estimator with `k = round(ℓ√M)`.
    pub fn single(ell: f64) -> Self {
        Self {
            ell: vec![ell],
            mode: WeightMode::ExactNull,
            k_policy: KPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_ell(&self.ell)?;
        if let WeightMode::Relaxed { max_norm } = self.mode {
            if !(max_norm > 0.0 && max_norm.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "norm budget {max_norm} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn validate_ell(ell: &[f64]) -> Result<()> {
    if ell.is_empty() {
        return Err(Error::InvalidParameter("the ℓ grid is empty".into()));
    }
    for (i, &l) in ell.iter().enumerate() {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter(format!("ℓ = {l} must be positive and finite")));
        }
        if ell[..i].contains(&l) {
            return Err(Error::InvalidParameter(format!("ℓ = {l} appears twice")));
        }
    }
    Ok(())
}

/// Ensemble weights with their diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    /// `|Σ w − 1|` followed by `|Σ w ℓ^{j/d}|` for `j = 1, …, d−1`.
    pub constraint_residuals: Vec<f64>,
    pub norm: f64,
    /// Largest scaled residual the relaxed solver settled on (0 for exact
    /// nulling).
    pub tolerance: f64,
    pub mode: WeightMode,
}

impl WeightVector {
    fn new(w: Vec<f64>, ell: &[f64], d: usize, tolerance: f64, mode: WeightMode) -> Self {
        let a = basis(ell, d, None);
        let wv = DVector::from_column_slice(&w);
        let mut constraint_residuals: Vec<f64> = (&a * &wv).iter().map(|r| r.abs()).collect();
        constraint_residuals[0] = (wv.sum() - 1.0).abs();
        let norm = wv.norm();
        Self {
            w,
            constraint_residuals,
            norm,
            tolerance,
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `d × L` matrix with row `j` holding `ℓ^{j/d}`, optionally divided by
/// `M^{(j−d)/(2d)}`.
fn basis(ell: &[f64], d: usize, sample_size: Option<usize>) -> DMatrix<f64> {
    DMatrix::from_fn(d, ell.len(), |j, i| {
        if j == 0 {
            return 1.0;
        }
        let p = j as f64 / d as f64;
        let raw = ell[i].powf(p);
        match sample_size {
            Some(m) => raw * (m as f64).powf((d - j) as f64 / (2.0 * d as f64)),
            None => raw,
        }
    })
}

/// Minimum-norm solution of `C w = b` for a full-row-rank `C`, together with
/// `ν` such that `w = Cᵀν`.
fn min_norm(c: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let svd = c.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    if smin.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !(smax / smin).is_finite() {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
        });
    }
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let ub = u.transpose() * b;
    let scaled = DVector::from_fn(s.len(), |i, _| ub[i] / s[i]);
    let w = vt.transpose() * &scaled;
    let nu = u * DVector::from_fn(s.len(), |i, _| scaled[i] / s[i]);
    let condition = (smax / smin).powi(2);
    Ok((w, nu, condition))
}

fn check_rank(l: usize, d: usize) -> Result<()> {
    if l < d {
        return Err(Error::RankCondition {
            ensemble_size: l,
            dim: d,
        });
    }
    Ok(())
}

fn exact_null(ell: &[f64], d: usize) -> Result<Vec<f64>> {
    check_rank(ell.len(), d)?;
    let a = basis(ell, d, None);
    let mut e1 = DVector::zeros(d);
    e1[0] = 1.0;
    let (w, _, condition) = min_norm(&a, &e1)?;
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    // One step of iterative refinement.
    let residual = &e1 - &a * &w;
    let (correction, _, _) = min_norm(&a, &residual)?;
    Ok((w + correction).iter().copied().collect())
}

/// Solves for ensemble weights over `ell` in dimension `d`.
///
/// `sample_size` is the per-class reference count `M` that scales the
/// relaxed residuals; exact nulling ignores it.
pub fn solve_weights(ell: &[f64], d: usize, mode: WeightMode, sample_size: usize) -> Result<WeightVector> {
    validate_ell(ell)?;
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    match mode {
        WeightMode::ExactNull => Ok(WeightVector::new(exact_null(ell, d)?, ell, d, 0.0, mode)),
        WeightMode::Relaxed { max_norm } => {
            let (w, tolerance) = relaxed(ell, d, max_norm, sample_size)?;
            Ok(WeightVector::new(w, ell, d, tolerance, mode))
        }
    }
}

fn relaxed(ell: &[f64], d: usize, max_norm: f64, sample_size: usize) -> Result<(Vec<f64>, f64)> {
    let l = ell.len();
    check_rank(l, d)?;
    if !(max_norm > 0.0 && max_norm.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "norm budget {max_norm} must be positive"
        )));
    }
    let floor = 1.0 / (l as f64).sqrt();
    if max_norm < floor {
        return Err(Error::InvalidParameter(format!(
            "norm budget {max_norm} is below the smallest achievable norm 1/√L = {floor}"
        )));
    }
    let uniform = vec![1.0 / l as f64; l];
    if d == 1 {
        return Ok((uniform, 0.0));
    }
    if sample_size < 2 {
        return Err(Error::InvalidParameter(
            "relaxed weights need a sample size of at least 2".into(),
        ));
    }
    if let Ok(w) = exact_null(ell, d) {
        if w.iter().map(|x| x * x).sum::<f64>().sqrt() <= max_norm {
            return Ok((w, 0.0));
        }
    }
    let bt = basis(ell, d, Some(sample_size));
    let u = DVector::from_column_slice(&uniform);
    let residuals = &bt * &u;
    let mut hi = residuals.iter().skip(1).fold(0.0_f64, |m, r| m.max(r.abs()));
    let mut best = uniform;
    let mut lo = 0.0;
    for _ in 0..BISECTION_STEPS {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let w = bounded_residual_min_norm(&bt, mid)?;
        if w.norm() <= max_norm {
            hi = mid;
            best = w.iter().copied().collect();
        } else {
            lo = mid;
        }
    }
    // Minimum-norm shift restoring Σ w = 1 after rounding.
    let shift = (1.0 - best.iter().sum::<f64>()) / l as f64;
    for x in &mut best {
        *x += shift;
    }
    Ok((best, hi))
}

/// Minimum-norm `w` subject to `Σ w = 1` and `|row_j · w| ≤ ε` for the rows
/// `j ≥ 1` of `bt`.
///
/// Solved through its dual `min_z ½‖Bz‖² + z₀ + ε Σ_{j≥1} |z_j|` with
/// `B = btᵀ` and `w = −Bz`, by feature-sign search: grow a signed active
/// set, solve the sign-fixed subproblem exactly, and line-search back to the
/// first sign change when the signs disagree.
pub fn bounded_residual_min_norm(bt: &DMatrix<f64>, eps: f64) -> Result<DVector<f64>> {
    let d = bt.nrows();
    let b = bt.transpose();
    let objective = |z: &DVector<f64>| -> f64 {
        let bz = &b * z;
        0.5 * bz.norm_squared() + z[0] + eps * z.iter().skip(1).map(|v| v.abs()).sum::<f64>()
    };
    let slack = |eps: f64| eps * (1.0 + 1e-10) + 1e-14;

    let mut theta = vec![0.0; d];
    let mut z = DVector::zeros(d);
    let (w0, nu0, _) = min_norm(&bt.rows(0, 1).into_owned(), &DVector::from_element(1, 1.0))?;
    z[0] = -nu0[0];
    let mut w = w0;

    for _ in 0..MAX_ACTIVE_SET_STEPS {
        let r = bt * &w;
        let entering = (1..d)
            .filter(|&j| theta[j] == 0.0)
            .map(|j| (j, r[j].abs() - slack(eps)))
            .filter(|&(_, v)| v > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, _)) = entering else {
            return Ok(w);
        };
        theta[j] = r[j].signum();

        let mut settled = false;
        for _ in 0..MAX_ACTIVE_SET_STEPS {
            let active: Vec<usize> = (0..d).filter(|&i| i == 0 || theta[i] != 0.0).collect();
            let rows = DMatrix::from_fn(active.len(), bt.ncols(), |a, c| bt[(active[a], c)]);
            let rhs = DVector::from_fn(active.len(), |a, _| if a == 0 { 1.0 } else { eps * theta[active[a]] });
            let (_, nu, _) = min_norm(&rows, &rhs)?;
            let mut target = DVector::zeros(d);
            for (a, &i) in active.iter().enumerate() {
                target[i] = -nu[a];
            }
            let consistent = active.iter().skip(1).all(|&i| target[i] * theta[i] > 0.0);
            if consistent {
                z = target;
                settled = true;
                break;
            }
            // Walk from z toward the target, stopping at the best point
            // among the target and every zero crossing on the way.
            let step = &target - &z;
            let mut best_tau = 1.0;
            let mut best_val = objective(&target);
            let mut best_zeroed = None;
            for &i in active.iter().skip(1) {
                if z[i] != 0.0 && z[i] * target[i] <= 0.0 {
                    let tau = z[i] / (z[i] - target[i]);
                    let mut candidate = &z + &step * tau;
                    candidate[i] = 0.0;
                    let val = objective(&candidate);
                    if val < best_val {
                        best_val = val;
                        best_tau = tau;
                        best_zeroed = Some(i);
                    }
                }
            }
            z = &z + &step * best_tau;
            if let Some(i) = best_zeroed {
                z[i] = 0.0;
            }
            for &i in active.iter().skip(1) {
                theta[i] = if z[i] == 0.0 { 0.0 } else { z[i].signum() };
            }
            if best_zeroed.is_none() {
                // The target itself was best but carries a flipped or zero
                // sign; adopt its signs and continue.
                for &i in active.iter().skip(1) {
                    theta[i] = if target[i] == 0.0 { 0.0 } else { target[i].signum() };
                }
            }
        }
        if !settled {
            return Err(Error::NoConvergence("feature-sign inner loop".into()));
        }
        w = -(&b * &z);
    }
    Err(Error::NoConvergence("feature-sign outer loop".into()))
}

/// Neighbour counts `k(ℓ)` for sample size `m`, in `ell` order.
pub fn resolve_ks(ell: &[f64], m: usize) -> Result<Vec<usize>> {
    let ks: Vec<usize> = ell.iter().map(|&l| k_for_ell(l, m)).collect();
    for i in 0..ks.len() {
        for j in 0..i {
            if ks[i] == ks[j] {
                return Err(Error::CollapsedK {
                    first: ell[j],
                    second: ell[i],
                    k: ks[i],
                });
            }
        }
    }
    Ok(ks)
}

/// Mean of `φ(t)` over a profile, summed in evaluation order.
pub fn mean_phi(spec: &FunctionalSpec, profile: &DensityProfile) -> f64 {
    let n = profile.pairs.len();
    profile.ratios().map(|t| spec.phi(t)).sum::<f64>() / n as f64
}

/// Single plug-in estimate `D̂_φ,k` on the raw `D_φ` scale.
pub fn base_estimate(data: &Dataset, spec: &FunctionalSpec, k: usize, mode: ProfileMode) -> Result<f64> {
    let profile = crate::neighbors::density_profiles(data, k, mode)?;
    Ok(mean_phi(spec, &profile))
}

/// A resolved ensemble: neighbour counts and weights for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimator {
    pub ell: Vec<f64>,
    pub ks: Vec<usize>,
    pub weights: WeightVector,
    pub d: usize,
    pub sample_size: usize,
    pub mode: ProfileMode,
}

impl EnsembleEstimator {
    pub fn new(config: &EnsembleConfig, d: usize, sample_size: usize, mode: ProfileMode) -> Result<Self> {
        config.validate()?;
        let ks = resolve_ks(&config.ell, sample_size)?;
        let weights = solve_weights(&config.ell, d, config.mode, sample_size)?;
        Ok(Self {
            ell: config.ell.clone(),
            ks,
            weights,
            d,
            sample_size,
            mode,
        })
    }

    /// Resolves `config` against the dimension and class sizes of `data`.
    pub fn for_dataset(config: &EnsembleConfig, data: &Dataset, mode: ProfileMode) -> Result<Self> {
        let d = data
            .dim()
            .ok_or_else(|| Error::Unsupported("an intrinsic dimension for k-NN density estimation".into()))?;
        Self::new(config, d, effective_sample_size(data, mode), mode)
    }

    /// Density profiles for every `k(ℓ)`, in `ell` order, from one
    /// neighbour pass.
    pub fn profiles(&self, data: &Dataset) -> Result<Vec<DensityProfile>> {
        let table = NeighborTable::build(data, &self.ks, self.mode)?;
        self.ks.iter().map(|&k| table.profile(k)).collect()
    }

    /// Base estimates `D̂_φ,k(ℓ)` in `ell` order.
    pub fn base_estimates(&self, spec: &FunctionalSpec, profiles: &[DensityProfile]) -> Vec<f64> {
        profiles.iter().map(|p| mean_phi(spec, p)).collect()
    }

    /// `Σ w(ℓ) D̂_φ,k(ℓ)`, accumulated in `ell` order.
    pub fn combine(&self, base: &[f64]) -> f64 {
        self.weights.w.iter().zip(base).fold(0.0, |acc, (w, b)| acc + w * b)
    }

    pub fn estimate_from_profiles(&self, spec: &FunctionalSpec, profiles: &[DensityProfile]) -> f64 {
        self.combine(&self.base_estimates(spec, profiles))
    }

    pub fn estimate(&self, data: &Dataset, spec: &FunctionalSpec) -> Result<f64> {
        Ok(self.estimate_from_profiles(spec, &self.profiles(data)?))
    }
}

/// Weighted ensemble estimate of `D_φ` on the raw scale.
pub fn ensemble_estimate(
    data: &Dataset,
    spec: &FunctionalSpec,
    config: &EnsembleConfig,
    mode: ProfileMode,
) -> Result<f64> {
    EnsembleEstimator::for_dataset(config, data, mode)?.estimate(data, spec)
}
