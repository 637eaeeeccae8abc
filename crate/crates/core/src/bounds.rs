//! Bayes-error bounds from estimated functionals, and percentile bootstrap
//! intervals around them.
//!
//! * Chernoff: `P_e ≤ min_α q1^α q2^{1−α} c_α`.
//! * D̃ sandwich: `½ − ½√D̃ ≤ P_e ≤ ½ − ½D̃`, with D̃ clamped to `[0, 1]`
//!   before the square root.
//! * G_α: `P_e ≥ G_α`.
//!
//! Every reported probability is clamped to `[0, ½]` and flagged when the
//! clamp changed it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ensemble::{EnsembleConfig, EnsembleEstimator};
use crate::error::{Error, Result};
use crate::functionals::{bound_from_dphi, FunctionalSpec};
use crate::mst::{hp_dtilde_unclamped, minimum_spanning_tree, minimum_spanning_tree_points, MstNormalization};
use crate::neighbors::{DensityProfile, ProfileMode};
use crate::seeding::child_rng;

/// Default G_α sharpness.
pub const DEFAULT_GALPHA_ALPHA: f64 = 500.0;

/// The α grid `0.01, 0.02, …, 0.99`.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

fn clamp_probability(x: f64) -> (f64, bool) {
    let c = x.clamp(0.0, 0.5);
    (c, c != x)
}

/// Which D̃ functional the k-NN estimator plugs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DTildeForm {
    /// `1 − 4 q1 q2 ∫ f1 f2 / (q1 f1 + q2 f2)`.
    #[default]
    Rational,
    /// `∫ (q1 f1 − q2 f2)² / (q1 f1 + q2 f2)`; algebraically equal, kept to
    /// compare its plug-in behaviour.
    Variational,
}

impl DTildeForm {
    pub fn spec(self, q1: f64) -> Result<FunctionalSpec> {
        match self {
            DTildeForm::Rational => FunctionalSpec::dtilde_rational(q1),
            DTildeForm::Variational => FunctionalSpec::dtilde_variational(q1),
        }
    }
}

/// k-NN density profiles of one dataset, shared by every functional.
#[derive(Debug, Clone)]
pub struct KnnEstimates {
    pub estimator: EnsembleEstimator,
    pub profiles: Vec<DensityProfile>,
}

impl KnnEstimates {
    pub fn new(data: &Dataset, config: &EnsembleConfig, mode: ProfileMode) -> Result<Self> {
        let estimator = EnsembleEstimator::for_dataset(config, data, mode)?;
        let profiles = estimator.profiles(data)?;
        Ok(Self { estimator, profiles })
    }

    /// Ensemble estimate of `D_φ` (raw scale).
    pub fn dphi(&self, spec: &FunctionalSpec) -> f64 {
        self.estimator.estimate_from_profiles(spec, &self.profiles)
    }

    /// Ensemble estimate of the bound quantity, unclamped.
    pub fn quantity(&self, spec: &FunctionalSpec) -> f64 {
        bound_from_dphi(spec, self.dphi(spec))
    }

    /// Evaluation points flagged for a duplicate radius at any `k`.
    pub fn duplicate_count(&self) -> usize {
        let n = self.profiles.first().map_or(0, |p| p.pairs.len());
        (0..n)
            .filter(|&i| self.profiles.iter().any(|p| p.pairs[i].duplicate))
            .count()
    }

    pub fn chernoff(&self, q1: f64, alpha_grid: &[f64]) -> Result<ChernoffBound> {
        if alpha_grid.is_empty() {
            return Err(Error::InvalidParameter("the α grid is empty".into()));
        }
        let q2 = 1.0 - q1;
        let mut best: Option<(f64, f64, f64)> = None;
        for &alpha in alpha_grid {
            let coefficient = self.dphi(&FunctionalSpec::chernoff(alpha)?);
            let value = q1.powf(alpha) * q2.powf(1.0 - alpha) * coefficient;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("Chernoff bound at α = {alpha}")));
            }
            if best.is_none_or(|(v, _, _)| value < v) {
                best = Some((value, alpha, coefficient));
            }
        }
        let (raw, alpha_star, coefficient) = best.expect("grid is non-empty");
        let (bound, clamped) = clamp_probability(raw);
        Ok(ChernoffBound {
            bound,
            alpha_star,
            coefficient,
            unclamped: raw,
            clamped,
        })
    }

    pub fn galpha(&self, q1: f64, alpha: f64) -> Result<ClampedValue> {
        let raw = self.quantity(&FunctionalSpec::galpha(alpha, q1)?);
        finite(raw, "G_α")?;
        let (value, clamped) = clamp_probability(raw);
        Ok(ClampedValue {
            value,
            unclamped: raw,
            clamped,
        })
    }

    pub fn dtilde(&self, q1: f64, form: DTildeForm) -> Result<f64> {
        let raw = self.quantity(&form.spec(q1)?);
        finite(raw, "D̃")?;
        Ok(raw)
    }
}

fn finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} estimate {x}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffBound {
    pub bound: f64,
    pub alpha_star: f64,
    /// Estimated `c_α` at `α*`.
    pub coefficient: f64,
    pub unclamped: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampedValue {
    pub value: f64,
    pub unclamped: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DTildeBounds {
    pub lower: f64,
    pub upper: f64,
    /// The D̃ estimate was outside `[0, 1]`.
    pub clamped: bool,
}

/// Chernoff upper bound, minimised over `alpha_grid`.
pub fn chernoff_upper_bound(
    data: &Dataset,
    q1: f64,
    alpha_grid: &[f64],
    config: &EnsembleConfig,
    mode: ProfileMode,
) -> Result<ChernoffBound> {
    KnnEstimates::new(data, config, mode)?.chernoff(q1, alpha_grid)
}

/// D̃ sandwich bounds from a (possibly noisy) D̃ estimate.
pub fn dtilde_bounds(dtilde: f64) -> Result<DTildeBounds> {
    finite(dtilde, "D̃")?;
    let c = dtilde.clamp(0.0, 1.0);
    Ok(DTildeBounds {
        lower: 0.5 - 0.5 * c.sqrt(),
        upper: 0.5 - 0.5 * c,
        clamped: c != dtilde,
    })
}

/// G_α lower bound.
pub fn galpha_lower_bound(
    data: &Dataset,
    q1: f64,
    alpha: f64,
    config: &EnsembleConfig,
    mode: ProfileMode,
) -> Result<ClampedValue> {
    FunctionalSpec::galpha(alpha, q1)?;
    KnnEstimates::new(data, config, mode)?.galpha(q1, alpha)
}

/// k-NN ensemble estimate of D̃ (unclamped).
pub fn knn_dtilde(
    data: &Dataset,
    q1: f64,
    form: DTildeForm,
    config: &EnsembleConfig,
    mode: ProfileMode,
) -> Result<f64> {
    KnnEstimates::new(data, config, mode)?.dtilde(q1, form)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstDTilde {
    /// Clamped to `[0, 1]`.
    pub estimate: f64,
    pub unclamped: f64,
    pub cross_count: usize,
}

/// MST (Friedman–Rafsky) estimate of D̃.
pub fn mst_dtilde(data: &Dataset, norm: MstNormalization) -> Result<MstDTilde> {
    let mst = match data {
        Dataset::Points(p) => minimum_spanning_tree_points(p)?,
        Dataset::Distances(d) => minimum_spanning_tree(d)?,
    };
    let (m, n) = data.class_counts();
    let unclamped = hp_dtilde_unclamped(mst.cross_count, m, n, norm)?;
    Ok(MstDTilde {
        estimate: unclamped.clamp(0.0, 1.0),
        unclamped,
        cross_count: mst.cross_count,
    })
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 500,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidParameter(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence level {} must lie in (0, 1)",
                self.level
            )));
        }
        Ok(())
    }
}

/// Estimator outputs on class-stratified resamples, in replicate order.
/// Replicates whose estimator fails (or returns a non-finite value) are
/// dropped with a warning; more than 10% failures is an error.
pub fn bootstrap_replicates<F>(estimator: F, data: &Dataset, replicates: usize, seed: u64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    let outcomes: Vec<Result<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = child_rng(seed, b as u64);
            let resampled = data.resample(&mut rng);
            let values = estimator(&resampled)?;
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("replicate value {v}")));
            }
            Ok(values)
        })
        .collect();
    let mut kept = Vec::with_capacity(replicates);
    let mut failed = 0;
    for (b, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(v) => kept.push(v),
            Err(e) => {
                log::warn!("bootstrap replicate {b} dropped: {e}");
                failed += 1;
            }
        }
    }
    if failed * 10 > replicates {
        return Err(Error::BootstrapFailures {
            failed,
            total: replicates,
        });
    }
    Ok(kept)
}

/// Percentile interval by nearest rank: the `⌈p·B⌉`-th and `⌈(1−p)·B⌉`-th
/// order statistics of `B` values, `p = (1 − level)/2`.
pub fn percentile_interval(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level {level} must lie in (0, 1)"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let p = (1.0 - level) / 2.0;
    let rank = |q: f64| ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok((sorted[rank(p) - 1], sorted[rank(1.0 - p) - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub replicates_used: usize,
    pub replicates_failed: usize,
}

/// Percentile bootstrap interval of a scalar estimator.
pub fn bootstrap_ci<F>(
    estimator: F,
    data: &Dataset,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapInterval>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    BootstrapConfig {
        replicates,
        level,
        seed,
    }
    .validate()?;
    let kept = bootstrap_replicates(|d| estimator(d).map(|v| vec![v]), data, replicates, seed)?;
    let values: Vec<f64> = kept.iter().map(|v| v[0]).collect();
    let (lo, hi) = percentile_interval(&values, level)?;
    Ok(BootstrapInterval {
        lo,
        hi,
        level,
        replicates_used: values.len(),
        replicates_failed: replicates - values.len(),
    })
}

/// A bound family requested from [`estimate_all_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSelection {
    Chernoff,
    DtildeKnn,
    DtildeMst,
    Galpha,
}

impl BoundSelection {
    pub const ALL: [BoundSelection; 4] = [
        BoundSelection::Chernoff,
        BoundSelection::DtildeKnn,
        BoundSelection::DtildeMst,
        BoundSelection::Galpha,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsConfig {
    pub bounds: Vec<BoundSelection>,
    /// `None` picks [`EnsembleConfig::default_for_dim`].
    pub ensemble: Option<EnsembleConfig>,
    pub profile_mode: ProfileMode,
    pub alpha_grid: Vec<f64>,
    pub galpha_alpha: f64,
    pub dtilde_form: DTildeForm,
    pub mst_normalization: MstNormalization,
    /// `None` skips bootstrap intervals.
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            bounds: BoundSelection::ALL.to_vec(),
            ensemble: None,
            profile_mode: ProfileMode::Loo,
            alpha_grid: default_alpha_grid(),
            galpha_alpha: DEFAULT_GALPHA_ALPHA,
            dtilde_form: DTildeForm::Rational,
            mst_normalization: MstNormalization::PriorWeighted,
            bootstrap: None,
        }
    }
}

impl BoundsConfig {
    pub fn ensemble_for(&self, d: usize) -> EnsembleConfig {
        self.ensemble
            .clone()
            .unwrap_or_else(|| EnsembleConfig::default_for_dim(d))
    }

    fn wants(&self, b: BoundSelection) -> bool {
        self.bounds.contains(&b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    KnnEnsemble,
    Mst,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::KnnEnsemble => "knn-ensemble",
            Estimator::Mst => "mst",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntryDiagnostics {
    /// The bound before clamping to `[0, ½]`.
    pub unclamped: f64,
    /// Underlying functional: D̃ for sandwich bounds, `ĉ_{α*}` for
    /// Chernoff, the raw `D_φ / α` for G_α.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functional: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duplicate_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_count: Option<usize>,
    /// Percentile endpoints before widening to contain the estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile_ci: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_replicates_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_replicates_failed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub bound_name: String,
    pub estimator: Estimator,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_star: Option<f64>,
    pub clamped: bool,
    pub diagnostics: EntryDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundError {
    pub bound: BoundSelection,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub q1: f64,
    pub class_counts: (usize, usize),
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleEstimator>,
    pub entries: Vec<BoundEntry>,
    pub errors: Vec<BoundError>,
}

impl BoundsReport {
    pub fn entry(&self, bound_name: &str, estimator: Estimator) -> Option<&BoundEntry> {
        self.entries
            .iter()
            .find(|e| e.bound_name == bound_name && e.estimator == estimator)
    }
}

fn entry(bound_name: &str, estimator: Estimator, estimate: f64, clamped: bool, unclamped: f64) -> BoundEntry {
    BoundEntry {
        bound_name: bound_name.to_string(),
        estimator,
        estimate,
        ci: None,
        level: None,
        alpha_star: None,
        clamped,
        diagnostics: EntryDiagnostics {
            unclamped,
            ..EntryDiagnostics::default()
        },
    }
}

fn dtilde_entries(dtilde: f64, estimator: Estimator) -> Result<[BoundEntry; 2]> {
    let b = dtilde_bounds(dtilde)?;
    let mut lower = entry(
        "dtilde_lower",
        estimator,
        b.lower,
        b.clamped,
        0.5 - 0.5 * dtilde.max(0.0).sqrt(),
    );
    let mut upper = entry("dtilde_upper", estimator, b.upper, b.clamped, 0.5 - 0.5 * dtilde);
    lower.diagnostics.functional = Some(dtilde);
    upper.diagnostics.functional = Some(dtilde);
    Ok([lower, upper])
}

/// Point estimates of every requested bound, without intervals.
fn point_entries(
    data: &Dataset,
    config: &BoundsConfig,
) -> (Vec<BoundEntry>, Vec<BoundError>, Option<EnsembleEstimator>) {
    let q1 = data.q1();
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    let record = |bound: BoundSelection, e: Error, errors: &mut Vec<BoundError>| {
        errors.push(BoundError {
            bound,
            message: e.to_string(),
        })
    };

    let knn_wanted: Vec<BoundSelection> = [
        BoundSelection::Chernoff,
        BoundSelection::DtildeKnn,
        BoundSelection::Galpha,
    ]
    .into_iter()
    .filter(|b| config.wants(*b))
    .collect();
    let mut ensemble = None;
    if !knn_wanted.is_empty() {
        let knn = data
            .dim()
            .ok_or_else(|| Error::Unsupported("an intrinsic dimension for k-NN bounds".into()))
            .and_then(|d| KnnEstimates::new(data, &config.ensemble_for(d), config.profile_mode));
        match knn {
            Err(e) => {
                let message = e.to_string();
                for b in knn_wanted {
                    errors.push(BoundError {
                        bound: b,
                        message: message.clone(),
                    });
                }
            }
            Ok(knn) => {
                let dups = knn.duplicate_count();
                ensemble = Some(knn.estimator.clone());
                if config.wants(BoundSelection::Chernoff) {
                    match knn.chernoff(q1, &config.alpha_grid) {
                        Ok(c) => {
                            let mut e = entry(
                                "chernoff_upper",
                                Estimator::KnnEnsemble,
                                c.bound,
                                c.clamped,
                                c.unclamped,
                            );
                            e.alpha_star = Some(c.alpha_star);
                            e.diagnostics.functional = Some(c.coefficient);
                            e.diagnostics.duplicate_points = Some(dups);
                            entries.push(e);
                        }
                        Err(e) => record(BoundSelection::Chernoff, e, &mut errors),
                    }
                }
                if config.wants(BoundSelection::DtildeKnn) {
                    match knn
                        .dtilde(q1, config.dtilde_form)
                        .and_then(|d| dtilde_entries(d, Estimator::KnnEnsemble))
                    {
                        Ok(pair) => {
                            for mut e in pair {
                                e.diagnostics.duplicate_points = Some(dups);
                                entries.push(e);
                            }
                        }
                        Err(e) => record(BoundSelection::DtildeKnn, e, &mut errors),
                    }
                }
                if config.wants(BoundSelection::Galpha) {
                    match knn.galpha(q1, config.galpha_alpha) {
                        Ok(g) => {
                            let mut e = entry("galpha_lower", Estimator::KnnEnsemble, g.value, g.clamped, g.unclamped);
                            e.diagnostics.functional = Some(g.unclamped);
                            e.diagnostics.duplicate_points = Some(dups);
                            entries.push(e);
                        }
                        Err(e) => record(BoundSelection::Galpha, e, &mut errors),
                    }
                }
            }
        }
    }
    if config.wants(BoundSelection::DtildeMst) {
        match mst_dtilde(data, config.mst_normalization).and_then(|m| {
            let pair = dtilde_entries(m.unclamped, Estimator::Mst)?;
            Ok((pair, m.cross_count))
        }) {
            Ok((pair, r)) => {
                for mut e in pair {
                    e.diagnostics.cross_count = Some(r);
                    entries.push(e);
                }
            }
            Err(e) => record(BoundSelection::DtildeMst, e, &mut errors),
        }
    }
    (entries, errors, ensemble)
}

/// Every requested bound with its provenance, plus bootstrap intervals when
/// configured. Bounds that cannot be computed are listed in `errors`.
pub fn estimate_all_bounds(data: &Dataset, config: &BoundsConfig) -> Result<BoundsReport> {
    if config.bounds.is_empty() {
        return Err(Error::NoBoundsRequested);
    }
    let (mut entries, errors, ensemble) = point_entries(data, config);

    if let Some(boot) = config.bootstrap {
        boot.validate()?;
        if !entries.is_empty() {
            let keys: Vec<(String, Estimator)> = entries.iter().map(|e| (e.bound_name.clone(), e.estimator)).collect();
            let replicate = |resampled: &Dataset| -> Result<Vec<f64>> {
                let (rep, _, _) = point_entries(resampled, config);
                keys.iter()
                    .map(|(name, est)| {
                        rep.iter()
                            .find(|e| &e.bound_name == name && e.estimator == *est)
                            .map(|e| e.estimate)
                            .ok_or_else(|| Error::NonFinite(format!("{name} missing from replicate")))
                    })
                    .collect()
            };
            let kept = bootstrap_replicates(replicate, data, boot.replicates, boot.seed)?;
            let failed = boot.replicates - kept.len();
            for (col, e) in entries.iter_mut().enumerate() {
                let values: Vec<f64> = kept.iter().map(|row| row[col]).collect();
                let (lo, hi) = percentile_interval(&values, boot.level)?;
                e.diagnostics.percentile_ci = Some([lo, hi]);
                e.diagnostics.bootstrap_replicates_used = Some(values.len());
                e.diagnostics.bootstrap_replicates_failed = Some(failed);
                e.ci = Some([lo.min(e.estimate), hi.max(e.estimate)]);
                e.level = Some(boot.level);
            }
        }
    }

    Ok(BoundsReport {
        q1: data.q1(),
        class_counts: data.class_counts(),
        dim: data.dim(),
        ensemble,
        entries,
        errors,
    })
}
