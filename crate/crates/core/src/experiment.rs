//! Experiment drivers: Gaussian sweeps over the separation `Δ` with
//! over-trial summaries, and blended-distance sweeps with bootstrap
//! intervals. Outputs are plain CSV plus a JSON manifest naming the axes and
//! series.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{estimate_all_bounds, BoundSelection, BoundsConfig, BoundsReport, Estimator};
use crate::dataset::{
    pairwise_distances, sample_gaussian_pair, true_gaussian_ber, Dataset, DistanceData, GaussianSpec,
};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// `(bound_name, estimator)` pairs produced by a bound selection, in report
/// order.
pub fn expected_entries(bounds: &[BoundSelection]) -> Vec<(&'static str, Estimator)> {
    let mut out = Vec::new();
    let has = |b| bounds.contains(&b);
    if has(BoundSelection::Chernoff) {
        out.push(("chernoff_upper", Estimator::KnnEnsemble));
    }
    if has(BoundSelection::DtildeKnn) {
        out.push(("dtilde_lower", Estimator::KnnEnsemble));
        out.push(("dtilde_upper", Estimator::KnnEnsemble));
    }
    if has(BoundSelection::Galpha) {
        out.push(("galpha_lower", Estimator::KnnEnsemble));
    }
    if has(BoundSelection::DtildeMst) {
        out.push(("dtilde_lower", Estimator::Mst));
        out.push(("dtilde_upper", Estimator::Mst));
    }
    out
}

/// A Gaussian sweep: unit-variance isotropic pairs whose means differ by `Δ`
/// along the first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub d: usize,
    pub deltas: Vec<f64>,
    /// Points per class; every size is run at every `Δ`.
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub q1: f64,
    pub bounds: BoundsConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            d: 5,
            deltas: (1..=8).map(|i| 0.5 * i as f64).collect(),
            sample_sizes: vec![50, 150, 5000],
            trials: 200,
            seed: 0,
            q1: 0.5,
            bounds: BoundsConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.deltas.is_empty() {
            return Err(Error::InvalidParameter("the Δ grid is empty".into()));
        }
        if let Some(bad) = self.deltas.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "Δ = {bad} must be finite and non-negative"
            )));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "sample sizes must be non-empty and positive".into(),
            ));
        }
        if self.bounds.bounds.is_empty() {
            return Err(Error::NoBoundsRequested);
        }
        self.spec(0.0, 1, 0).validate()
    }

    /// Gaussian pair of trial `trial`. The seed depends only on the master
    /// seed and the trial index, so every `(T, Δ)` cell of a trial reuses the
    /// same underlying normal draws.
    pub fn spec(&self, delta: f64, samples_per_class: usize, trial: usize) -> GaussianSpec {
        GaussianSpec {
            q1: self.q1,
            ..GaussianSpec::shifted(self.d, delta, samples_per_class, derive_seed(self.seed, trial as u64))
        }
    }
}

/// Outcome of one `(T, Δ, trial)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub samples_per_class: usize,
    pub delta: f64,
    pub trial: usize,
    pub seed: u64,
    pub truth: f64,
    pub report: Option<BoundsReport>,
    /// Whole-trial error, or the first per-bound error.
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn estimate(&self, bound_name: &str, estimator: Estimator) -> Option<f64> {
        self.report.as_ref()?.entry(bound_name, estimator).map(|e| e.estimate)
    }

    /// The functional behind an entry (D̃, `ĉ_α*`, or raw G_α).
    pub fn functional(&self, bound_name: &str, estimator: Estimator) -> Option<f64> {
        self.report
            .as_ref()?
            .entry(bound_name, estimator)?
            .diagnostics
            .functional
    }
}

/// Over-trial summary of one bound at one `(T, Δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub samples_per_class: usize,
    pub delta: f64,
    pub bound_name: String,
    pub estimator: Estimator,
    pub mean: f64,
    /// Sample standard deviation over trials (`n − 1` denominator).
    pub sd: f64,
    pub truth: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub trials: Vec<TrialRecord>,
    pub rows: Vec<SummaryRow>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn run_trial(config: &SweepConfig, t: usize, delta: f64, trial: usize) -> TrialRecord {
    let spec = config.spec(delta, t, trial);
    let truth = true_gaussian_ber(&spec).unwrap_or(f64::NAN);
    let outcome =
        sample_gaussian_pair(&spec).and_then(|data| estimate_all_bounds(&Dataset::from(data), &config.bounds));
    let (report, error) = match outcome {
        Ok(report) => {
            let error = report.errors.first().map(|e| format!("{:?}: {}", e.bound, e.message));
            (Some(report), error)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    TrialRecord {
        samples_per_class: t,
        delta,
        trial,
        seed: spec.seed,
        truth,
        report,
        error,
    }
}

/// Runs every `(T, Δ, trial)` cell (in parallel) and summarises each bound
/// per `(T, Δ)`. Failed trials are recorded, never fatal.
pub fn run_gaussian_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut cells = Vec::new();
    for &t in &config.sample_sizes {
        for &delta in &config.deltas {
            for trial in 0..config.trials {
                cells.push((t, delta, trial));
            }
        }
    }
    let trials: Vec<TrialRecord> = cells
        .into_par_iter()
        .map(|(t, delta, trial)| run_trial(config, t, delta, trial))
        .collect();
    for r in trials.iter().filter(|r| r.failed()) {
        log::warn!(
            "trial {} (T = {}, Δ = {}) failed: {}",
            r.trial,
            r.samples_per_class,
            r.delta,
            r.error.as_deref().unwrap_or("")
        );
    }

    let keys = expected_entries(&config.bounds.bounds);
    let mut rows = Vec::new();
    for chunk in trials.chunks(config.trials) {
        let (t, delta, truth) = (chunk[0].samples_per_class, chunk[0].delta, chunk[0].truth);
        for &(name, est) in &keys {
            let values: Vec<f64> = chunk.iter().filter_map(|r| r.estimate(name, est)).collect();
            let (mean, sd) = mean_sd(&values);
            let n_failed = chunk.len() - values.len();
            let status = match (values.len(), n_failed) {
                (_, 0) => "ok".to_string(),
                (0, _) => "error: all trials failed".to_string(),
                (_, f) => format!("partial: {f} trials failed"),
            };
            rows.push(SummaryRow {
                samples_per_class: t,
                delta,
                bound_name: name.to_string(),
                estimator: est,
                mean,
                sd,
                truth,
                n_ok: values.len(),
                n_failed,
                status,
            });
        }
    }
    Ok(SweepResult {
        config: config.clone(),
        trials,
        rows,
    })
}

impl SweepResult {
    pub fn failed_trials(&self) -> usize {
        self.trials.iter().filter(|r| r.failed()).count()
    }

    pub fn failure_fraction(&self) -> f64 {
        self.failed_trials() as f64 / self.trials.len().max(1) as f64
    }

    /// Trials of one `(T, Δ)` cell, in trial order.
    pub fn cell(&self, samples_per_class: usize, delta: f64) -> impl Iterator<Item = &TrialRecord> {
        self.trials
            .iter()
            .filter(move |r| r.samples_per_class == samples_per_class && r.delta == delta)
    }

    pub fn row(
        &self,
        samples_per_class: usize,
        delta: f64,
        bound_name: &str,
        estimator: Estimator,
    ) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| {
            r.samples_per_class == samples_per_class
                && r.delta == delta
                && r.bound_name == bound_name
                && r.estimator == estimator
        })
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "delta",
            "bound_name",
            "estimator",
            "mean",
            "sd",
            "truth",
            "n_ok",
            "n_failed",
            "status",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.samples_per_class.to_string(),
                r.delta.to_string(),
                r.bound_name.clone(),
                r.estimator.as_str().to_string(),
                r.mean.to_string(),
                r.sd.to_string(),
                r.truth.to_string(),
                r.n_ok.to_string(),
                r.n_failed.to_string(),
                r.status.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<summary csv>", e))
    }

    pub fn write_trials_csv<W: Write>(&self, out: W) -> Result<()> {
        let keys = expected_entries(&self.config.bounds.bounds);
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "delta",
            "trial",
            "seed",
            "bound_name",
            "estimator",
            "estimate",
            "functional",
            "truth",
            "error",
        ])?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.trials {
            for &(name, est) in &keys {
                w.write_record([
                    r.samples_per_class.to_string(),
                    r.delta.to_string(),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    name.to_string(),
                    est.as_str().to_string(),
                    fmt(r.estimate(name, est)),
                    fmt(r.functional(name, est)),
                    r.truth.to_string(),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<trials csv>", e))
    }

    /// Writes `summary.csv`, `trials.csv` and `manifest.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let summary = dir.join("summary.csv");
        let trials = dir.join("trials.csv");
        let manifest = dir.join("manifest.json");
        self.write_summary_csv(create(&summary)?)?;
        self.write_trials_csv(create(&trials)?)?;
        let series: Vec<serde_json::Value> = expected_entries(&self.config.bounds.bounds)
            .into_iter()
            .map(|(n, e)| serde_json::json!({ "bound_name": n, "estimator": e.as_str() }))
            .collect();
        let doc = serde_json::json!({
            "kind": "gaussian-sweep",
            "files": { "summary": "summary.csv", "trials": "trials.csv" },
            "x": "delta",
            "y": "mean",
            "error_bar": "sd",
            "group_by": ["t"],
            "reference": "truth",
            "series": series,
            "failed_trials": self.failed_trials(),
            "config": self.config,
        });
        write_json(&manifest, &doc)?;
        Ok(vec![summary, trials, manifest])
    }
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Entrywise `r · dn + (1 − r) · ds`.
pub fn blend_distances(dn: &DistanceData, ds: &DistanceData, r: f64) -> Result<DistanceData> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!(
            "blend weight r = {r} must lie in [0, 1]"
        )));
    }
    if dn.len() != ds.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} points", dn.len(), ds.len())));
    }
    if dn.labels() != ds.labels() {
        return Err(Error::ShapeMismatch("the two matrices carry different labels".into()));
    }
    if dn.intrinsic_dim() != ds.intrinsic_dim() {
        return Err(Error::ShapeMismatch(format!(
            "intrinsic dimensions differ: {:?} vs {:?}",
            dn.intrinsic_dim(),
            ds.intrinsic_dim()
        )));
    }
    let blended = dn
        .matrix()
        .iter()
        .zip(ds.matrix())
        .map(|(a, b)| r * a + (1.0 - r) * b)
        .collect();
    Ok(dn.with_matrix(blended))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendConfig {
    pub r_grid: Vec<f64>,
    pub bounds: BoundsConfig,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            r_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            bounds: BoundsConfig {
                bootstrap: Some(crate::bounds::BootstrapConfig::default()),
                ..BoundsConfig::default()
            },
        }
    }
}

/// One bound at one blend weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendRow {
    pub r: f64,
    pub bound_name: String,
    pub estimator: Estimator,
    pub estimate: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendResult {
    pub config: BlendConfig,
    pub reports: Vec<(f64, BoundsReport)>,
    pub rows: Vec<BlendRow>,
}

/// Bounds for every blend weight in the grid.
pub fn run_blend_sweep(dn: &DistanceData, ds: &DistanceData, config: &BlendConfig) -> Result<BlendResult> {
    if config.r_grid.is_empty() {
        return Err(Error::InvalidParameter("the r grid is empty".into()));
    }
    let mut reports = Vec::with_capacity(config.r_grid.len());
    let mut rows = Vec::new();
    for &r in &config.r_grid {
        let blended = blend_distances(dn, ds, r)?;
        let report = estimate_all_bounds(&Dataset::from(blended), &config.bounds)?;
        for e in &report.entries {
            rows.push(BlendRow {
                r,
                bound_name: e.bound_name.clone(),
                estimator: e.estimator,
                estimate: e.estimate,
                ci_lo: e.ci.map(|c| c[0]),
                ci_hi: e.ci.map(|c| c[1]),
            });
        }
        reports.push((r, report));
    }
    Ok(BlendResult {
        config: config.clone(),
        reports,
        rows,
    })
}

impl BlendResult {
    /// Estimates of one series across the r grid, in grid order.
    pub fn series(&self, bound_name: &str, estimator: Estimator) -> Vec<Option<f64>> {
        self.reports
            .iter()
            .map(|(_, rep)| rep.entry(bound_name, estimator).map(|e| e.estimate))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "bound_name", "estimator", "estimate", "ci_lo", "ci_hi"])?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                row.r.to_string(),
                row.bound_name.clone(),
                row.estimator.as_str().to_string(),
                row.estimate.to_string(),
                fmt(row.ci_lo),
                fmt(row.ci_hi),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<blend csv>", e))
    }

    /// Writes `blend.csv`, `reports.json` and `manifest.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("blend.csv");
        let reports = dir.join("reports.json");
        let manifest = dir.join("manifest.json");
        self.write_csv(create(&csv_path)?)?;
        let docs: Vec<serde_json::Value> = self
            .reports
            .iter()
            .map(|(r, rep)| serde_json::json!({ "r": r, "report": rep }))
            .collect();
        write_json(&reports, &docs)?;
        write_json(
            &manifest,
            &serde_json::json!({
                "kind": "blend-sweep",
                "files": { "curves": "blend.csv", "reports": "reports.json" },
                "x": "r",
                "y": "estimate",
                "band": ["ci_lo", "ci_hi"],
                "series": ["bound_name", "estimator"],
                "config": self.config,
            }),
        )?;
        Ok(vec![csv_path, reports, manifest])
    }
}

/// Two distance matrices over the same labelled points: in `dn` the classes
/// are Gaussian clouds `separation` apart, in `ds` both classes come from the
/// same Gaussian. Blending toward `dn` (r → 1) separates the classes.
pub fn synthetic_blend_fixture(
    per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<(DistanceData, DistanceData)> {
    let separated = sample_gaussian_pair(&GaussianSpec::shifted(d, separation, per_class, derive_seed(seed, 0)))?;
    let mixed = sample_gaussian_pair(&GaussianSpec::shifted(d, 0.0, per_class, derive_seed(seed, 1)))?;
    Ok((pairwise_distances(&separated), pairwise_distances(&mixed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Class;

    fn constant(n: usize, value: f64, labels: &[Class]) -> DistanceData {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { value }).collect())
            .collect();
        DistanceData::from_rows(&rows, labels.to_vec(), Some(2)).unwrap()
    }

    #[test]
    fn blend_examples() {
        let labels = [Class::One, Class::Two, Class::Two];
        let a = constant(3, 2.0, &labels);
        let b = constant(3, 4.0, &labels);
        let mid = blend_distances(&a, &b, 0.5).unwrap();
        assert_eq!(mid, constant(3, 3.0, &labels));
        assert_eq!(blend_distances(&a, &b, 0.0).unwrap(), b);
        assert_eq!(blend_distances(&a, &b, 1.0).unwrap(), a);
        assert!(blend_distances(&a, &b, 1.5).is_err());
        let other = constant(3, 4.0, &[Class::Two, Class::One, Class::Two]);
        assert!(blend_distances(&a, &other, 0.5).is_err());
        let no_dim = b.clone().with_intrinsic_dim(None).unwrap();
        assert!(blend_distances(&a, &no_dim, 0.5).is_err());
    }

    #[test]
    fn mean_sd_basics() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_sd(&[]).0.is_nan());
    }

    #[test]
    fn sweep_rows_cover_grid() {
        let config = SweepConfig {
            d: 2,
            deltas: vec![0.0, 2.0],
            sample_sizes: vec![60],
            trials: 3,
            seed: 9,
            ..SweepConfig::default()
        };
        let result = run_gaussian_sweep(&config).unwrap();
        assert_eq!(result.trials.len(), 6);
        assert_eq!(result.rows.len(), 2 * 6);
        assert_eq!(result.failed_trials(), 0);
        let row = result.row(60, 0.0, "dtilde_upper", Estimator::Mst).unwrap();
        assert_eq!(row.truth, 0.5);
        assert_eq!(row.n_ok, 3);
    }

    #[test]
    fn sweep_records_failures_as_rows() {
        // Five points per class cannot host the default ℓ grid.
        let config = SweepConfig {
            d: 2,
            deltas: vec![1.0],
            sample_sizes: vec![5],
            trials: 2,
            ..SweepConfig::default()
        };
        let result = run_gaussian_sweep(&config).unwrap();
        assert_eq!(result.failed_trials(), 2);
        let row = result.row(5, 1.0, "chernoff_upper", Estimator::KnnEnsemble).unwrap();
        assert_eq!(row.n_ok, 0);
        assert!(row.status.starts_with("error"));
        assert_eq!(result.row(5, 1.0, "dtilde_lower", Estimator::Mst).unwrap().n_ok, 2);
    }

    #[test]
    fn sweep_validation() {
        let bad = SweepConfig {
            trials: 0,
            ..SweepConfig::default()
        };
        assert!(run_gaussian_sweep(&bad).is_err());
        let bad = SweepConfig {
            deltas: vec![],
            ..SweepConfig::default()
        };
        assert!(run_gaussian_sweep(&bad).is_err());
    }
}
