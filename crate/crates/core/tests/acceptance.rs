//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use bayesbound::bounds::KnnEstimates;
use bayesbound::experiment::{
    blend_distances, mean_sd, run_blend_sweep, run_gaussian_sweep, synthetic_blend_fixture, BlendConfig, SweepConfig,
};
use bayesbound::mst::minimum_spanning_tree_points;
use bayesbound::{
    bound_from_dphi, estimate_all_bounds, hp_dtilde_estimate, minimum_spanning_tree, sample_gaussian_pair,
    solve_weights, BootstrapConfig, BoundSelection, BoundsConfig, BoundsReport, Class, DTildeForm, Dataset,
    DistanceData, EnsembleConfig, Error, Estimator, FunctionalSpec, GaussianSpec, PointSet, ProfileMode, TwoSampleData,
    WeightMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const ORACLE_DRAWS: usize = 1_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {e}"))
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

/// Oracle D̃ for the unit-variance Gaussian pair at equal priors, from the
/// Monte-Carlo integral, cross-checked against quadrature.
fn dtilde_oracle(delta: f64) -> f64 {
    let mc = common::dtilde_monte_carlo(delta, 0.5, ORACLE_DRAWS, 0xD711DE + (delta * 100.0) as u64);
    let quad = common::dtilde_quadrature(delta, 0.5);
    assert!(
        (mc - quad).abs() < 5e-3,
        "oracles disagree at Δ = {delta}: {mc} vs {quad}"
    );
    mc
}

fn sweep(d: usize, deltas: &[f64], sizes: &[usize], trials: usize, seed: u64, bounds: BoundsConfig) -> SweepConfig {
    SweepConfig {
        d,
        deltas: deltas.to_vec(),
        sample_sizes: sizes.to_vec(),
        trials,
        seed,
        q1: 0.5,
        bounds,
    }
}

fn only(bounds: &[BoundSelection]) -> BoundsConfig {
    BoundsConfig {
        bounds: bounds.to_vec(),
        ..BoundsConfig::default()
    }
}

fn weight_exactness() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let hand: [(&[f64], &[f64]); 2] = [
        (&[1.0, 4.0], &[2.0, -1.0]),
        (&[1.0, 4.0, 9.0], &[4.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0]),
    ];
    for (ell, expected) in hand {
        match solve_weights(ell, 2, WeightMode::ExactNull, 0) {
            Ok(w) => {
                let err = w.w.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                pass &= err <= 1e-10;
                notes.push(format!("{ell:?}: max err {err:.1e}"));
            }
            Err(e) => return Outcome::error(e),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let (mut solved, mut rejected) = (0, 0);
    while solved < 50 {
        let d = rng.random_range(1..=5);
        let len = d + 2;
        let mut ell: Vec<f64> = Vec::with_capacity(len);
        while ell.len() < len {
            let x = rng.random_range(0.3..3.0);
            if ell.iter().all(|y| (x - y).abs() > 0.1) {
                ell.push(x);
            }
        }
        ell.sort_by(f64::total_cmp);
        match solve_weights(&ell, d, WeightMode::ExactNull, 0) {
            Ok(w) => {
                let sum_residual = (w.w.iter().sum::<f64>() - 1.0).abs();
                let r = w.constraint_residuals.iter().fold(sum_residual, |m, r| m.max(r.abs()));
                worst = worst.max(r);
                solved += 1;
            }
            Err(Error::IllConditioned { .. }) => rejected += 1,
            Err(e) => return Outcome::error(format!("d = {d}, ℓ = {ell:?}: {e}")),
        }
    }
    pass &= worst <= 1e-9;
    notes.push(format!(
        "50 random grids: max residual {worst:.1e} (tol 1e-9), {rejected} further draws rejected as ill-conditioned"
    ));
    Outcome::new(pass, notes.join("; "))
}

fn identity_case() -> Outcome {
    let config = sweep(
        5,
        &[0.0],
        &[1000],
        20,
        2,
        only(&[BoundSelection::Chernoff, BoundSelection::DtildeKnn]),
    );
    let result = match run_gaussian_sweep(&config) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    if result.failed_trials() > 0 {
        return Outcome::new(false, format!("{} trials failed", result.failed_trials()));
    }
    let dtilde: Vec<f64> = result
        .trials
        .iter()
        .filter_map(|r| r.functional("dtilde_lower", Estimator::KnnEnsemble))
        .collect();
    let chernoff: Vec<f64> = result
        .trials
        .iter()
        .filter_map(|r| r.estimate("chernoff_upper", Estimator::KnnEnsemble))
        .collect();
    let (md, _) = mean_sd(&dtilde);
    let (mc, _) = mean_sd(&chernoff);
    Outcome::new(
        md.abs() <= 0.05 && (mc - 0.5).abs() <= 0.05,
        format!("mean D̃ {md:.4} (target 0 ± 0.05), mean Chernoff {mc:.4} (target 0.5 ± 0.05)"),
    )
}

fn dtilde_tracking() -> Outcome {
    let deltas = [1.0, 2.0, 3.0, 4.0];
    let config = sweep(5, &deltas, &[100, 1000], 50, 3, only(&[BoundSelection::DtildeKnn]));
    let result = match run_gaussian_sweep(&config) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let mut pass = result.failed_trials() == 0;
    let mut notes = vec![format!("{} failed trials", result.failed_trials())];
    for delta in deltas {
        let truth = common::dtilde_lower(dtilde_oracle(delta));
        let values = |t: usize| -> Vec<f64> {
            result
                .cell(t, delta)
                .filter_map(|r| r.estimate("dtilde_lower", Estimator::KnnEnsemble))
                .collect()
        };
        let (mean, sd_large) = mean_sd(&values(1000));
        let (_, sd_small) = mean_sd(&values(100));
        let ok = (mean - truth).abs() <= 0.05 && sd_small > sd_large;
        pass &= ok;
        notes.push(format!(
            "Δ={delta}: mean {mean:.4} vs {truth:.4}, SD(100) {sd_small:.4} > SD(1000) {sd_large:.4}"
        ));
    }
    Outcome::new(pass, notes.join("; "))
}

fn estimator_agreement() -> Outcome {
    let config = sweep(
        5,
        &[2.0],
        &[2000],
        30,
        4,
        only(&[BoundSelection::DtildeKnn, BoundSelection::DtildeMst]),
    );
    let result = match run_gaussian_sweep(&config) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let gaps: Vec<f64> = result
        .trials
        .iter()
        .filter_map(|r| {
            let knn = r.functional("dtilde_lower", Estimator::KnnEnsemble)?;
            let mst = r.functional("dtilde_lower", Estimator::Mst)?;
            Some((knn - mst.clamp(0.0, 1.0)).abs())
        })
        .collect();
    if gaps.len() != config.trials {
        return Outcome::new(
            false,
            format!(
                "only {} of {} trials produced both estimates",
                gaps.len(),
                config.trials
            ),
        );
    }
    let (mean, _) = mean_sd(&gaps);
    Outcome::new(mean <= 0.05, format!("mean |knn D̃ − MST D̃| {mean:.4} (tol 0.05)"))
}

fn galpha_tightness() -> Outcome {
    let bounds = BoundsConfig {
        galpha_alpha: 500.0,
        ..only(&[BoundSelection::Galpha])
    };
    let config = sweep(5, &[4.0], &[5000], 10, 5, bounds);
    let truth = common::ber_quadrature(4.0, 0.5);
    let result = match run_gaussian_sweep(&config) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let values: Vec<f64> = result
        .trials
        .iter()
        .filter_map(|r| r.estimate("galpha_lower", Estimator::KnnEnsemble))
        .collect();
    if values.len() != config.trials {
        return Outcome::new(false, format!("{} trials failed", config.trials - values.len()));
    }
    let (mean, _) = mean_sd(&values);
    let worst_excess = values.iter().map(|v| v - truth).fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        (mean - truth).abs() <= 0.02 && worst_excess <= 0.01,
        format!("mean G_α {mean:.5} vs BER {truth:.5} (tol 0.02), max excess {worst_excess:.5} (tol 0.01)"),
    )
}

fn bad_form_divergence() -> Outcome {
    let config = sweep(5, &[2.0], &[1000], 50, 3, only(&[BoundSelection::DtildeKnn]));
    let truth = dtilde_oracle(2.0);
    let errors: Result<Vec<(f64, f64)>, String> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let data = Dataset::from(sample_gaussian_pair(&config.spec(2.0, 1000, trial)).map_err(|e| e.to_string())?);
            let knn = KnnEstimates::new(&data, &EnsembleConfig::default_for_dim(5), ProfileMode::Loo)
                .map_err(|e| e.to_string())?;
            let rational = knn.dtilde(0.5, DTildeForm::Rational).map_err(|e| e.to_string())?;
            let variational = knn.dtilde(0.5, DTildeForm::Variational).map_err(|e| e.to_string())?;
            Ok(((variational - truth).abs(), (rational - truth).abs()))
        })
        .collect();
    let errors = match errors {
        Ok(e) => e,
        Err(e) => return Outcome::error(e),
    };
    let (var, _) = mean_sd(&errors.iter().map(|e| e.0).collect::<Vec<_>>());
    let (rat, _) = mean_sd(&errors.iter().map(|e| e.1).collect::<Vec<_>>());
    Outcome::new(
        var > rat,
        format!("mean |error| variational {var:.4} vs rational {rat:.4}"),
    )
}

struct MseCell {
    ensemble: f64,
    base: Vec<f64>,
}

fn mse_cell(config: &SweepConfig, t: usize, truth: f64) -> Result<MseCell, String> {
    let spec = FunctionalSpec::dtilde_rational(0.5).map_err(|e| e.to_string())?;
    let runs: Vec<(f64, Vec<f64>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let data = Dataset::from(sample_gaussian_pair(&config.spec(2.0, t, trial)).map_err(|e| e.to_string())?);
            let knn = KnnEstimates::new(&data, &EnsembleConfig::default_for_dim(config.d), ProfileMode::Loo)
                .map_err(|e| e.to_string())?;
            let ensemble = knn.dtilde(0.5, DTildeForm::Rational).map_err(|e| e.to_string())?;
            let base = knn
                .estimator
                .base_estimates(&spec, &knn.profiles)
                .into_iter()
                .map(|dphi| bound_from_dphi(&spec, dphi))
                .collect();
            Ok((ensemble, base))
        })
        .collect::<Result<_, String>>()?;
    let n = runs.len() as f64;
    let sq = |x: f64| (x - truth) * (x - truth);
    let ensemble = runs.iter().map(|r| sq(r.0)).sum::<f64>() / n;
    let base = (0..runs[0].1.len())
        .map(|i| runs.iter().map(|r| sq(r.1[i])).sum::<f64>() / n)
        .collect();
    Ok(MseCell { ensemble, base })
}

fn mse_decay() -> Outcome {
    let config = sweep(3, &[2.0], &[500, 2000], 50, 7, only(&[BoundSelection::DtildeKnn]));
    let truth = dtilde_oracle(2.0);
    let (small, large) = match (mse_cell(&config, 500, truth), mse_cell(&config, 2000, truth)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
    };
    let best_base = large.base.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome::new(
        large.ensemble < small.ensemble && large.ensemble <= 1.5 * best_base,
        format!(
            "MSE T=500 {:.2e}, T=2000 {:.2e}, best single k at T=2000 {:.2e} (ratio {:.2}, tol 1.5)",
            small.ensemble,
            large.ensemble,
            best_base,
            large.ensemble / best_base
        ),
    )
}

fn line_data(f1: &[f64], f2: &[f64]) -> TwoSampleData {
    let rows = |xs: &[f64]| PointSet::from_rows(&xs.iter().map(|&x| [x]).collect::<Vec<_>>()).unwrap();
    TwoSampleData::new(rows(f1), rows(f2)).unwrap()
}

fn mst_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 7;
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rows = common::symmetric_matrix(n, || rng.random_range(0.01..1.0));
        let mut labels: Vec<Class> = (0..n)
            .map(|_| if rng.random::<bool>() { Class::One } else { Class::Two })
            .collect();
        labels[0] = Class::One;
        labels[1] = Class::Two;
        let data = match DistanceData::from_rows(&rows, labels, None) {
            Ok(d) => d,
            Err(e) => return Outcome::error(e),
        };
        let tree = match minimum_spanning_tree(&data) {
            Ok(t) => t,
            Err(e) => return Outcome::error(e),
        };
        let brute = common::brute_force_mst_weight(n, |i, j| rows[i][j]);
        let gap = (tree.total_weight - brute).abs();
        worst = worst.max(gap);
        if gap > 1e-12 || tree.edges.len() != n - 1 {
            mismatches += 1;
        }
    }

    let separated = line_data(&[0.0, 1.0], &[10.0, 11.0]);
    let alternating = line_data(&[0.0, 4.0], &[2.0, 6.0]);
    let hand = |data: &TwoSampleData| -> Result<(usize, f64), String> {
        let tree = minimum_spanning_tree_points(data).map_err(|e| e.to_string())?;
        let dist = bayesbound::pairwise_distances(data);
        Ok((tree.cross_count, hp_dtilde_estimate(&dist).map_err(|e| e.to_string())?))
    };
    let (a, b) = match (hand(&separated), hand(&alternating)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
    };
    Outcome::new(
        mismatches == 0 && a == (1, 0.5) && b == (3, 0.0),
        format!(
            "{mismatches} of 100 random trees differ (max gap {worst:.1e}); separated R={} D̃={}; alternating R={} D̃={}",
            a.0, a.1, b.0, b.1
        ),
    )
}

fn report_violations(report: &BoundsReport) -> Vec<String> {
    let mut bad = Vec::new();
    for e in &report.entries {
        if !(0.0..=0.5).contains(&e.estimate) {
            bad.push(format!("{} {} = {}", e.bound_name, e.estimator.as_str(), e.estimate));
        }
        if let Some([lo, hi]) = e.ci {
            if !(0.0 <= lo && lo <= e.estimate && e.estimate <= hi && hi <= 0.5) {
                bad.push(format!("{} {} CI [{lo}, {hi}]", e.bound_name, e.estimator.as_str()));
            }
        }
    }
    for est in [Estimator::KnnEnsemble, Estimator::Mst] {
        if let (Some(lo), Some(hi)) = (report.entry("dtilde_lower", est), report.entry("dtilde_upper", est)) {
            if lo.estimate > hi.estimate {
                bad.push(format!(
                    "{} D̃ lower {} > upper {}",
                    est.as_str(),
                    lo.estimate,
                    hi.estimate
                ));
            }
        }
    }
    bad
}

fn invariant_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let config = BoundsConfig::default();

    let base = match sample_gaussian_pair(&GaussianSpec::shifted(3, 1.5, 400, 9)) {
        Ok(b) => b,
        Err(e) => return Outcome::error(e),
    };
    let reference = match estimate_all_bounds(&Dataset::from(base.clone()), &config) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let mut drift: f64 = 0.0;
    for factor in [1e-3, 3.7, 1e4] {
        let scaled = match estimate_all_bounds(&Dataset::from(base.scaled(factor)), &config) {
            Ok(r) => r,
            Err(e) => return Outcome::error(e),
        };
        for (a, b) in reference.entries.iter().zip(&scaled.entries) {
            drift = drift.max((a.estimate - b.estimate).abs());
            drift = drift.max((a.diagnostics.unclamped - b.diagnostics.unclamped).abs());
        }
        pass &= reference.entries.len() == scaled.entries.len();
    }
    pass &= drift <= 1e-12;
    notes.push(format!("scale drift {drift:.1e} (tol 1e-12)"));

    let boot = BoundsConfig {
        bootstrap: Some(BootstrapConfig {
            replicates: 40,
            level: 0.9,
            seed: 17,
        }),
        ..BoundsConfig::default()
    };
    let mut violations = Vec::new();
    let mut runs = 0;
    for (i, delta) in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0].into_iter().enumerate() {
        let sample = match sample_gaussian_pair(&GaussianSpec::shifted(2, delta, 120, 30 + i as u64)) {
            Ok(s) => s,
            Err(e) => return Outcome::error(e),
        };
        let matrix = bayesbound::pairwise_distances(&sample);
        for data in [Dataset::from(sample), Dataset::from(matrix)] {
            match estimate_all_bounds(&data, &boot) {
                Ok(report) => {
                    runs += 1;
                    violations.extend(report_violations(&report));
                    if !report.errors.is_empty() {
                        violations.push(format!("Δ={delta}: {:?}", report.errors));
                    }
                }
                Err(e) => violations.push(format!("Δ={delta}: {e}")),
            }
        }
    }
    pass &= violations.is_empty();
    notes.push(format!(
        "{runs} bootstrapped reports, {} range violations",
        violations.len()
    ));
    if let Some(first) = violations.first() {
        notes.push(format!("first: {first}"));
    }

    let mut identity: f64 = 0.0;
    for q1 in [0.2, 0.5, 0.7] {
        let (var, rat) = (
            FunctionalSpec::dtilde_variational(q1).unwrap(),
            FunctionalSpec::dtilde_rational(q1).unwrap(),
        );
        for i in 0..10_000 {
            let t = 10f64.powf(-3.0 + 6.0 * i as f64 / 9_999.0);
            let gap = (var.phi(t) + rat.phi(t) - (q1 * t + (1.0 - q1))).abs();
            identity = identity.max(gap);
        }
    }
    pass &= identity <= 1e-12;
    notes.push(format!("φ identity max gap {identity:.1e} (tol 1e-12)"));

    let data = Dataset::from(base);
    let deterministic = match (estimate_all_bounds(&data, &boot), estimate_all_bounds(&data, &boot)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    pass &= deterministic;
    notes.push(format!("bootstrap reproducible: {deterministic}"));
    Outcome::new(pass, notes.join("; "))
}

fn blend_pipeline() -> Outcome {
    let (dn, ds) = match synthetic_blend_fixture(100, 2, 4.0, 10) {
        Ok(pair) => pair,
        Err(e) => return Outcome::error(e),
    };
    let config = BlendConfig {
        r_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
        bounds: BoundsConfig {
            bootstrap: Some(BootstrapConfig {
                replicates: 200,
                level: 0.95,
                seed: 10,
            }),
            ..BoundsConfig::default()
        },
    };
    let result = match run_blend_sweep(&dn, &ds, &config) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, est) in bayesbound::experiment::expected_entries(&config.bounds.bounds) {
        let series: Option<Vec<f64>> = result.series(name, est).into_iter().collect();
        let Some(series) = series else {
            pass = false;
            notes.push(format!("{name} {} missing at some r", est.as_str()));
            continue;
        };
        let widths: Vec<f64> = result
            .reports
            .iter()
            .map(|(_, rep)| rep.entry(name, est).and_then(|e| e.ci).map_or(0.0, |[lo, hi]| hi - lo))
            .collect();
        let rises = series.windows(2).filter(|w| w[1] > w[0]).count();
        let significant = series
            .windows(2)
            .zip(&widths)
            .filter(|(w, width)| w[1] - w[0] > **width)
            .count();
        let falls = series[0] > series[series.len() - 1];
        pass &= significant == 0 && falls;
        notes.push(format!(
            "{name} {}: {:.3} → {:.3}, {rises} upticks, {significant} beyond the bootstrap interval width",
            est.as_str(),
            series[0],
            series[series.len() - 1]
        ));
    }
    let endpoints = [(0.0, &ds), (1.0, &dn)].into_iter().all(|(r, target)| {
        let blended = blend_distances(&dn, &ds, r).ok();
        let report = result.reports.iter().find(|(x, _)| *x == r).map(|(_, rep)| rep);
        let direct = estimate_all_bounds(&Dataset::from(target.clone()), &config.bounds).ok();
        blended.as_ref() == Some(target) && report.is_some() && report == direct.as_ref()
    });
    pass &= endpoints;
    notes.push(format!("endpoints exact: {endpoints}"));
    Outcome::new(pass, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "weight solver exactness",
            budget: Duration::from_secs(1),
            run: weight_exactness,
        },
        Criterion {
            id: 2,
            name: "identity case",
            budget: Duration::from_secs(60),
            run: identity_case,
        },
        Criterion {
            id: 3,
            name: "D̃ tracking",
            budget: Duration::from_secs(600),
            run: dtilde_tracking,
        },
        Criterion {
            id: 4,
            name: "estimator agreement",
            budget: Duration::from_secs(300),
            run: estimator_agreement,
        },
        Criterion {
            id: 5,
            name: "G_α tightness at low BER",
            budget: Duration::from_secs(600),
            run: galpha_tightness,
        },
        Criterion {
            id: 6,
            name: "bad-form divergence",
            budget: Duration::MAX,
            run: bad_form_divergence,
        },
        Criterion {
            id: 7,
            name: "MSE decay",
            budget: Duration::from_secs(600),
            run: mse_decay,
        },
        Criterion {
            id: 8,
            name: "MST correctness",
            budget: Duration::from_secs(10),
            run: mst_correctness,
        },
        Criterion {
            id: 9,
            name: "invariant suite",
            budget: Duration::from_secs(60),
            run: invariant_suite,
        },
        Criterion {
            id: 10,
            name: "blend pipeline",
            budget: Duration::from_secs(60),
            run: blend_pipeline,
        },
    ];

    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let pass = outcome.pass && in_time;
        if !pass {
            failures += 1;
        }
        let budget = if c.budget == Duration::MAX {
            String::new()
        } else {
            format!(" / {} s", c.budget.as_secs())
        };
        println!(
            "{} [{}] {}: {} ({:.2} s{budget})",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
