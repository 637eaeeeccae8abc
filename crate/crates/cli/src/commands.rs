use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bayesbound::experiment::{run_blend_sweep, run_gaussian_sweep, synthetic_blend_fixture, BlendConfig, SweepConfig};
use bayesbound::mst::{minimum_spanning_tree_points, write_edges_csv};
use bayesbound::{
    estimate_all_bounds, hp_dtilde_estimate, load_distance_matrix, load_labeled_csv, minimum_spanning_tree,
    solve_weights, BootstrapConfig, BoundSelection, BoundsConfig, Class, Dataset, EnsembleConfig, MstNormalization,
    WeightMode,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{BlendArgs, BootstrapArgs, BoundsArgs, DataArgs, MstArgs, SimulateArgs, WeightsArgs};

/// Largest tolerated fraction of failed sweep trials.
const MAX_FAILURE_FRACTION: f64 = 0.05;

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn parse_bounds(names: &[String]) -> Result<Vec<BoundSelection>> {
    names
        .iter()
        .map(|n| {
            serde_json::from_value(serde_json::Value::String(n.trim().to_string()))
                .with_context(|| format!("unknown bound `{n}` (expected chernoff, dtilde-knn, dtilde-mst or galpha)"))
        })
        .collect()
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    io::stdout().write_all(json_line(value)?.as_bytes())?;
    Ok(())
}

fn apply_bootstrap(bounds: &mut BoundsConfig, args: &BootstrapArgs) {
    match args.bootstrap {
        Some(0) => bounds.bootstrap = None,
        Some(n) => bounds.bootstrap.get_or_insert_with(BootstrapConfig::default).replicates = n,
        None => {}
    }
    if let Some(boot) = bounds.bootstrap.as_mut() {
        if let Some(level) = args.level {
            boot.level = level;
        }
        if let Some(seed) = args.seed {
            boot.seed = seed;
        }
    }
}

fn load_dataset(args: &DataArgs) -> Result<Dataset> {
    let data = match (&args.input, &args.distances, &args.labels) {
        (Some(input), None, None) => {
            if args.intrinsic_dim.is_some() {
                bail!("--intrinsic-dim applies to distance input only");
            }
            let mut data =
                load_labeled_csv(input, &args.label_column).with_context(|| format!("loading {}", input.display()))?;
            if let Some(q1) = args.q1 {
                data = data.with_q1(q1)?;
            }
            Dataset::from(data)
        }
        (None, Some(dist), Some(labels)) => {
            let mut data = load_distance_matrix(dist, labels, args.intrinsic_dim)
                .with_context(|| format!("loading {} with labels {}", dist.display(), labels.display()))?;
            if let Some(q1) = args.q1 {
                data = data.with_q1(q1)?;
            }
            Dataset::from(data)
        }
        _ => bail!("give either --input, or --distances together with --labels"),
    };
    Ok(data)
}

pub fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut config: SweepConfig = read_config(args.config.as_deref())?;
    if let Some(d) = args.d {
        config.d = d;
    }
    if let Some(deltas) = args.deltas {
        config.deltas = deltas;
    }
    if let Some(sizes) = args.sample_sizes {
        config.sample_sizes = sizes;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(q1) = args.q1 {
        config.q1 = q1;
    }
    if let Some(bounds) = &args.bounds {
        config.bounds.bounds = parse_bounds(bounds)?;
    }
    log::info!(
        "simulating d = {}, {} separations × {} sample sizes × {} trials",
        config.d,
        config.deltas.len(),
        config.sample_sizes.len(),
        config.trials
    );
    let result = run_gaussian_sweep(&config)?;
    for path in result.write_outputs(&args.out_dir)? {
        println!("{}", path.display());
    }
    let fraction = result.failure_fraction();
    if fraction > MAX_FAILURE_FRACTION {
        eprintln!(
            "error: {} of {} trials failed ({:.1}%, limit {:.0}%)",
            result.failed_trials(),
            result.trials.len(),
            100.0 * fraction,
            100.0 * MAX_FAILURE_FRACTION
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn bounds(args: BoundsArgs) -> Result<ExitCode> {
    let mut config: BoundsConfig = read_config(args.config.as_deref())?;
    if let Some(bounds) = &args.bounds {
        config.bounds = parse_bounds(bounds)?;
    }
    apply_bootstrap(&mut config, &args.bootstrap);
    let data = load_dataset(&args.data)?;
    let report = estimate_all_bounds(&data, &config)?;
    for e in &report.errors {
        log::warn!("{:?} not computed: {}", e.bound, e.message);
    }
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("report.json");
            fs::write(&path, json_line(&report)?).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", path.display());
        }
        None => print_json(&report)?,
    }
    Ok(if report.entries.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

pub fn blend(args: BlendArgs) -> Result<ExitCode> {
    let mut config: BlendConfig = read_config(args.config.as_deref())?;
    if let Some(grid) = args.r_grid {
        config.r_grid = grid;
    }
    if let Some(bounds) = &args.bounds {
        config.bounds.bounds = parse_bounds(bounds)?;
    }
    apply_bootstrap(&mut config.bounds, &args.bootstrap);

    let (mut dn, mut ds) = if args.synthetic {
        let seed = args.bootstrap.seed.unwrap_or(0);
        synthetic_blend_fixture(args.per_class, args.synthetic_dim, args.separation, seed)?
    } else {
        let (Some(dn), Some(ds), Some(labels)) = (&args.dn, &args.ds, &args.labels) else {
            bail!("give --dn, --ds and --labels, or --synthetic");
        };
        let load = |p: &Path| {
            load_distance_matrix(p, labels, args.intrinsic_dim).with_context(|| format!("loading {}", p.display()))
        };
        (load(dn)?, load(ds)?)
    };
    if let Some(q1) = args.q1 {
        dn = dn.with_q1(q1)?;
        ds = ds.with_q1(q1)?;
    }
    let result = run_blend_sweep(&dn, &ds, &config)?;
    for (r, report) in &result.reports {
        for e in &report.errors {
            log::warn!("r = {r}: {:?} not computed: {}", e.bound, e.message);
        }
    }
    for path in result.write_outputs(&args.out_dir)? {
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn weights(args: WeightsArgs) -> Result<ExitCode> {
    let ell = args.ell.unwrap_or_else(|| EnsembleConfig::default_for_dim(args.d).ell);
    let mode = if args.exact {
        WeightMode::ExactNull
    } else {
        WeightMode::Relaxed {
            max_norm: args.max_norm,
        }
    };
    let w = solve_weights(&ell, args.d, mode, args.sample_size)?;
    print_json(&serde_json::json!({ "ell": ell, "d": args.d, "weights": w }))?;
    Ok(ExitCode::SUCCESS)
}

pub fn mst(args: MstArgs) -> Result<ExitCode> {
    let data = load_dataset(&args.data)?;
    let (result, labels) = match &data {
        Dataset::Points(p) => {
            let (n1, n2) = p.class_counts();
            let mut labels = vec![Class::One; n1];
            labels.extend(std::iter::repeat_n(Class::Two, n2));
            (minimum_spanning_tree_points(p)?, labels)
        }
        Dataset::Distances(d) => (minimum_spanning_tree(d)?, d.labels().to_vec()),
    };
    let (m, n) = data.class_counts();
    let dtilde = match &data {
        Dataset::Distances(d) => hp_dtilde_estimate(d)?,
        Dataset::Points(_) => {
            bayesbound::mst::hp_dtilde_from_count(result.cross_count, m, n, MstNormalization::default())?
        }
    };
    if let Some(path) = &args.edges {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_edges_csv(&result, &labels, file)?;
    }
    print_json(&serde_json::json!({
        "nodes": m + n,
        "class_counts": [m, n],
        "edges": result.edges.len(),
        "cross_count": result.cross_count,
        "total_weight": result.total_weight,
        "dtilde": dtilde,
    }))?;
    Ok(ExitCode::SUCCESS)
}
