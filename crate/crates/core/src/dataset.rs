//! Two-class sample containers, CSV / distance-matrix ingestion, the
//! synthetic Gaussian generator and its closed-form Bayes error.
//!
//! Class 1 is the sample from `f1` (the "reference" sample `Y`), class 2 the
//! sample from `f2` whose points serve as evaluation points for the plug-in
//! estimators.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated (and averaged away) when ingesting a
/// distance matrix.
pub const ASYMMETRY_TOLERANCE: f64 = 1e-9;

/// Class tag of a sample point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub fn tag(self) -> u8 {
        match self {
            Class::One => 1,
            Class::Two => 2,
        }
    }

    pub fn other(self) -> Class {
        match self {
            Class::One => Class::Two,
            Class::Two => Class::One,
        }
    }
}

/// A set of `d`-dimensional points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates do not divide into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coordinate {bad}")));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptySample)?;
        let mut coords = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Points `indices` (repeats allowed) collected into a new set.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet { dim: self.dim, coords }
    }

    /// Every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PointSet {
        PointSet {
            dim: self.dim,
            coords: self.coords.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Euclidean distance. Every code path (brute force, kd-tree, MST) uses this
/// exact arithmetic so results agree bit for bit.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

#[inline]
pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_prior(q1: f64) -> Result<()> {
    if q1 > 0.0 && q1 < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("prior q1 = {q1} must lie in (0, 1)")))
    }
}

/// Labeled point clouds drawn from `f1` (class 1) and `f2` (class 2).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleData {
    points_f1: PointSet,
    points_f2: PointSet,
    q1: f64,
}

impl TwoSampleData {
    /// Builds the pair with `q1` set to the empirical class-1 fraction.
    pub fn new(points_f1: PointSet, points_f2: PointSet) -> Result<Self> {
        if points_f1.is_empty() || points_f2.is_empty() {
            return Err(Error::EmptySample);
        }
        if points_f1.dim() != points_f2.dim() {
            return Err(Error::DimensionMismatch {
                expected: points_f1.dim(),
                found: points_f2.dim(),
            });
        }
        let n1 = points_f1.len() as f64;
        let q1 = n1 / (n1 + points_f2.len() as f64);
        Ok(Self {
            points_f1,
            points_f2,
            q1,
        })
    }

    pub fn with_q1(mut self, q1: f64) -> Result<Self> {
        check_prior(q1)?;
        self.q1 = q1;
        Ok(self)
    }

    pub fn points_f1(&self) -> &PointSet {
        &self.points_f1
    }

    pub fn points_f2(&self) -> &PointSet {
        &self.points_f2
    }

    pub fn d(&self) -> usize {
        self.points_f1.dim()
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn q2(&self) -> f64 {
        1.0 - self.q1
    }

    pub fn class_counts(&self) -> (usize, usize) {
        (self.points_f1.len(), self.points_f2.len())
    }

    /// Same data with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> TwoSampleData {
        TwoSampleData {
            points_f1: self.points_f1.scaled(factor),
            points_f2: self.points_f2.scaled(factor),
            q1: self.q1,
        }
    }
}

/// A labeled pairwise distance matrix.
///
/// `intrinsic_dim` replaces the ambient dimension in the k-NN volume
/// normalisation; without it only the MST estimator can run.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceData {
    n: usize,
    dist: Vec<f64>,
    labels: Vec<Class>,
    intrinsic_dim: Option<usize>,
    q1: f64,
}

impl DistanceData {
    /// Validates and symmetrises a square matrix given row-major.
    pub fn new(n: usize, mut dist: Vec<f64>, labels: Vec<Class>, intrinsic_dim: Option<usize>) -> Result<Self> {
        if dist.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {n}x{n} matrix",
                dist.len()
            )));
        }
        if labels.len() != n {
            return Err(Error::LabelMismatch {
                labels: labels.len(),
                n,
            });
        }
        if intrinsic_dim == Some(0) {
            return Err(Error::InvalidParameter("intrinsic dimension must be positive".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let v = dist[i * n + j];
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("distance at ({i}, {j})")));
                }
                if v < 0.0 {
                    return Err(Error::NegativeDistance {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        for i in 0..n {
            dist[i * n + i] = 0.0;
            for j in i + 1..n {
                let (a, b) = (dist[i * n + j], dist[j * n + i]);
                if (a - b).abs() > ASYMMETRY_TOLERANCE * a.max(b) {
                    return Err(Error::Asymmetric {
                        row: i,
                        col: j,
                        forward: a,
                        backward: b,
                    });
                }
                let mean = 0.5 * (a + b);
                dist[i * n + j] = mean;
                dist[j * n + i] = mean;
            }
        }
        let n1 = labels.iter().filter(|&&c| c == Class::One).count();
        if n1 == 0 || n1 == n {
            let only = if n1 == 0 { "2" } else { "1" };
            return Err(Error::SingleClass(only.into()));
        }
        Ok(Self {
            n,
            dist,
            labels,
            intrinsic_dim,
            q1: n1 as f64 / n as f64,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: Vec<Class>, intrinsic_dim: Option<usize>) -> Result<Self> {
        let n = rows.len();
        let mut dist = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::NonSquare {
                    rows: n,
                    row: i,
                    cols: row.len(),
                });
            }
            dist.extend_from_slice(row);
        }
        Self::new(n, dist, labels, intrinsic_dim)
    }

    pub fn with_q1(mut self, q1: f64) -> Result<Self> {
        check_prior(q1)?;
        self.q1 = q1;
        Ok(self)
    }

    pub fn with_intrinsic_dim(mut self, dim: Option<usize>) -> Result<Self> {
        if dim == Some(0) {
            return Err(Error::InvalidParameter("intrinsic dimension must be positive".into()));
        }
        self.intrinsic_dim = dim;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.dist
    }

    pub fn labels(&self) -> &[Class] {
        &self.labels
    }

    pub fn intrinsic_dim(&self) -> Option<usize> {
        self.intrinsic_dim
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn q2(&self) -> f64 {
        1.0 - self.q1
    }

    /// Indices of the points carrying `class`, in matrix order.
    pub fn members(&self, class: Class) -> Vec<usize> {
        (0..self.n).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.labels.iter().filter(|&&c| c == Class::One).count();
        (n1, self.n - n1)
    }

    /// Sub-matrix over `indices` (repeats allowed; repeated points sit at
    /// distance zero from each other).
    pub fn select(&self, indices: &[usize]) -> DistanceData {
        let m = indices.len();
        let mut dist = Vec::with_capacity(m * m);
        for &i in indices {
            for &j in indices {
                dist.push(self.get(i, j));
            }
        }
        DistanceData {
            n: m,
            dist,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            intrinsic_dim: self.intrinsic_dim,
            q1: self.q1,
        }
    }

    /// Same labels and settings with a different (already validated) matrix.
    pub(crate) fn with_matrix(&self, dist: Vec<f64>) -> DistanceData {
        debug_assert_eq!(dist.len(), self.n * self.n);
        DistanceData {
            n: self.n,
            dist,
            labels: self.labels.clone(),
            intrinsic_dim: self.intrinsic_dim,
            q1: self.q1,
        }
    }
}

/// Either input representation accepted by the bound estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Points(TwoSampleData),
    Distances(DistanceData),
}

impl Dataset {
    pub fn q1(&self) -> f64 {
        match self {
            Dataset::Points(p) => p.q1(),
            Dataset::Distances(d) => d.q1(),
        }
    }

    /// Dimension used by the k-NN volume normalisation, if known.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Dataset::Points(p) => Some(p.d()),
            Dataset::Distances(d) => d.intrinsic_dim(),
        }
    }

    pub fn class_counts(&self) -> (usize, usize) {
        match self {
            Dataset::Points(p) => p.class_counts(),
            Dataset::Distances(d) => d.class_counts(),
        }
    }

    /// Class-stratified resample with replacement: class sizes and the prior
    /// are preserved.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dataset {
        let draw = |rng: &mut R, n: usize| -> Vec<usize> { (0..n).map(|_| rng.random_range(0..n)).collect() };
        match self {
            Dataset::Points(p) => {
                let (n1, n2) = p.class_counts();
                let i1 = draw(rng, n1);
                let i2 = draw(rng, n2);
                Dataset::Points(TwoSampleData {
                    points_f1: p.points_f1.select(&i1),
                    points_f2: p.points_f2.select(&i2),
                    q1: p.q1,
                })
            }
            Dataset::Distances(d) => {
                let m1 = d.members(Class::One);
                let m2 = d.members(Class::Two);
                let mut indices = vec![0; d.len()];
                for members in [&m1, &m2] {
                    for &slot in members.iter() {
                        indices[slot] = members[rng.random_range(0..members.len())];
                    }
                }
                Dataset::Distances(d.select(&indices))
            }
        }
    }
}

impl From<TwoSampleData> for Dataset {
    fn from(value: TwoSampleData) -> Self {
        Dataset::Points(value)
    }
}

impl From<DistanceData> for Dataset {
    fn from(value: DistanceData) -> Self {
        Dataset::Distances(value)
    }
}

/// Euclidean distance matrix over the pooled sample: class-1 points first,
/// then class-2 points.
pub fn pairwise_distances(data: &TwoSampleData) -> DistanceData {
    let pooled: Vec<&[f64]> = data.points_f1.iter().chain(data.points_f2.iter()).collect();
    let n = pooled.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = euclidean(pooled[i], pooled[j]);
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    let (n1, n2) = data.class_counts();
    let mut labels = vec![Class::One; n1];
    labels.extend(std::iter::repeat_n(Class::Two, n2));
    DistanceData {
        n,
        dist,
        labels,
        intrinsic_dim: Some(data.d()),
        q1: data.q1,
    }
}

/// Two isotropic Gaussians with a common standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub d: usize,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma: f64,
    pub q1: f64,
    /// Points drawn per class.
    pub samples_per_class: usize,
    pub seed: u64,
}

impl GaussianSpec {
    /// Unit-variance pair with `mu2 = 0` and `mu1` shifted by `delta` along
    /// the first axis, equal priors.
    pub fn shifted(d: usize, delta: f64, samples_per_class: usize, seed: u64) -> Self {
        let mut mu1 = vec![0.0; d];
        if d > 0 {
            mu1[0] = delta;
        }
        Self {
            d,
            mu1,
            mu2: vec![0.0; d],
            sigma: 1.0,
            q1: 0.5,
            samples_per_class,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        for mu in [&self.mu1, &self.mu2] {
            if mu.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    found: mu.len(),
                });
            }
            if mu.iter().any(|m| !m.is_finite()) {
                return Err(Error::NonFinite("mean vector".into()));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma = {} must be positive",
                self.sigma
            )));
        }
        check_prior(self.q1)
    }

    /// Mahalanobis separation ‖mu1 − mu2‖ / sigma.
    pub fn separation(&self) -> f64 {
        euclidean(&self.mu1, &self.mu2) / self.sigma
    }
}

/// Draws `samples_per_class` points from each Gaussian. Class 1 is drawn
/// first, from a ChaCha8 stream seeded by `spec.seed`.
pub fn sample_gaussian_pair(spec: &GaussianSpec) -> Result<TwoSampleData> {
    spec.validate()?;
    if spec.samples_per_class == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |mu: &[f64]| -> Result<PointSet> {
        let mut coords = Vec::with_capacity(spec.d * spec.samples_per_class);
        for _ in 0..spec.samples_per_class {
            for &m in mu {
                let z: f64 = rng.sample(StandardNormal);
                coords.push(m + spec.sigma * z);
            }
        }
        PointSet::new(spec.d, coords)
    };
    let f1 = draw(&spec.mu1)?;
    let f2 = draw(&spec.mu2)?;
    TwoSampleData::new(f1, f2)?.with_q1(spec.q1)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Exact Bayes error of an isotropic equal-covariance Gaussian pair, from the
/// one-dimensional projection onto the mean-difference axis.
pub fn true_gaussian_ber(spec: &GaussianSpec) -> Result<f64> {
    spec.validate()?;
    let delta = spec.separation();
    let (q1, q2) = (spec.q1, 1.0 - spec.q1);
    if delta == 0.0 {
        return Ok(q1.min(q2));
    }
    let shift = (q2 / q1).ln() / delta;
    Ok(q1 * std_normal_cdf(-delta / 2.0 + shift) + q2 * std_normal_cdf(-delta / 2.0 - shift))
}

/// Maps exactly two distinct tags onto classes: numeric tags in numeric
/// order, otherwise lexicographic; the smaller tag becomes class 1.
fn assign_classes(tags: &[String]) -> Result<Vec<Class>> {
    let distinct: BTreeSet<&str> = tags.iter().map(String::as_str).collect();
    let mut distinct: Vec<&str> = distinct.into_iter().collect();
    match distinct.len() {
        0 => return Err(Error::EmptySample),
        1 => return Err(Error::SingleClass(distinct[0].to_string())),
        2 => {}
        _ => return Err(Error::TooManyClasses(distinct.iter().map(|s| s.to_string()).collect())),
    }
    let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        if values[1] < values[0] {
            distinct.swap(0, 1);
        }
    }
    let first = distinct[0];
    Ok(tags
        .iter()
        .map(|t| if t == first { Class::One } else { Class::Two })
        .collect())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads a headed CSV whose `label_column` holds two class tags and whose
/// remaining columns are numeric features.
pub fn load_labeled_csv(path: impl AsRef<Path>, label_column: &str) -> Result<TwoSampleData> {
    let path = path.as_ref();
    read_labeled_csv(open(path)?, label_column)
}

pub fn read_labeled_csv<R: Read>(reader: R, label_column: &str) -> Result<TwoSampleData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let dim = header.len() - 1;
    if dim == 0 {
        return Err(Error::InvalidParameter("no feature columns".into()));
    }

    let mut tags = Vec::new();
    let mut features = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // Data rows are numbered from 1, after the header.
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                found: record.len(),
                expected: header.len(),
            });
        }
        let mut point = Vec::with_capacity(dim);
        for (c, field) in record.iter().enumerate() {
            if c == label_idx {
                tags.push(field.to_string());
                continue;
            }
            let value: f64 = field.parse().map_err(|_| Error::NonNumeric {
                row,
                column: header[c].clone(),
                value: field.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumeric {
                    row,
                    column: header[c].clone(),
                    value: field.to_string(),
                });
            }
            point.push(value);
        }
        features.push(point);
    }

    let classes = assign_classes(&tags)?;
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    for (point, class) in features.into_iter().zip(classes) {
        match class {
            Class::One => c1.extend(point),
            Class::Two => c2.extend(point),
        }
    }
    TwoSampleData::new(PointSet::new(dim, c1)?, PointSet::new(dim, c2)?)
}

/// Reads a square numeric CSV (an optional non-numeric header row is
/// skipped) plus a labels file with one tag per line.
pub fn load_distance_matrix(
    path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    intrinsic_dim: Option<usize>,
) -> Result<DistanceData> {
    let path = path.as_ref();
    let labels_path = labels_path.as_ref();
    let rows = read_matrix(open(path)?)?;
    let labels = read_labels(open(labels_path)?)?;
    distance_data_from_parts(rows, &labels, intrinsic_dim)
}

pub fn distance_data_from_parts(
    rows: Vec<Vec<f64>>,
    tags: &[String],
    intrinsic_dim: Option<usize>,
) -> Result<DistanceData> {
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NonSquare {
                rows: n,
                row: i,
                cols: row.len(),
            });
        }
    }
    if tags.len() != n {
        return Err(Error::LabelMismatch { labels: tags.len(), n });
    }
    let labels = assign_classes(tags)?;
    DistanceData::from_rows(&rows, labels, intrinsic_dim)
}

pub fn read_matrix<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => rows.push(values),
            Err(_) if r == 0 => continue,
            Err(_) => {
                let (c, value) = record
                    .iter()
                    .enumerate()
                    .find(|(_, f)| f.parse::<f64>().is_err())
                    .map(|(c, f)| (c, f.to_string()))
                    .unwrap_or_default();
                return Err(Error::NonNumeric {
                    row: r,
                    column: c.to_string(),
                    value,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(rows)
}

pub fn read_labels<R: Read>(reader: R) -> Result<Vec<String>> {
    let mut tags = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|e| Error::io("<labels>", e))?;
        let tag = line.trim();
        if !tag.is_empty() {
            tags.push(tag.to_string());
        }
    }
    Ok(tags)
}
