//! k-nearest-neighbour distances and the k-NN density estimate
//! `f̂(x) = k / (M · c̄ · ρ_k(x)^d)`, with `c̄` the volume of the unit
//! `d`-ball, `π^{d/2} / Γ(d/2 + 1)`.
//!
//! Queries are exact. Point data of dimension at most
//! [`KD_TREE_MAX_DIM`] goes through a kd-tree, everything else (higher
//! dimensions, distance matrices) through a brute-force scan; both return the
//! same values.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{euclidean, Class, Dataset, DistanceData, PointSet};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;

/// Highest dimension served by the kd-tree.
pub const KD_TREE_MAX_DIM: usize = 15;

/// Relative size of the radius substituted for a zero neighbour distance.
pub const DUPLICATE_EPSILON: f64 = 1e-10;

/// Volume of the unit ball in `d` dimensions, `π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = V_{d-2} · 2π / d from V_0 = 1 and V_1 = 2.
    let mut v = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = 2 + d % 2;
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// The k-NN density estimate `k / (M · c̄ · ρ^d)`.
pub fn knn_density(k: usize, m: usize, d: usize, rho: f64) -> Result<f64> {
    if k == 0 || m == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "knn_density needs positive k, M and d (got k={k}, M={m}, d={d})"
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "neighbour radius {rho} must be positive"
        )));
    }
    Ok(k as f64 / (m as f64 * unit_ball_volume(d) * rho.powi(d as i32)))
}

/// How the reference points of a [`NeighborIndex`] are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryStrategy {
    BruteForce,
    KdTree,
}

/// A neighbour query: a free point, or a row of the backing distance matrix.
#[derive(Debug, Clone, Copy)]
pub enum Query<'q> {
    Point(&'q [f64]),
    Row(usize),
}

#[derive(Debug, Clone)]
enum References<'a> {
    Points {
        points: &'a PointSet,
        tree: Option<KdTree>,
    },
    Matrix {
        data: &'a DistanceData,
        members: Vec<usize>,
    },
}

/// Read-only set of reference points answering exact k-th neighbour queries.
///
/// Excluded references are named by their position among the references.
/// Equal distances count as distinct order statistics (in insertion order),
/// so the returned k-th distance never depends on how ties are broken.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    refs: References<'a>,
}

impl<'a> NeighborIndex<'a> {
    /// Index over a point set, choosing the strategy by dimension.
    pub fn from_points(points: &'a PointSet) -> Self {
        let strategy = if points.dim() <= KD_TREE_MAX_DIM {
            QueryStrategy::KdTree
        } else {
            QueryStrategy::BruteForce
        };
        Self::from_points_with(points, strategy)
    }

    pub fn from_points_with(points: &'a PointSet, strategy: QueryStrategy) -> Self {
        let tree = match strategy {
            QueryStrategy::KdTree => Some(KdTree::build(points)),
            QueryStrategy::BruteForce => None,
        };
        Self {
            refs: References::Points { points, tree },
        }
    }

    /// Index whose references are the matrix points listed in `members`.
    pub fn from_matrix(data: &'a DistanceData, members: Vec<usize>) -> Self {
        Self {
            refs: References::Matrix { data, members },
        }
    }

    pub fn strategy(&self) -> QueryStrategy {
        match &self.refs {
            References::Points { tree: Some(_), .. } => QueryStrategy::KdTree,
            _ => QueryStrategy::BruteForce,
        }
    }

    pub fn len(&self) -> usize {
        match &self.refs {
            References::Points { points, .. } => points.len(),
            References::Matrix { members, .. } => members.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn eligible(&self, exclude: Option<usize>) -> usize {
        let n = self.len();
        match exclude {
            Some(e) if e < n => n - 1,
            _ => n,
        }
    }

    /// The `k` smallest distances from `query`, ascending.
    pub fn nearest_distances(&self, query: Query<'_>, k: usize, exclude: Option<usize>) -> Result<Vec<f64>> {
        let available = self.eligible(exclude);
        if k == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        if k > available {
            return Err(Error::KTooLarge { k, available });
        }
        match (&self.refs, query) {
            (References::Points { tree: Some(tree), .. }, Query::Point(q)) => Ok(tree.nearest_distances(q, k, exclude)),
            (References::Points { points, tree: None }, Query::Point(q)) => {
                let all = (0..points.len())
                    .filter(|&i| Some(i) != exclude)
                    .map(|i| euclidean(q, points.point(i)))
                    .collect();
                Ok(smallest(all, k))
            }
            (References::Matrix { data, members }, Query::Row(r)) => {
                let row = data.row(r);
                let all = members
                    .iter()
                    .enumerate()
                    .filter(|&(pos, _)| Some(pos) != exclude)
                    .map(|(_, &m)| row[m])
                    .collect();
                Ok(smallest(all, k))
            }
            (References::Points { .. }, Query::Row(_)) => {
                Err(Error::Unsupported("a point query against point references".into()))
            }
            (References::Matrix { .. }, Query::Point(_)) => Err(Error::Unsupported(
                "a matrix-row query against distance-matrix references".into(),
            )),
        }
    }
}

fn smallest(mut all: Vec<f64>, k: usize) -> Vec<f64> {
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, f64::total_cmp);
        all.truncate(k);
    }
    all.sort_by(f64::total_cmp);
    all
}

/// Exact k-th nearest-neighbour distance from `query`.
pub fn kth_neighbor_distance(
    index: &NeighborIndex<'_>,
    query: Query<'_>,
    k: usize,
    exclude: Option<usize>,
) -> Result<f64> {
    let d = index.nearest_distances(query, k, exclude)?;
    Ok(d[k - 1])
}

/// Which class-2 points are evaluated and which estimate `f̂2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileMode {
    /// Every class-2 point is evaluated; `f̂2` uses the other class-2 points.
    #[default]
    Loo,
    /// The first `T2 − ⌈T2/2⌉` class-2 points are evaluated; `f̂2` uses the
    /// remaining `⌈T2/2⌉`.
    Split,
}

/// Density estimates at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPair {
    pub f1: f64,
    pub f2: f64,
    /// Likelihood ratio `f̂1 / f̂2`.
    pub t: f64,
    /// A zero neighbour distance was replaced by the duplicate radius.
    pub duplicate: bool,
}

/// Density pairs at every evaluation point for one `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub k: usize,
    pub m1: usize,
    pub m2: usize,
    pub d: usize,
    pub pairs: Vec<DensityPair>,
}

impl DensityProfile {
    pub fn ratios(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.t)
    }

    pub fn duplicate_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.duplicate).count()
    }
}

/// Neighbour distances of every evaluation point at a fixed set of `k`
/// values, computed in one pass. Profiles for each `k` are then cheap.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    ks: Vec<usize>,
    d: usize,
    m1: usize,
    m2: usize,
    /// Row-major `n_eval × ks.len()` radii to class 1.
    rho1: Vec<f64>,
    /// Row-major `n_eval × ks.len()` radii to class 2.
    rho2: Vec<f64>,
    duplicate_radius: Option<f64>,
}

/// Reference counts `(M1, M2)` the given mode uses for `f̂1` and `f̂2`.
pub fn reference_counts(n1: usize, n2: usize, mode: ProfileMode) -> (usize, usize) {
    match mode {
        ProfileMode::Loo => (n1, n2.saturating_sub(1)),
        ProfileMode::Split => (n1, n2.div_ceil(2)),
    }
}

struct Layout {
    /// Evaluation points as positions among class-2 points.
    eval: std::ops::Range<usize>,
    /// Class-2 reference positions.
    refs2: std::ops::Range<usize>,
    loo: bool,
}

fn layout(n2: usize, mode: ProfileMode) -> Layout {
    match mode {
        ProfileMode::Loo => Layout {
            eval: 0..n2,
            refs2: 0..n2,
            loo: true,
        },
        ProfileMode::Split => {
            let m = n2.div_ceil(2);
            Layout {
                eval: 0..n2 - m,
                refs2: n2 - m..n2,
                loo: false,
            }
        }
    }
}

impl NeighborTable {
    /// Builds the table for the distinct values in `ks`.
    pub fn build(data: &Dataset, ks: &[usize], mode: ProfileMode) -> Result<Self> {
        let d = data
            .dim()
            .ok_or_else(|| Error::Unsupported("an intrinsic dimension for k-NN density estimation".into()))?;
        let (n1, n2) = data.class_counts();
        let (m1, m2) = reference_counts(n1, n2, mode);
        let mut ks: Vec<usize> = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let kmax = *ks.last().ok_or_else(|| Error::InvalidParameter("no k values".into()))?;
        if ks[0] == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        for available in [m2, m1] {
            if kmax > available {
                return Err(Error::KTooLarge { k: kmax, available });
            }
        }
        let lay = layout(n2, mode);
        if lay.eval.is_empty() {
            return Err(Error::EmptySample);
        }

        let rows: Vec<(Vec<f64>, Vec<f64>)> = match data {
            Dataset::Points(p) => {
                let f1 = p.points_f1();
                let f2 = p.points_f2();
                let refs2_set = f2.select(&lay.refs2.clone().collect::<Vec<_>>());
                let idx1 = NeighborIndex::from_points(f1);
                let idx2 = if lay.loo {
                    NeighborIndex::from_points(f2)
                } else {
                    NeighborIndex::from_points(&refs2_set)
                };
                lay.eval
                    .clone()
                    .into_par_iter()
                    .map(|i| {
                        let q = Query::Point(f2.point(i));
                        let r1 = idx1.nearest_distances(q, kmax, None)?;
                        let r2 = idx2.nearest_distances(q, kmax, lay.loo.then_some(i))?;
                        Ok((pick(&r1, &ks), pick(&r2, &ks)))
                    })
                    .collect::<Result<_>>()?
            }
            Dataset::Distances(dd) => {
                let members1 = dd.members(Class::One);
                let members2 = dd.members(Class::Two);
                let idx1 = NeighborIndex::from_matrix(dd, members1);
                let idx2 = NeighborIndex::from_matrix(dd, members2[lay.refs2.clone()].to_vec());
                lay.eval
                    .clone()
                    .into_par_iter()
                    .map(|i| {
                        let q = Query::Row(members2[i]);
                        let r1 = idx1.nearest_distances(q, kmax, None)?;
                        let r2 = idx2.nearest_distances(q, kmax, lay.loo.then_some(i))?;
                        Ok((pick(&r1, &ks), pick(&r2, &ks)))
                    })
                    .collect::<Result<_>>()?
            }
        };

        let mut rho1 = Vec::with_capacity(rows.len() * ks.len());
        let mut rho2 = Vec::with_capacity(rows.len() * ks.len());
        for (a, b) in rows {
            rho1.extend(a);
            rho2.extend(b);
        }
        let duplicate_radius = if rho1.iter().chain(&rho2).any(|&r| r == 0.0) {
            Some(DUPLICATE_EPSILON * diameter(data))
        } else {
            None
        };
        Ok(Self {
            ks,
            d,
            m1,
            m2,
            rho1,
            rho2,
            duplicate_radius,
        })
    }

    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    pub fn eval_count(&self) -> usize {
        self.rho1.len() / self.ks.len()
    }

    /// Density pairs at every evaluation point for `k` (which must be one of
    /// the table's `k` values).
    pub fn profile(&self, k: usize) -> Result<DensityProfile> {
        let col = self
            .ks
            .binary_search(&k)
            .map_err(|_| Error::InvalidParameter(format!("k = {k} was not tabulated")))?;
        let width = self.ks.len();
        let eps = self.duplicate_radius.unwrap_or(0.0);
        let dup_radius = |r: f64| if r == 0.0 { (eps, true) } else { (r, false) };
        let scale = self.m2 as f64 / self.m1 as f64;
        let pairs = (0..self.eval_count())
            .map(|i| {
                let (r1, dup1) = dup_radius(self.rho1[i * width + col]);
                let (r2, dup2) = dup_radius(self.rho2[i * width + col]);
                let f1 = knn_density(k, self.m1, self.d, r1)?;
                let f2 = knn_density(k, self.m2, self.d, r2)?;
                let t = (scale * (r2 / r1).powi(self.d as i32)).clamp(f64::MIN_POSITIVE, f64::MAX);
                Ok(DensityPair {
                    f1,
                    f2,
                    t,
                    duplicate: dup1 || dup2,
                })
            })
            .collect::<Result<_>>()?;
        Ok(DensityProfile {
            k,
            m1: self.m1,
            m2: self.m2,
            d: self.d,
            pairs,
        })
    }
}

fn pick(sorted: &[f64], ks: &[usize]) -> Vec<f64> {
    ks.iter().map(|&k| sorted[k - 1]).collect()
}

/// Scale of the data: the largest matrix entry, or the bounding-box diagonal
/// of the pooled points (within a factor `√d` of the true diameter and
/// linear-time to compute).
fn diameter(data: &Dataset) -> f64 {
    let scale = match data {
        Dataset::Distances(d) => d.matrix().iter().copied().fold(0.0, f64::max),
        Dataset::Points(p) => {
            let dim = p.d();
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for x in p.points_f1().iter().chain(p.points_f2().iter()) {
                for a in 0..dim {
                    lo[a] = lo[a].min(x[a]);
                    hi[a] = hi[a].max(x[a]);
                }
            }
            lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
        }
    };
    if scale > 0.0 {
        scale
    } else {
        1.0
    }
}

/// Density pairs for a single `k`.
pub fn density_profiles(data: &Dataset, k: usize, mode: ProfileMode) -> Result<DensityProfile> {
    NeighborTable::build(data, &[k], mode)?.profile(k)
}

/// Effective sample size `min(M1, M2)` that sets the `k` scale.
pub fn effective_sample_size(data: &Dataset, mode: ProfileMode) -> usize {
    let (n1, n2) = data.class_counts();
    let (m1, m2) = reference_counts(n1, n2, mode);
    m1.min(m2)
}

/// Round half up, then clamp into `[1, max(1, M − 1)]`.
pub fn k_for_ell(ell: f64, m: usize) -> usize {
    let raw = (ell * (m as f64).sqrt() + 0.5).floor();
    let upper = m.saturating_sub(1).max(1);
    match raw.partial_cmp(&1.0) {
        Some(Ordering::Less) | None => 1,
        _ => (raw as usize).min(upper),
    }
}
