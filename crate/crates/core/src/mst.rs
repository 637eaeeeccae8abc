//! Euclidean minimal spanning tree over the pooled sample and the
//! Friedman–Rafsky cross-edge count `R`, which yields a density-free
//! estimate of D̃.
//!
//! Edges are ordered by `(weight, min endpoint, max endpoint)`. That order is
//! total, so the tree is unique and reproducible even with tied weights.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{euclidean, Class, DistanceData, TwoSampleData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    /// Smaller endpoint.
    pub i: usize,
    /// Larger endpoint.
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MstResult {
    /// Edges in the order Prim's algorithm added them.
    pub edges: Vec<MstEdge>,
    /// Number of edges joining points of different classes.
    pub cross_count: usize,
    pub total_weight: f64,
}

/// Normalisation turning `R` into a D̃ estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MstNormalization {
    /// `1 − R (m + n) / (2 m n)`.
    #[default]
    PriorWeighted,
    /// `1 − 2R / (m + n)`; equal to the default for balanced samples.
    Pooled,
}

#[derive(Clone, Copy)]
struct Key {
    weight: f64,
    lo: usize,
    hi: usize,
}

impl Key {
    const NONE: Key = Key {
        weight: f64::INFINITY,
        lo: usize::MAX,
        hi: usize::MAX,
    };

    fn cmp(&self, other: &Key) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

/// Dense Prim, `O(n²)` time and `O(n)` extra memory.
fn prim(n: usize, labels: &[Class], dist: impl Fn(usize, usize) -> f64) -> Result<MstResult> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "a spanning tree needs at least 2 points, got {n}"
        )));
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![Key::NONE; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = dist(current, v);
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("distance between {current} and {v}")));
            }
            let candidate = Key {
                weight: w,
                lo: current.min(v),
                hi: current.max(v),
            };
            if candidate.cmp(&best[v]) == Ordering::Less {
                best[v] = candidate;
            }
        }
        let next = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by(|&a, &b| best[a].cmp(&best[b]))
            .expect("a vertex remains outside the tree");
        let key = best[next];
        edges.push(MstEdge {
            i: key.lo,
            j: key.hi,
            weight: key.weight,
        });
        in_tree[next] = true;
        current = next;
    }
    let cross_count = edges.iter().filter(|e| labels[e.i] != labels[e.j]).count();
    let total_weight = edges.iter().map(|e| e.weight).sum();
    Ok(MstResult {
        edges,
        cross_count,
        total_weight,
    })
}

/// Exact MST of a distance matrix.
pub fn minimum_spanning_tree(dist: &DistanceData) -> Result<MstResult> {
    prim(dist.len(), dist.labels(), |a, b| dist.get(a, b))
}

/// Exact MST of the pooled point sample (class 1 first, then class 2), with
/// distances computed on the fly instead of materialising the matrix.
pub fn minimum_spanning_tree_points(data: &TwoSampleData) -> Result<MstResult> {
    let pooled: Vec<&[f64]> = data.points_f1().iter().chain(data.points_f2().iter()).collect();
    let (n1, n2) = data.class_counts();
    let mut labels = vec![Class::One; n1];
    labels.extend(std::iter::repeat_n(Class::Two, n2));
    prim(pooled.len(), &labels, |a, b| euclidean(pooled[a], pooled[b]))
}

/// `R`-based D̃ before clamping.
pub fn hp_dtilde_unclamped(cross_count: usize, m: usize, n: usize, norm: MstNormalization) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::SingleClass(if m == 0 { "2" } else { "1" }.into()));
    }
    let (r, m, n) = (cross_count as f64, m as f64, n as f64);
    Ok(match norm {
        MstNormalization::PriorWeighted => 1.0 - r * (m + n) / (2.0 * m * n),
        MstNormalization::Pooled => 1.0 - 2.0 * r / (m + n),
    })
}

/// `R`-based D̃ clamped to `[0, 1]`.
pub fn hp_dtilde_from_count(cross_count: usize, m: usize, n: usize, norm: MstNormalization) -> Result<f64> {
    Ok(hp_dtilde_unclamped(cross_count, m, n, norm)?.clamp(0.0, 1.0))
}

/// MST estimate of D̃ from a labelled distance matrix, default normalisation.
pub fn hp_dtilde_estimate(dist: &DistanceData) -> Result<f64> {
    let mst = minimum_spanning_tree(dist)?;
    let (m, n) = dist.class_counts();
    hp_dtilde_from_count(mst.cross_count, m, n, MstNormalization::default())
}

/// Writes the edge list as CSV with columns `i,j,weight,cross`.
pub fn write_edges_csv<W: Write>(result: &MstResult, labels: &[Class], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["i", "j", "weight", "cross"])?;
    for e in &result.edges {
        let cross = labels[e.i] != labels[e.j];
        wtr.write_record([
            e.i.to_string(),
            e.j.to_string(),
            e.weight.to_string(),
            cross.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<mst edges>", e))?;
    Ok(())
}
