//! Exact kd-tree returning the `k` smallest Euclidean distances.
//!
//! Distances are computed with [`crate::dataset::euclidean`], the same
//! arithmetic the brute-force scan uses, so both paths return identical
//! values. Pruning only skips subtrees whose every point is at least as far
//! as the current `k`-th candidate; such points cannot change the multiset of
//! returned distances.

use crate::dataset::{squared_euclidean, PointSet};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    /// Point coordinates permuted into tree order.
    coords: Vec<f64>,
    /// Original index of each permuted point.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &PointSet) -> Self {
        let dim = points.dim();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            build_node(points, &mut order, 0, &mut nodes);
        }
        let mut coords = Vec::with_capacity(points.coords().len());
        for &i in &order {
            coords.extend_from_slice(points.point(i));
        }
        Self {
            dim,
            coords,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The `k` smallest distances from `query` to the indexed points other
    /// than `exclude`, in ascending order. Fewer are returned when fewer
    /// points are eligible.
    pub fn nearest_distances(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<f64> {
        debug_assert_eq!(query.len(), self.dim);
        let mut best = Candidates::new(k);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, exclude, &mut best);
        }
        best.into_sorted_distances()
    }

    fn search(&self, node: usize, query: &[f64], exclude: Option<usize>, best: &mut Candidates) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    if Some(self.order[slot]) == exclude {
                        continue;
                    }
                    let p = &self.coords[slot * self.dim..(slot + 1) * self.dim];
                    best.offer(squared_euclidean(query, p));
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, exclude, best);
                if !best.is_full() || diff * diff < best.worst() {
                    self.search(far, query, exclude, best);
                }
            }
        }
    }
}

fn build_node(points: &PointSet, order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let axis = widest_axis(points, order);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points.point(a)[axis].total_cmp(&points.point(b)[axis]));
    let value = points.point(order[mid])[axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(points, lo, offset, nodes);
    let right = build_node(points, hi, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

fn widest_axis(points: &PointSet, order: &[usize]) -> usize {
    let dim = points.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in order {
        for (a, &c) in points.point(i).iter().enumerate() {
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
    }
    (0..dim)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0)
}

/// Bounded ascending list of squared distances.
struct Candidates {
    k: usize,
    sq: Vec<f64>,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Self {
            k,
            sq: Vec::with_capacity(k + 1),
        }
    }

    fn is_full(&self) -> bool {
        self.sq.len() == self.k
    }

    fn worst(&self) -> f64 {
        self.sq.last().copied().unwrap_or(f64::INFINITY)
    }

    fn offer(&mut self, d2: f64) {
        if self.is_full() && d2 >= self.worst() {
            return;
        }
        let at = self.sq.partition_point(|&x| x <= d2);
        self.sq.insert(at, d2);
        self.sq.truncate(self.k);
    }

    fn into_sorted_distances(self) -> Vec<f64> {
        self.sq.into_iter().map(f64::sqrt).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::euclidean;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &PointSet, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<f64> {
        let mut d: Vec<f64> = (0..points.len())
            .filter(|&i| Some(i) != exclude)
            .map(|i| euclidean(q, points.point(i)))
            .collect();
        d.sort_by(f64::total_cmp);
        d.truncate(k);
        d
    }

    #[test]
    fn matches_brute_force_with_and_without_exclusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [1, 2, 3, 7] {
            let coords: Vec<f64> = (0..300 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let points = PointSet::new(dim, coords).unwrap();
            let tree = KdTree::build(&points);
            for i in (0..300).step_by(17) {
                let q = points.point(i);
                for k in [1, 5, 30] {
                    assert_eq!(tree.nearest_distances(q, k, Some(i)), brute(&points, q, k, Some(i)));
                    assert_eq!(tree.nearest_distances(q, k, None), brute(&points, q, k, None));
                }
            }
        }
    }

    #[test]
    fn handles_heavy_ties() {
        // Many identical coordinates force equal split values.
        let coords: Vec<f64> = (0..200).map(|i| (i % 3) as f64).collect();
        let points = PointSet::new(1, coords).unwrap();
        let tree = KdTree::build(&points);
        for k in [1, 50, 100, 199] {
            assert_eq!(
                tree.nearest_distances(&[1.0], k, Some(0)),
                brute(&points, &[1.0], k, Some(0))
            );
        }
    }

    #[test]
    fn returns_fewer_when_short() {
        let points = PointSet::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let tree = KdTree::build(&points);
        assert_eq!(tree.nearest_distances(&[0.0], 5, Some(0)), vec![1.0, 3.0]);
    }
}
