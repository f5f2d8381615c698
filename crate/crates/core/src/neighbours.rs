//! Exact R-nearest-neighbour search with a median-split KD-tree.
//!
//! Results are ordered by ascending squared Euclidean distance, ties broken
//! by the smaller point index, so the tree and the brute-force scan agree
//! exactly.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// `n` points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("point dimension must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::LengthMismatch { expected: coords.len() / dim * dim, found: coords.len() });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("point coordinates must be finite"));
        }
        Ok(PointSet { coords, dim })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    /// Slice `start..end` of the tree's index permutation.
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a PointSet,
    nodes: Vec<Node>,
    indices: Vec<usize>,
}

/// Build a tree splitting at the median and cycling through the axes.
pub fn build_kdtree(points: &PointSet, leaf_size: usize) -> Result<KdTree<'_>> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let leaf_size = leaf_size.max(1);
    let mut tree = KdTree { points, nodes: Vec::new(), indices: (0..points.len()).collect() };
    tree.build(0, points.len(), 0, leaf_size);
    Ok(tree)
}

impl<'a> KdTree<'a> {
    fn build(&mut self, start: usize, end: usize, depth: usize, leaf_size: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= leaf_size {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = depth % self.points.dim();
        let mid = (end - start) / 2;
        let points = self.points;
        self.indices[start..end].select_nth_unstable_by(mid, |&i, &j| {
            points.point(i)[axis].total_cmp(&points.point(j)[axis])
        });
        let value = points.point(self.indices[start + mid])[axis];
        self.nodes.push(Node::Leaf { start, end }); // placeholder
        let left = self.build(start, start + mid, depth + 1, leaf_size);
        let right = self.build(start + mid, end, depth + 1, leaf_size);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn points(&self) -> &PointSet {
        self.points
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Check the structural invariants: each index in exactly one leaf, and
    /// every split separates its subtrees on its axis.
    pub fn validate(&self) -> bool {
        let mut seen = vec![0usize; self.points.len()];
        let ok = self.validate_node(0, &mut seen);
        ok && seen.iter().all(|&c| c == 1)
    }

    fn subtree_indices(&self, id: usize, out: &mut Vec<usize>) {
        match self.nodes[id] {
            Node::Leaf { start, end } => out.extend_from_slice(&self.indices[start..end]),
            Node::Split { left, right, .. } => {
                self.subtree_indices(left, out);
                self.subtree_indices(right, out);
            }
        }
    }

    fn validate_node(&self, id: usize, seen: &mut [usize]) -> bool {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.indices[start..end] {
                    seen[i] += 1;
                }
                true
            }
            Node::Split { axis, value, left, right } => {
                let mut l = Vec::new();
                let mut r = Vec::new();
                self.subtree_indices(left, &mut l);
                self.subtree_indices(right, &mut r);
                let left_ok = l.iter().all(|&i| self.points.point(i)[axis] <= value);
                let right_ok = r.iter().all(|&i| self.points.point(i)[axis] >= value);
                left_ok && right_ok && self.validate_node(left, seen) && self.validate_node(right, seen)
            }
        }
    }

    pub fn knn(&self, query: &[f64], r: usize) -> Result<Vec<usize>> {
        knn_query(self, query, r)
    }
}

/// Candidate ordered by (squared distance, index); the max-heap top is the
/// current worst neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    dist_bits: u64,
    index: usize,
}

impl Candidate {
    fn new(d2: f64, index: usize) -> Self {
        // Bit patterns of nonnegative floats sort like the floats.
        Candidate { dist_bits: d2.to_bits(), index }
    }
}

fn check_query(points: &PointSet, query: &[f64], r: usize) -> Result<()> {
    if query.len() != points.dim() {
        return Err(Error::LengthMismatch { expected: points.dim(), found: query.len() });
    }
    if r == 0 {
        return Err(Error::InvalidArgument("neighbour count must be positive"));
    }
    if r > points.len() {
        return Err(Error::TooManyNeighbours { requested: r, available: points.len() });
    }
    Ok(())
}

fn finish(heap: BinaryHeap<Candidate>) -> Vec<usize> {
    heap.into_sorted_vec().into_iter().map(|c| c.index).collect()
}

/// The `r` stored points closest to `query`.
pub fn knn_query(tree: &KdTree<'_>, query: &[f64], r: usize) -> Result<Vec<usize>> {
    check_query(tree.points, query, r)?;
    let mut heap = BinaryHeap::with_capacity(r + 1);
    search(tree, 0, query, r, &mut heap);
    Ok(finish(heap))
}

fn search(tree: &KdTree<'_>, id: usize, query: &[f64], r: usize, heap: &mut BinaryHeap<Candidate>) {
    match tree.nodes[id] {
        Node::Leaf { start, end } => {
            for &i in &tree.indices[start..end] {
                let c = Candidate::new(squared_distance(tree.points.point(i), query), i);
                if heap.len() < r {
                    heap.push(c);
                } else if c < *heap.peek().expect("heap holds r > 0 items") {
                    heap.pop();
                    heap.push(c);
                }
            }
        }
        Node::Split { axis, value, left, right } => {
            let diff = query[axis] - value;
            let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
            search(tree, near, query, r, heap);
            // `<=`: an equidistant point with a smaller index may sit across the split.
            let worst = heap.peek().map(|c| f64::from_bits(c.dist_bits));
            if heap.len() < r || worst.is_some_and(|w| diff * diff <= w) {
                search(tree, far, query, r, heap);
            }
        }
    }
}

/// Full scan; reference for [`knn_query`].
pub fn knn_brute_force(points: &PointSet, query: &[f64], r: usize) -> Result<Vec<usize>> {
    check_query(points, query, r)?;
    let mut all: Vec<Candidate> =
        (0..points.len()).map(|i| Candidate::new(squared_distance(points.point(i), query), i)).collect();
    all.sort_unstable();
    all.truncate(r);
    Ok(all.into_iter().map(|c| c.index).collect())
}

/// Sparsity pattern for the truncated transport problem between two clouds.
///
/// Row `α` admits column `β` if `β` is among the `r` nearest neighbours of
/// `from[α]` in `to`, or `α` is among the `r` nearest neighbours of `to[β]`
/// in `from`. Taking both directions guarantees no empty row or column.
/// Returns CSR `(row_ptr, cols)` with sorted columns.
pub fn symmetric_knn_support(
    from: &PointSet,
    to: &PointSet,
    r: usize,
    leaf_size: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if from.len() != to.len() {
        return Err(Error::LengthMismatch { expected: from.len(), found: to.len() });
    }
    if from.dim() != to.dim() {
        return Err(Error::LengthMismatch { expected: from.dim(), found: to.dim() });
    }
    let n = from.len();
    let mut rows: Vec<Vec<usize>> = vec![Vec::with_capacity(2 * r); n];
    let to_tree = build_kdtree(to, leaf_size)?;
    for (alpha, row) in rows.iter_mut().enumerate() {
        row.extend(knn_query(&to_tree, from.point(alpha), r)?);
    }
    let from_tree = build_kdtree(from, leaf_size)?;
    for beta in 0..n {
        for alpha in knn_query(&from_tree, to.point(beta), r)? {
            rows[alpha].push(beta);
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(2 * r * n);
    row_ptr.push(0);
    for mut row in rows {
        row.sort_unstable();
        row.dedup();
        cols.extend(row);
        row_ptr.push(cols.len());
    }
    Ok((row_ptr, cols))
}
