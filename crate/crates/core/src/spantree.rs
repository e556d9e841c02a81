//! Spanning-tree enumeration over comparison graphs, reconstruction of the
//! ideally consistent matrix each tree induces, and its priority vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcm::{ComparisonGraph, DisjointSet, Pcm};
use crate::scale::Scale;

/// Enumeration is refused above this many alternatives.
pub const MAX_ALTERNATIVES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub i: usize,
    pub j: usize,
    /// `a_ij` in the unified scale.
    pub ratio: f64,
    pub scale: Scale,
}

/// A basic comparison set: `n - 1` judgments connecting all alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningTree {
    pub expert: usize,
    pub index: usize,
    pub n: usize,
    pub edges: Vec<TreeEdge>,
}

impl SpanningTree {
    pub fn scales(&self) -> Vec<Option<Scale>> {
        self.edges.iter().map(|e| Some(e.scale)).collect()
    }
}

/// Calls `visit` with the edge list of every spanning tree of `graph`, in a
/// deterministic order, each exactly once. Returns the number of trees.
///
/// Binary include/exclude search over the sorted edge list. An edge is
/// included when it joins two components of the partial forest and excluded
/// only when the remaining edges can still connect the graph, so every
/// branch ends in a tree.
pub fn for_each_spanning_tree<F>(graph: &ComparisonGraph, mut visit: F) -> Result<usize>
where
    F: FnMut(&[(usize, usize)]),
{
    let n = graph.n();
    if n > MAX_ALTERNATIVES {
        return Err(Error::Resource(format!(
            "spanning-tree enumeration is limited to {MAX_ALTERNATIVES} alternatives, got {n}"
        )));
    }
    if n < 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: n,
        });
    }
    if !graph.is_connected() {
        return Ok(0);
    }
    let edges = graph.edges();
    let mut chosen = Vec::with_capacity(n - 1);
    let mut count = 0;
    search(n, edges, 0, &mut chosen, &mut count, &mut visit);
    Ok(count)
}

fn search<F>(
    n: usize,
    edges: &[(usize, usize)],
    next: usize,
    chosen: &mut Vec<usize>,
    count: &mut usize,
    visit: &mut F,
) where
    F: FnMut(&[(usize, usize)]),
{
    if chosen.len() == n - 1 {
        let tree: Vec<(usize, usize)> = chosen.iter().map(|&e| edges[e]).collect();
        *count += 1;
        visit(&tree);
        return;
    }
    if next == edges.len() {
        return;
    }

    let mut forest = DisjointSet::new(n);
    for &e in chosen.iter() {
        forest.union(edges[e].0, edges[e].1);
    }
    let (a, b) = edges[next];
    if forest.find(a) != forest.find(b) {
        chosen.push(next);
        search(n, edges, next + 1, chosen, count, visit);
        chosen.pop();
    }

    // Exclude `next` only if the chosen forest plus the later edges still
    // spans the graph.
    let mut reach = forest;
    let mut joins = 0;
    for &(u, v) in &edges[next + 1..] {
        if reach.union(u, v) {
            joins += 1;
        }
    }
    if chosen.len() + joins == n - 1 {
        search(n, edges, next + 1, chosen, count, visit);
    }
}

/// All spanning trees of `graph` as edge lists. A disconnected graph has none.
pub fn enumerate_trees(graph: &ComparisonGraph) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut trees = Vec::new();
    for_each_spanning_tree(graph, |t| trees.push(t.to_vec()))?;
    Ok(trees)
}

/// All spanning trees of one expert's matrix, carrying the judged ratios.
pub fn expert_trees(pcm: &Pcm) -> Result<Vec<SpanningTree>> {
    let mut trees = Vec::new();
    for_each_spanning_tree(&pcm.graph(), |edges| {
        let edges = edges
            .iter()
            .map(|&(i, j)| {
                let cell = pcm.cell(i, j).expect("tree edge comes from the matrix");
                TreeEdge {
                    i,
                    j,
                    ratio: cell.value,
                    scale: cell.scale,
                }
            })
            .collect();
        trees.push(SpanningTree {
            expert: pcm.expert(),
            index: trees.len(),
            n: pcm.n(),
            edges,
        });
    })?;
    Ok(trees)
}

/// Where an ideally consistent matrix or a priority vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Tree { expert: usize, index: usize },
    Aggregate,
}

/// An ideally consistent, complete, positive reciprocal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Icpcm {
    n: usize,
    a: Vec<f64>,
    source: Source,
}

impl Icpcm {
    /// Matrix `a_ij = x_i / x_j` for positive potentials `x`.
    pub(crate) fn from_potentials(x: &[f64], source: Source) -> Self {
        let n = x.len();
        let mut a = vec![1.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a[i * n + j] = x[i] / x[j];
                }
            }
        }
        Self { n, a, source }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn source(&self) -> Source {
        self.source
    }

    /// Largest relative violation of `a_ij * a_jl = a_il`.
    pub fn consistency_error(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let lhs = self.get(i, j) * self.get(j, l);
                    let rhs = self.get(i, l);
                    worst = worst.max((lhs - rhs).abs() / rhs);
                }
            }
        }
        worst
    }
}

/// Reconstructs the ideally consistent matrix of a spanning tree: each entry
/// is the product of the edge ratios along the unique tree path.
pub fn reconstruct_icpcm(tree: &SpanningTree) -> Icpcm {
    let n = tree.n;
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &tree.edges {
        adjacency[e.i].push((e.j, e.ratio));
        adjacency[e.j].push((e.i, 1.0 / e.ratio));
    }
    let mut a = vec![f64::NAN; n * n];
    for root in 0..n {
        // path products from `root`: a[root][v]
        a[root * n + root] = 1.0;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            let to_u = a[root * n + u];
            for &(v, ratio_uv) in &adjacency[u] {
                if a[root * n + v].is_nan() {
                    a[root * n + v] = to_u * ratio_uv;
                    stack.push(v);
                }
            }
        }
    }
    debug_assert!(
        a.iter().all(|x| x.is_finite()),
        "tree must span all vertices"
    );
    Icpcm {
        n,
        a,
        source: Source::Tree {
            expert: tree.expert,
            index: tree.index,
        },
    }
}

/// Normalized positive weights of the alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorityVector(Vec<f64>);

impl PriorityVector {
    /// Normalizes positive weights to sum 1.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::NoData);
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidJudgment(
                "priority weights must be finite and positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn linf_distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for PriorityVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Priorities from column `column` of a consistent matrix:
/// `w_i = a_il / sum_k a_kl`.
pub fn priorities_from_column(icpcm: &Icpcm, column: usize) -> PriorityVector {
    let col: Vec<f64> = (0..icpcm.n()).map(|i| icpcm.get(i, column)).collect();
    PriorityVector::normalized(col).expect("consistent matrix entries are positive")
}

pub fn priorities_from_icpcm(icpcm: &Icpcm) -> PriorityVector {
    priorities_from_column(icpcm, 0)
}

/// Priority vector of a tree directly from its edges, without building the
/// full matrix.
pub fn tree_priorities(tree: &SpanningTree) -> PriorityVector {
    let icpcm = reconstruct_icpcm(tree);
    priorities_from_icpcm(&icpcm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn s9() -> Scale {
        Scale::new(9).unwrap()
    }

    fn tree(n: usize, edges: &[(usize, usize, f64)]) -> SpanningTree {
        SpanningTree {
            expert: 0,
            index: 0,
            n,
            edges: edges
                .iter()
                .map(|&(i, j, ratio)| TreeEdge {
                    i,
                    j,
                    ratio,
                    scale: s9(),
                })
                .collect(),
        }
    }

    /// Oracle: test every (n-1)-subset of edges for being acyclic.
    fn brute_force_trees(graph: &ComparisonGraph) -> HashSet<Vec<(usize, usize)>> {
        let edges = graph.edges();
        let n = graph.n();
        let mut out = HashSet::new();
        for mask in 0u32..(1 << edges.len()) {
            if mask.count_ones() as usize != n - 1 {
                continue;
            }
            let mut dsu = DisjointSet::new(n);
            let subset: Vec<(usize, usize)> = (0..edges.len())
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| edges[b])
                .collect();
            if subset.iter().all(|&(u, v)| dsu.union(u, v)) {
                out.insert(subset);
            }
        }
        out
    }

    #[test]
    fn cayley_counts() {
        for n in 2..=7 {
            let count = for_each_spanning_tree(&ComparisonGraph::complete(n), |_| {}).unwrap();
            assert_eq!(count, n.pow(n as u32 - 2), "n = {n}");
        }
    }

    #[test]
    fn path_graph_has_one_tree() {
        let g = ComparisonGraph::new(4, [(0, 1), (1, 2), (2, 3)]);
        assert_eq!(
            enumerate_trees(&g).unwrap(),
            vec![vec![(0, 1), (1, 2), (2, 3)]]
        );
    }

    #[test]
    fn disconnected_graph_has_no_trees() {
        let g = ComparisonGraph::new(4, [(0, 1), (2, 3)]);
        assert!(enumerate_trees(&g).unwrap().is_empty());
    }

    #[test]
    fn refuses_oversized_problems() {
        assert!(matches!(
            enumerate_trees(&ComparisonGraph::complete(13)),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        // all graphs on 5 vertices with a fixed pseudo-random subset pattern
        let all = ComparisonGraph::complete(5);
        for mask in (0u32..1024).step_by(7) {
            let edges: Vec<(usize, usize)> = all
                .edges()
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, e)| *e)
                .collect();
            let g = ComparisonGraph::new(5, edges);
            let trees = enumerate_trees(&g).unwrap();
            let set: HashSet<_> = trees.iter().cloned().collect();
            assert_eq!(set.len(), trees.len(), "duplicates for mask {mask}");
            assert_eq!(set, brute_force_trees(&g), "mask {mask}");
        }
    }

    #[test]
    fn path_product_examples() {
        let m = reconstruct_icpcm(&tree(3, &[(0, 1, 2.0), (1, 2, 2.0)]));
        assert!((m.get(0, 2) - 4.0).abs() < 1e-12);

        let m = reconstruct_icpcm(&tree(3, &[(0, 1, 2.0), (0, 2, 8.0)]));
        assert!((m.get(1, 2) - 4.0).abs() < 1e-12);
        assert!((m.get(1, 0) * m.get(0, 2) - m.get(1, 2)).abs() < 1e-12);
        assert!(m.consistency_error() < 1e-12);
    }

    #[test]
    fn consistent_pcm_trees_reproduce_it() {
        let w = [0.4, 0.3, 0.2, 0.1];
        let upper: Vec<f64> = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| w[i] / w[j]))
            .collect();
        let pcm = Pcm::complete(4, 0, &upper, s9()).unwrap();
        let trees = expert_trees(&pcm).unwrap();
        assert_eq!(trees.len(), 16);
        for t in &trees {
            let m = reconstruct_icpcm(t);
            for i in 0..4 {
                for j in 0..4 {
                    let expected = pcm.value(i, j).unwrap();
                    assert!((m.get(i, j) - expected).abs() < 1e-12 * expected);
                }
            }
        }
    }

    #[test]
    fn priority_examples() {
        let ones = Icpcm::from_potentials(&[1.0; 4], Source::Aggregate);
        for x in priorities_from_icpcm(&ones).as_slice() {
            assert!((x - 0.25).abs() < 1e-15);
        }

        let m = reconstruct_icpcm(&tree(3, &[(0, 1, 2.0), (1, 2, 2.0)]));
        for col in 0..3 {
            let w = priorities_from_column(&m, col);
            let expected = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
            assert!(w.linf_distance(&expected) < 1e-12, "column {col}");
        }

        let m = Icpcm::from_potentials(&[0.5, 0.3, 0.2], Source::Aggregate);
        assert!(priorities_from_icpcm(&m).linf_distance(&[0.5, 0.3, 0.2]) < 1e-12);
    }

    fn arb_tree(n: usize) -> impl Strategy<Value = SpanningTree> {
        // random labelled tree: vertex v attaches to a parent < v, then relabel
        (
            prop::collection::vec(0usize..1000, n - 1),
            prop::collection::vec(0.1f64..10.0, n - 1),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
            .prop_map(move |(parents, ratios, perm)| {
                let edges: Vec<(usize, usize, f64)> = (1..n)
                    .map(|v| (perm[parents[v - 1] % v], perm[v], ratios[v - 1]))
                    .collect();
                tree(n, &edges)
            })
    }

    proptest! {
        #[test]
        fn reconstructed_matrices_are_consistent(t in arb_tree(6)) {
            let m = reconstruct_icpcm(&t);
            prop_assert!(m.consistency_error() < 1e-9);
            for e in &t.edges {
                prop_assert!((m.get(e.i, e.j) - e.ratio).abs() < 1e-12 * e.ratio);
            }
        }

        #[test]
        fn priorities_column_invariant(t in arb_tree(5)) {
            let m = reconstruct_icpcm(&t);
            let w0 = priorities_from_column(&m, 0);
            prop_assert!((w0.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for col in 1..5 {
                prop_assert!(priorities_from_column(&m, col).linf_distance(w0.as_slice()) < 1e-9);
            }
            let again = PriorityVector::normalized(w0.as_slice().to_vec()).unwrap();
            prop_assert!(again.linf_distance(w0.as_slice()) < 1e-15);
        }

        #[test]
        fn scaling_one_edge_follows_transitivity(t in arb_tree(5), lambda in 0.2f64..5.0) {
            let base = tree_priorities(&t);
            let mut scaled = t.clone();
            let e = scaled.edges[0];
            scaled.edges[0].ratio *= lambda;
            let w = tree_priorities(&scaled);
            // vertices on e.i's side of the cut gain a factor lambda relative to e.j's side
            let mut side = [false; 5];
            side[e.i] = true;
            let mut changed = true;
            while changed {
                changed = false;
                for f in &t.edges[1..] {
                    if side[f.i] != side[f.j] {
                        side[f.i] = true;
                        side[f.j] = true;
                        changed = true;
                    }
                }
            }
            let raw: Vec<f64> = (0..5).map(|v| if side[v] { base[v] * lambda } else { base[v] }).collect();
            let expected = PriorityVector::normalized(raw).unwrap();
            prop_assert!(w.linf_distance(expected.as_slice()) < 1e-9);
        }

        #[test]
        fn round_trip_through_ratios(raw in prop::collection::vec(0.01f64..1.0, 2..8)) {
            let w = PriorityVector::normalized(raw).unwrap();
            let m = Icpcm::from_potentials(w.as_slice(), Source::Aggregate);
            prop_assert!(priorities_from_icpcm(&m).linf_distance(w.as_slice()) < 1e-9);
        }
    }
}
