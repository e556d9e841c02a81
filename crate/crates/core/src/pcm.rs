//! Individual incomplete pairwise comparison matrices and completeness of
//! the group's combined comparison graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::{to_unified, Scale, UnifiedScale};

/// Which alternative of the pair `(i, j)` is preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `i` dominates: the stored ratio is the grade itself.
    #[default]
    Row,
    /// `j` dominates: the stored ratio is the reciprocal of the grade.
    Col,
}

/// What the expert said about a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    /// A grade of the expert's scale, 1-based.
    Grade { grade: u32, direction: Direction },
    /// A ratio `a_ij` given directly, e.g. an accepted revision.
    Ratio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub expert: usize,
    pub i: usize,
    pub j: usize,
    pub scale: Scale,
    pub estimate: Estimate,
}

impl Judgment {
    pub fn graded(
        expert: usize,
        i: usize,
        j: usize,
        grade: u32,
        scale: Scale,
        direction: Direction,
    ) -> Self {
        Self {
            expert,
            i,
            j,
            scale,
            estimate: Estimate::Grade { grade, direction },
        }
    }

    pub fn ratio(expert: usize, i: usize, j: usize, value: f64, scale: Scale) -> Self {
        Self {
            expert,
            i,
            j,
            scale,
            estimate: Estimate::Ratio(value),
        }
    }

    /// The ratio `a_ij` in the unified scale.
    pub fn unified_ratio(&self, unified: UnifiedScale) -> Result<f64> {
        match self.estimate {
            Estimate::Grade { grade, direction } => {
                let g = f64::from(to_unified(grade, self.scale, unified)?);
                Ok(match direction {
                    Direction::Row => g,
                    Direction::Col => 1.0 / g,
                })
            }
            Estimate::Ratio(v) if v.is_finite() && v > 0.0 => Ok(v),
            Estimate::Ratio(v) => Err(Error::InvalidJudgment(format!(
                "ratio {v} must be finite and positive"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    pub scale: Scale,
}

/// One expert's reciprocal, possibly incomplete comparison matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcm {
    n: usize,
    expert: usize,
    cells: Vec<Option<Cell>>,
}

impl Pcm {
    pub fn empty(n: usize, expert: usize) -> Self {
        Self {
            n,
            expert,
            cells: vec![None; n * n],
        }
    }

    /// Builds a complete matrix from upper-triangle values `a_ij` (i < j),
    /// all tagged with one scale. Row-major order over the upper triangle.
    pub fn complete(n: usize, expert: usize, upper: &[f64], scale: Scale) -> Result<Self> {
        if upper.len() != n * (n.saturating_sub(1)) / 2 {
            return Err(Error::Dimension {
                expected: n * (n.saturating_sub(1)) / 2,
                got: upper.len(),
            });
        }
        let mut pcm = Self::empty(n, expert);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                pcm.set(i, j, *it.next().unwrap(), scale)?;
            }
        }
        Ok(pcm)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn expert(&self) -> usize {
        self.expert
    }

    /// Ratio at `(i, j)`; the diagonal is always 1.
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(1.0);
        }
        self.cells[i * self.n + j].map(|c| c.value)
    }

    pub fn cell(&self, i: usize, j: usize) -> Option<Cell> {
        if i == j {
            return None;
        }
        self.cells[i * self.n + j]
    }

    pub fn is_present(&self, i: usize, j: usize) -> bool {
        i != j && self.cells[i * self.n + j].is_some()
    }

    /// Stores `a_ij = value` and its reciprocal, replacing any previous entry.
    pub fn set(&mut self, i: usize, j: usize, value: f64, scale: Scale) -> Result<()> {
        self.check_pair(i, j)?;
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidJudgment(format!(
                "ratio {value} must be finite and positive"
            )));
        }
        self.cells[i * self.n + j] = Some(Cell { value, scale });
        self.cells[j * self.n + i] = Some(Cell {
            value: 1.0 / value,
            scale,
        });
        Ok(())
    }

    pub fn clear(&mut self, i: usize, j: usize) {
        if i < self.n && j < self.n && i != j {
            self.cells[i * self.n + j] = None;
            self.cells[j * self.n + i] = None;
        }
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::InvalidJudgment(format!(
                "pair ({i}, {j}) outside 0..{}",
                self.n
            )));
        }
        if i == j {
            return Err(Error::InvalidJudgment(format!(
                "diagonal pair ({i}, {i}) cannot be judged"
            )));
        }
        Ok(())
    }

    /// Present upper-triangle cells as `(i, j, cell)` with `i < j`.
    pub fn upper_cells(&self) -> impl Iterator<Item = (usize, usize, Cell)> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..self.n).filter_map(move |j| self.cells[i * self.n + j].map(|c| (i, j, c)))
        })
    }

    /// Scales of all upper-triangle cells, `None` where missing.
    pub fn upper_scales(&self) -> impl Iterator<Item = Option<Scale>> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..self.n).map(move |j| self.cells[i * self.n + j].map(|c| c.scale))
        })
    }

    pub fn is_complete(&self) -> bool {
        self.upper_cells().count() == self.n * (self.n - 1) / 2
    }

    pub fn graph(&self) -> ComparisonGraph {
        ComparisonGraph::new(self.n, self.upper_cells().map(|(i, j, _)| (i, j)))
    }
}

/// Builds one expert's matrix from their judgments, converting grades into
/// the unified scale. A pair judged twice with different ratios is a
/// conflict; a consistent repeat (including the reciprocal form) is allowed.
pub fn build_pcm(
    judgments: &[Judgment],
    n: usize,
    expert: usize,
    unified: UnifiedScale,
) -> Result<Pcm> {
    let mut pcm = Pcm::empty(n, expert);
    for judgment in judgments.iter().filter(|jd| jd.expert == expert) {
        pcm.check_pair(judgment.i, judgment.j)?;
        let value = judgment.unified_ratio(unified)?;
        if let Some(existing) = pcm.value(judgment.i, judgment.j) {
            if (existing - value).abs() > 1e-12 * existing.max(value) {
                return Err(Error::Conflict {
                    expert,
                    i: judgment.i.min(judgment.j),
                    j: judgment.i.max(judgment.j),
                });
            }
        }
        pcm.set(judgment.i, judgment.j, value, judgment.scale)?;
    }
    Ok(pcm)
}

/// Undirected graph over alternatives whose edges are the judged pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl ComparisonGraph {
    /// Edges are normalized to `(min, max)`, sorted and deduplicated;
    /// self-loops are dropped.
    pub fn new<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Self {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|(i, j)| i != j && *i < n && *j < n)
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self { n, edges }
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Union of the graphs of several matrices.
    pub fn union<'a, I: IntoIterator<Item = &'a Pcm>>(n: usize, pcms: I) -> Self {
        Self::new(
            n,
            pcms.into_iter()
                .flat_map(|p| p.upper_cells().map(|(i, j, _)| (i, j)).collect::<Vec<_>>()),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut dsu = DisjointSet::new(self.n);
        for &(i, j) in &self.edges {
            dsu.union(i, j);
        }
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for v in 0..self.n {
            by_root[dsu.find(v)].push(v);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().len() == 1
    }
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false if `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessReport {
    /// Per expert, in input order: can at least one spanning tree be built
    /// from that expert's own matrix?
    pub expert_connected: Vec<bool>,
    pub union_connected: bool,
    pub components: Vec<Vec<usize>>,
    /// Pairs whose judgment would connect the union graph; empty iff it is
    /// already connected.
    pub suggested_edges: Vec<(usize, usize)>,
}

impl CompletenessReport {
    pub fn disconnected_experts(&self) -> impl Iterator<Item = usize> + '_ {
        self.expert_connected
            .iter()
            .enumerate()
            .filter(|(_, c)| !**c)
            .map(|(k, _)| k)
    }
}

/// Decides connectivity of each expert's graph and of the union graph.
/// Components are chained through their lowest-index vertices.
pub fn check_completeness(n: usize, pcms: &[Pcm]) -> Result<CompletenessReport> {
    if let Some(p) = pcms.iter().find(|p| p.n() != n) {
        return Err(Error::Dimension {
            expected: n,
            got: p.n(),
        });
    }
    let expert_connected = pcms.iter().map(|p| p.graph().is_connected()).collect();
    let union = ComparisonGraph::union(n, pcms);
    let components = union.components();
    let suggested_edges = components
        .windows(2)
        .map(|pair| (pair[0][0], pair[1][0]))
        .collect();
    Ok(CompletenessReport {
        expert_connected,
        union_connected: components.len() <= 1,
        components,
        suggested_edges,
    })
}
