//! Aggregation of tree-derived priority vectors.
//!
//! Every tree vector of expert `k` is replicated once per expert `l` and the
//! replica is rated by how closely the tree's consistent matrix matches
//! expert `l`'s judgments, scaled by both experts' competences and the
//! information weights of the tree and of `l`'s matrix. The aggregate is the
//! rating-weighted geometric (or arithmetic) mean over all replicas.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcm::Pcm;
use crate::spantree::{Icpcm, PriorityVector, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    #[default]
    Geometric,
    Arithmetic,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

fn check_lengths(vectors: &[&PriorityVector]) -> Result<usize> {
    let n = vectors.first().map(|v| v.len()).ok_or(Error::NoData)?;
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            got: v.len(),
        });
    }
    Ok(n)
}

/// Weighted mean of vectors, renormalized. `exponents` must be non-negative
/// with a positive sum; they are normalized here.
pub fn weighted_mean(
    vectors: &[&PriorityVector],
    exponents: &[f64],
    mean: MeanKind,
) -> Result<PriorityVector> {
    let n = check_lengths(vectors)?;
    if exponents.len() != vectors.len() {
        return Err(Error::Dimension {
            expected: vectors.len(),
            got: exponents.len(),
        });
    }
    let total = compensated_sum(exponents.iter().copied());
    if total.is_nan() || total <= 0.0 || exponents.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::NoData);
    }
    let weights: Vec<f64> = (0..n)
        .map(|j| match mean {
            MeanKind::Geometric => compensated_sum(
                vectors
                    .iter()
                    .zip(exponents)
                    .map(|(v, e)| e / total * v[j].ln()),
            )
            .exp(),
            MeanKind::Arithmetic => {
                compensated_sum(vectors.iter().zip(exponents).map(|(v, e)| e / total * v[j]))
            }
        })
        .collect();
    PriorityVector::normalized(weights)
}

/// Coordinate-wise geometric mean of all vectors, renormalized.
pub fn simple_aggregate(vectors: &[&PriorityVector]) -> Result<PriorityVector> {
    weighted_mean(vectors, &vec![1.0; vectors.len()], MeanKind::Geometric)
}

/// Consistent matrix `a_ij = w_i / w_j` of a priority vector.
pub fn icpcm_from_priorities(w: &PriorityVector) -> Icpcm {
    Icpcm::from_potentials(w.as_slice(), Source::Aggregate)
}

/// Rating of replica `(k, q, l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    /// Owner of the tree.
    pub k: usize,
    /// Tree index within expert `k`'s trees.
    pub q: usize,
    /// Expert whose matrix the tree is compared with.
    pub l: usize,
    pub value: f64,
}

/// Sum of `|a_uv(icpcm) - a_uv(other)|` over the upper-triangle cells
/// `other` provides.
pub fn deviation(icpcm: &Icpcm, other: &Pcm) -> f64 {
    compensated_sum(
        other
            .upper_cells()
            .map(|(u, v, cell)| (icpcm.get(u, v) - cell.value).abs()),
    )
}

/// `c_k * c_l * s_kq * s_l / ln(deviation + e)`.
pub fn rating(icpcm: &Icpcm, other: &Pcm, c_k: f64, c_l: f64, s_kq: f64, s_l: f64) -> f64 {
    if other.upper_cells().next().is_none() {
        tracing::warn!(
            expert = other.expert(),
            "rating against a matrix without judgments; deviation taken as 0"
        );
    }
    c_k * c_l * s_kq * s_l / (deviation(icpcm, other) + E).ln()
}

/// A tree-derived vector with its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeVector {
    pub expert: usize,
    pub index: usize,
    pub w: PriorityVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub w: PriorityVector,
    pub ratings: Vec<Rating>,
    /// Number of trees.
    pub trees: usize,
    /// Number of rated replicas, `m * trees`.
    pub replicas: usize,
}

impl AggregateResult {
    pub fn icpcm(&self) -> Icpcm {
        icpcm_from_priorities(&self.w)
    }
}

/// Normalized exponent of every tree: the sum of its replicas' ratings
/// divided by the total rating. `trees` and the returned vector share order.
pub fn tree_exponents(trees: &[TreeVector], ratings: &[Rating]) -> Result<Vec<f64>> {
    let mut per_tree = vec![Vec::new(); trees.len()];
    let position: std::collections::HashMap<(usize, usize), usize> = trees
        .iter()
        .enumerate()
        .map(|(p, t)| ((t.expert, t.index), p))
        .collect();
    for r in ratings {
        let p = *position.get(&(r.k, r.q)).ok_or_else(|| {
            Error::InvalidSession(format!("rating for unknown tree ({}, {})", r.k, r.q))
        })?;
        per_tree[p].push(r.value);
    }
    let total = compensated_sum(ratings.iter().map(|r| r.value));
    if total.is_nan() || total <= 0.0 {
        return Err(Error::NoData);
    }
    Ok(per_tree
        .into_iter()
        .map(|rs| compensated_sum(rs) / total)
        .collect())
}

/// Rating-weighted mean over all replicas.
pub fn weighted_aggregate(
    trees: &[TreeVector],
    ratings: &[Rating],
    mean: MeanKind,
) -> Result<AggregateResult> {
    let exponents = tree_exponents(trees, ratings)?;
    let vectors: Vec<&PriorityVector> = trees.iter().map(|t| &t.w).collect();
    let w = weighted_mean(&vectors, &exponents, mean)?;
    Ok(AggregateResult {
        w,
        ratings: ratings.to_vec(),
        trees: trees.len(),
        replicas: ratings.len(),
    })
}
