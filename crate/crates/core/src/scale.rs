//! Estimation scales, grade unification and Hartley information weights.
//!
//! A scale with `N` grades carries `log2 N` bits of information. A spanning
//! tree is weighted by the geometric mean of its edges' weights, and a whole
//! comparison matrix by the geometric mean over its upper triangle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An estimation scale identified by its number of grades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scale(u32);

impl Scale {
    pub fn new(grades: u32) -> Result<Self> {
        if grades < 2 {
            return Err(Error::InvalidJudgment(format!(
                "a scale needs at least 2 grades, got {grades}"
            )));
        }
        Ok(Self(grades))
    }

    pub fn grades(self) -> u32 {
        self.0
    }

    pub fn hartley_weight(self) -> f64 {
        f64::from(self.0).log2()
    }
}

/// The most detailed scale used in a session; every judgment is mapped into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedScale(Scale);

impl UnifiedScale {
    pub fn new(scale: Scale) -> Self {
        Self(scale)
    }

    /// The largest scale among `scales`, or `None` for an empty input.
    pub fn covering<I: IntoIterator<Item = Scale>>(scales: I) -> Option<Self> {
        scales.into_iter().max().map(Self)
    }

    pub fn grades(self) -> u32 {
        self.0.grades()
    }

    pub fn scale(self) -> Scale {
        self.0
    }
}

/// Registry of scales offered to experts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleRegistry {
    scales: Vec<Scale>,
}

impl Default for ScaleRegistry {
    fn default() -> Self {
        Self {
            scales: [2, 3, 5, 7, 9].into_iter().map(Scale).collect(),
        }
    }
}

impl ScaleRegistry {
    pub fn new<I: IntoIterator<Item = u32>>(grades: I) -> Result<Self> {
        let mut scales = grades
            .into_iter()
            .map(Scale::new)
            .collect::<Result<Vec<_>>>()?;
        scales.sort();
        scales.dedup();
        Ok(Self { scales })
    }

    pub fn register(&mut self, grades: u32) -> Result<Scale> {
        let scale = Scale::new(grades)?;
        if let Err(pos) = self.scales.binary_search(&scale) {
            self.scales.insert(pos, scale);
        }
        Ok(scale)
    }

    pub fn get(&self, grades: u32) -> Option<Scale> {
        self.scales.iter().copied().find(|s| s.grades() == grades)
    }

    pub fn contains(&self, grades: u32) -> bool {
        self.get(grades).is_some()
    }

    pub fn scales(&self) -> &[Scale] {
        &self.scales
    }
}

/// Hartley weight of a comparison; a missing comparison weighs exactly 0.
pub fn hartley_weight(scale: Option<Scale>) -> f64 {
    scale.map_or(0.0, Scale::hartley_weight)
}

/// Maps `grade` (1-based) of scale `from` onto the unified scale by linear
/// index interpolation, rounding half up. Endpoints map to endpoints.
pub fn to_unified(grade: u32, from: Scale, unified: UnifiedScale) -> Result<u32> {
    let n = from.grades();
    let n_max = unified.grades();
    if grade == 0 || grade > n {
        return Err(Error::InvalidJudgment(format!(
            "grade {grade} outside 1..={n}"
        )));
    }
    if n > n_max {
        return Err(Error::InvalidJudgment(format!(
            "scale with {n} grades exceeds the unified scale ({n_max} grades)"
        )));
    }
    let num = u64::from(grade - 1) * u64::from(n_max - 1);
    let den = u64::from(n - 1);
    let rounded = (2 * num + den) / (2 * den);
    Ok(rounded as u32 + 1)
}

/// Geometric mean of Hartley weights in the log domain; any zero factor
/// yields 0.
fn geometric_mean_of_weights<I: IntoIterator<Item = f64>>(weights: I) -> f64 {
    let mut count = 0usize;
    let mut log_sum = 0.0;
    for w in weights {
        if w <= 0.0 {
            return 0.0;
        }
        log_sum += w.ln();
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    (log_sum / count as f64).exp()
}

/// Information weight of a spanning tree: geometric mean of the Hartley
/// weights of its edges. A missing edge makes the tree unusable (weight 0).
pub fn tree_scale_weight(edges: &[Option<Scale>]) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    geometric_mean_of_weights(edges.iter().map(|s| hartley_weight(*s)))
}

/// How missing cells enter a matrix's information weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingCellPolicy {
    /// Average over the provided cells only.
    #[default]
    Exclude,
    /// Any missing cell contributes a factor 0.
    Strict,
}

/// Information weight of a comparison matrix given the scales of its
/// upper-triangle cells (`None` for missing cells).
pub fn pcm_scale_weight<I>(upper_cells: I, policy: MissingCellPolicy) -> f64
where
    I: IntoIterator<Item = Option<Scale>>,
{
    let mut weights = Vec::new();
    for cell in upper_cells {
        match (cell, policy) {
            (Some(s), _) => weights.push(s.hartley_weight()),
            (None, MissingCellPolicy::Strict) => return 0.0,
            (None, MissingCellPolicy::Exclude) => {}
        }
    }
    geometric_mean_of_weights(weights)
}
