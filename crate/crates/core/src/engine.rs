//! Full evaluation of a group: completeness, spanning trees, ratings,
//! aggregate vector and per-coordinate agreement.

use serde::{Deserialize, Serialize};

use crate::aggregate::{rating, weighted_aggregate, AggregateResult, MeanKind, Rating, TreeVector};
use crate::agreement::{
    agreement_report, coordinate_spectrums, AgreementReport, Binning, Spectrum, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::pcm::{build_pcm, check_completeness, CompletenessReport, Judgment, Pcm};
use crate::scale::{pcm_scale_weight, tree_scale_weight, MissingCellPolicy, Scale, UnifiedScale};
use crate::spantree::{
    expert_trees, priorities_from_icpcm, reconstruct_icpcm, Icpcm, PriorityVector,
};

/// What a tree-derived value weighs inside a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMass {
    /// Each replica `(k, q, l)` contributes its rating.
    #[default]
    Rating,
    /// Each tree contributes its owner's competence.
    Competence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub binning: Binning,
    pub threshold: f64,
    pub mean: MeanKind,
    pub missing: MissingCellPolicy,
    pub spectrum_mass: SpectrumMass,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            binning: Binning::default(),
            threshold: DEFAULT_THRESHOLD,
            mean: MeanKind::Geometric,
            missing: MissingCellPolicy::Exclude,
            spectrum_mass: SpectrumMass::Rating,
        }
    }
}

/// Experts' judgments over `n` alternatives with a-priori competences.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    n: usize,
    competences: Vec<f64>,
    judgments: Vec<Judgment>,
    version: u64,
}

impl Group {
    /// Competences are renormalized to sum 1.
    pub fn new(n: usize, competences: Vec<f64>, judgments: Vec<Judgment>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSession(format!(
                "need at least 2 alternatives, got {n}"
            )));
        }
        if competences.is_empty() {
            return Err(Error::InvalidSession("need at least one expert".into()));
        }
        if competences.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidSession("competences must be positive".into()));
        }
        let total: f64 = competences.iter().sum();
        let competences = competences.into_iter().map(|c| c / total).collect();
        let group = Self {
            n,
            competences,
            judgments,
            version: 0,
        };
        group.pcms()?;
        Ok(group)
    }

    /// Starts the change counter at `version`, e.g. a session's own counter.
    pub fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn experts(&self) -> usize {
        self.competences.len()
    }

    pub fn competences(&self) -> &[f64] {
        &self.competences
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    /// Incremented on every change of judgments.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn unified_scale(&self) -> UnifiedScale {
        UnifiedScale::covering(self.judgments.iter().map(|j| j.scale))
            .unwrap_or_else(|| UnifiedScale::new(Scale::new(9).expect("9 >= 2")))
    }

    pub fn pcms(&self) -> Result<Vec<Pcm>> {
        let unified = self.unified_scale();
        if let Some(jd) = self.judgments.iter().find(|jd| jd.expert >= self.experts()) {
            return Err(Error::UnknownExpert(jd.expert.to_string()));
        }
        (0..self.experts())
            .map(|k| build_pcm(&self.judgments, self.n, k, unified))
            .collect()
    }

    /// Replaces expert `expert`'s judgment on the unordered pair `{i, j}`.
    pub fn replace_judgment(&mut self, judgment: Judgment) -> Result<()> {
        let (lo, hi) = (judgment.i.min(judgment.j), judgment.i.max(judgment.j));
        let mut next = self.judgments.clone();
        next.retain(|jd| {
            !(jd.expert == judgment.expert && jd.i.min(jd.j) == lo && jd.i.max(jd.j) == hi)
        });
        next.push(judgment);
        let candidate = Self {
            judgments: next,
            ..self.clone()
        };
        candidate.pcms()?;
        self.judgments = candidate.judgments;
        self.version += 1;
        Ok(())
    }

    pub fn evaluate(&self, config: &EngineConfig) -> Result<Evaluation> {
        evaluate(self.n, &self.competences, &self.pcms()?, config)
    }
}

/// A tree with everything derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedTree {
    pub vector: TreeVector,
    pub icpcm: Icpcm,
    pub scale_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub completeness: CompletenessReport,
    pub trees_per_expert: Vec<usize>,
    pub trees: Vec<EvaluatedTree>,
    pub pcms: Vec<Pcm>,
    /// Present once at least one tree exists and the union graph is connected.
    pub aggregate: Option<AggregateResult>,
    pub agreement: Option<AgreementReport>,
    spectrum_inputs: Vec<(usize, f64)>,
    binning: Binning,
}

impl Evaluation {
    pub fn is_complete(&self) -> bool {
        self.aggregate.is_some()
    }

    pub fn total_trees(&self) -> usize {
        self.trees.len()
    }

    /// Per-coordinate spectrums used for the agreement report.
    pub fn spectrums(&self) -> Result<Vec<Spectrum>> {
        let inputs: Vec<(&PriorityVector, f64)> = self
            .spectrum_inputs
            .iter()
            .map(|&(t, mass)| (&self.trees[t].vector.w, mass))
            .collect();
        coordinate_spectrums(&inputs, self.binning)
    }
}

/// Runs the whole pipeline for one group of matrices.
pub fn evaluate(
    n: usize,
    competences: &[f64],
    pcms: &[Pcm],
    config: &EngineConfig,
) -> Result<Evaluation> {
    if pcms.len() != competences.len() {
        return Err(Error::Dimension {
            expected: competences.len(),
            got: pcms.len(),
        });
    }
    let completeness = check_completeness(n, pcms)?;

    let mut trees = Vec::new();
    let mut trees_per_expert = vec![0; pcms.len()];
    for (k, pcm) in pcms.iter().enumerate() {
        if !completeness.expert_connected[k] {
            continue;
        }
        for tree in expert_trees(pcm)? {
            let icpcm = reconstruct_icpcm(&tree);
            trees.push(EvaluatedTree {
                vector: TreeVector {
                    expert: k,
                    index: tree.index,
                    w: priorities_from_icpcm(&icpcm),
                },
                icpcm,
                scale_weight: tree_scale_weight(&tree.scales()),
            });
            trees_per_expert[k] += 1;
        }
    }

    let mut evaluation = Evaluation {
        completeness,
        trees_per_expert,
        trees,
        pcms: pcms.to_vec(),
        aggregate: None,
        agreement: None,
        spectrum_inputs: Vec::new(),
        binning: config.binning,
    };
    if !evaluation.completeness.union_connected || evaluation.trees.is_empty() {
        return Ok(evaluation);
    }

    let matrix_weights: Vec<f64> = pcms
        .iter()
        .map(|p| pcm_scale_weight(p.upper_scales(), config.missing))
        .collect();
    let mut ratings = Vec::with_capacity(evaluation.trees.len() * pcms.len());
    for t in &evaluation.trees {
        let k = t.vector.expert;
        for (l, other) in pcms.iter().enumerate() {
            ratings.push(Rating {
                k,
                q: t.vector.index,
                l,
                value: rating(
                    &t.icpcm,
                    other,
                    competences[k],
                    competences[l],
                    t.scale_weight,
                    matrix_weights[l],
                ),
            });
        }
    }

    let vectors: Vec<TreeVector> = evaluation.trees.iter().map(|t| t.vector.clone()).collect();
    let aggregate = weighted_aggregate(&vectors, &ratings, config.mean)?;

    let m = pcms.len();
    evaluation.spectrum_inputs = match config.spectrum_mass {
        SpectrumMass::Rating => ratings
            .iter()
            .enumerate()
            .map(|(r, rating)| (r / m, rating.value))
            .collect(),
        SpectrumMass::Competence => evaluation
            .trees
            .iter()
            .enumerate()
            .map(|(t, tree)| (t, competences[tree.vector.expert]))
            .collect(),
    };
    let inputs: Vec<(&PriorityVector, f64)> = evaluation
        .spectrum_inputs
        .iter()
        .map(|&(t, mass)| (&evaluation.trees[t].vector.w, mass))
        .collect();
    let agreement = agreement_report(&inputs, config.binning, config.threshold)?;

    evaluation.aggregate = Some(aggregate);
    evaluation.agreement = Some(agreement);
    Ok(evaluation)
}
