//! Synthetic expert groups for exercising the feedback loop.
//!
//! Experts judge every pair from a hidden ground-truth vector. Each ratio is
//! multiplied by a log-uniform factor of at most `jitter` grades of the
//! expert's habitual scale, then optionally snapped to the nearest grade.
//! A response policy then answers every revision request.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, Group};
use crate::error::{Error, Result};
use crate::feedback::{
    run_loop, AlwaysAccept, AlwaysDecline, Compromise, ConvergenceTrace, TerminalStatus,
    DEFAULT_CAP,
};
use crate::pcm::{Direction, Judgment};
use crate::scale::{to_unified, Scale, UnifiedScale};
use crate::spantree::PriorityVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Given(Vec<f64>),
    /// Log-uniform weights whose largest ratio stays within 1..=`spread`.
    Random {
        spread: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Accept,
    Decline,
    Compromise(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n: usize,
    pub m: usize,
    pub truth: Truth,
    /// Largest multiplicative jitter, in grades of the expert's scale.
    pub jitter: f64,
    /// Report the nearest grade instead of the jittered ratio itself.
    pub snap_to_grade: bool,
    /// Scale (grade count) each expert uses; empty means 9 for everyone.
    pub scales: Vec<u32>,
    pub policy: Policy,
    pub seed: u64,
    pub cap: usize,
    pub config: EngineConfig,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            n: 4,
            m: 3,
            truth: Truth::Random { spread: 6.0 },
            jitter: 1.0,
            snap_to_grade: false,
            scales: Vec::new(),
            policy: Policy::Accept,
            seed: 0,
            cap: DEFAULT_CAP,
            config: EngineConfig::default(),
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=9).contains(&self.n) {
            return Err(Error::InvalidSession(format!(
                "n = {} outside 2..=9",
                self.n
            )));
        }
        if !(1..=12).contains(&self.m) {
            return Err(Error::InvalidSession(format!(
                "m = {} outside 1..=12",
                self.m
            )));
        }
        if !self.scales.is_empty() && self.scales.len() != self.m {
            return Err(Error::InvalidSession(
                "one scale per expert required".into(),
            ));
        }
        if !(0.0..=8.0).contains(&self.jitter) {
            return Err(Error::InvalidSession(format!(
                "jitter {} outside 0..=8 grades",
                self.jitter
            )));
        }
        for &s in &self.scales {
            Scale::new(s)?;
        }
        match &self.truth {
            Truth::Given(w) if w.len() != self.n => Err(Error::Dimension {
                expected: self.n,
                got: w.len(),
            }),
            Truth::Given(w) => {
                let pv = PriorityVector::normalized(w.clone())?;
                let ratio = pv.as_slice().iter().copied().fold(0.0, f64::max)
                    / pv.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
                if ratio > 9.0 + 1e-9 {
                    return Err(Error::InvalidSession("ground-truth ratios exceed 9".into()));
                }
                Ok(())
            }
            Truth::Random { spread } if !(1.0..=9.0).contains(spread) => Err(
                Error::InvalidSession(format!("spread {spread} outside 1..=9")),
            ),
            Truth::Random { .. } => Ok(()),
        }
    }

    fn scale_of(&self, expert: usize) -> u32 {
        self.scales.get(expert).copied().unwrap_or(9)
    }
}

/// Log-domain width of one grade on an `n`-grade scale spanning 1..=9.
fn grade_log_step(grades: u32) -> f64 {
    9f64.ln() / f64::from(grades - 1)
}

/// Grade and direction on `scale` whose unified ratio is closest to `ratio`
/// in the log domain.
fn nearest_grade(ratio: f64, scale: Scale) -> (u32, Direction) {
    let target = ratio.ln();
    let mut best = (1, Direction::Row, f64::INFINITY);
    for grade in 1..=scale.grades() {
        let unified = to_unified(
            grade,
            scale,
            UnifiedScale::new(Scale::new(9).expect("9 grades")),
        )
        .expect("grade in range");
        let ln = f64::from(unified).ln();
        for (direction, value) in [(Direction::Row, ln), (Direction::Col, -ln)] {
            let d = (value - target).abs();
            if d < best.2 {
                best = (grade, direction, d);
            }
        }
    }
    (best.0, best.1)
}

pub fn draw_truth(truth: &Truth, n: usize, rng: &mut StdRng) -> Result<PriorityVector> {
    match truth {
        Truth::Given(w) => PriorityVector::normalized(w.clone()),
        Truth::Random { spread } => {
            let hi = spread.ln();
            PriorityVector::normalized((0..n).map(|_| rng.gen_range(0.0..=hi).exp()).collect())
        }
    }
}

/// Complete judgments of `m` experts around `truth`.
pub fn synthetic_judgments(
    spec: &SimulationSpec,
    truth: &PriorityVector,
    rng: &mut StdRng,
) -> Result<Vec<Judgment>> {
    let mut judgments = Vec::new();
    for k in 0..spec.m {
        let scale = Scale::new(spec.scale_of(k))?;
        let width = spec.jitter * grade_log_step(scale.grades());
        for i in 0..spec.n {
            for j in i + 1..spec.n {
                let u = if width > 0.0 {
                    rng.gen_range(-width..=width)
                } else {
                    0.0
                };
                let ratio = (truth[i] / truth[j] * u.exp()).clamp(1.0 / 9.0, 9.0);
                judgments.push(if spec.snap_to_grade {
                    let (grade, direction) = nearest_grade(ratio, scale);
                    Judgment::graded(k, i, j, grade, scale, direction)
                } else {
                    Judgment::ratio(k, i, j, ratio, scale)
                });
            }
        }
    }
    Ok(judgments)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub seed: u64,
    pub truth: Vec<f64>,
    pub trace: ConvergenceTrace,
    pub linf_error: f64,
}

impl SimulationRun {
    pub fn converged(&self) -> bool {
        self.trace.status == TerminalStatus::Converged
    }

    pub fn rounds(&self) -> usize {
        self.trace.rounds.len()
    }
}

/// One seeded run of the feedback loop on a synthetic group.
pub fn simulate(spec: &SimulationSpec) -> Result<SimulationRun> {
    spec.validate()?;
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let truth = draw_truth(&spec.truth, spec.n, &mut rng)?;
    let judgments = synthetic_judgments(spec, &truth, &mut rng)?;
    let group = Group::new(spec.n, vec![1.0; spec.m], judgments)?;
    let (_, trace) = match spec.policy {
        Policy::Accept => run_loop(&group, &spec.config, &mut AlwaysAccept, spec.cap)?,
        Policy::Decline => run_loop(&group, &spec.config, &mut AlwaysDecline, spec.cap)?,
        Policy::Compromise(f) => run_loop(
            &group,
            &spec.config,
            &mut Compromise { fraction: f },
            spec.cap,
        )?,
    };
    let linf_error = truth.linf_distance(&trace.final_w);
    Ok(SimulationRun {
        seed: spec.seed,
        truth: truth.into_inner(),
        trace,
        linf_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub runs: usize,
    pub converged: usize,
    pub converged_fraction: f64,
    pub mean_rounds: f64,
    pub max_rounds: usize,
    /// Largest L-infinity error against the truth over converged runs.
    pub max_converged_error: f64,
    pub mean_error: f64,
}

/// Runs seeds `spec.seed .. spec.seed + runs`.
pub fn simulate_many(
    spec: &SimulationSpec,
    runs: usize,
) -> Result<(Vec<SimulationRun>, SimulationSummary)> {
    let results = (0..runs as u64)
        .map(|offset| {
            simulate(&SimulationSpec {
                seed: spec.seed + offset,
                ..spec.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let converged: Vec<&SimulationRun> = results.iter().filter(|r| r.converged()).collect();
    let summary = SimulationSummary {
        runs,
        converged: converged.len(),
        converged_fraction: converged.len() as f64 / runs.max(1) as f64,
        mean_rounds: results.iter().map(|r| r.rounds() as f64).sum::<f64>() / runs.max(1) as f64,
        max_rounds: results.iter().map(SimulationRun::rounds).max().unwrap_or(0),
        max_converged_error: converged.iter().map(|r| r.linf_error).fold(0.0, f64::max),
        mean_error: results.iter().map(|r| r.linf_error).sum::<f64>() / runs.max(1) as f64,
    };
    Ok((results, summary))
}
