//! Facilitated sessions: roster, judgment intake, evaluation, revision
//! requests and an append-only event log that replays to the current state.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::aggregate::MeanKind;
use crate::agreement::{Binning, Spectrum, DEFAULT_EPSILON, DEFAULT_THRESHOLD};
use crate::engine::{EngineConfig, Evaluation, Group, SpectrumMass};
use crate::error::{Error, Result};
use crate::feedback::{
    apply_revision, select_revision_target, CellRef, RevisionRequest, RevisionResponse, DEFAULT_CAP,
};
use crate::pcm::{Direction, Estimate, Judgment};
use crate::scale::{MissingCellPolicy, ScaleRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    #[default]
    Collecting,
    Incomplete,
    Evaluating,
    AwaitingRevision,
    Converged,
    Capped,
    /// Agreement fails but no comparison can be revised.
    Escalated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub mean: MeanKind,
    /// Grade counts experts may use.
    #[serde(default = "default_scales")]
    pub scales: Vec<u32>,
    #[serde(default)]
    pub missing: MissingCellPolicy,
    #[serde(default)]
    pub spectrum_mass: SpectrumMass,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_scales() -> Vec<u32> {
    ScaleRegistry::default()
        .scales()
        .iter()
        .map(|s| s.grades())
        .collect()
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            threshold: DEFAULT_THRESHOLD,
            cap: DEFAULT_CAP,
            mean: MeanKind::default(),
            scales: default_scales(),
            missing: MissingCellPolicy::default(),
            spectrum_mass: SpectrumMass::default(),
        }
    }
}

impl SessionConfig {
    pub fn engine(&self) -> Result<EngineConfig> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidSession(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        Ok(EngineConfig {
            binning: Binning::from_epsilon(self.epsilon)?,
            threshold: self.threshold,
            mean: self.mean,
            missing: self.missing,
            spectrum_mass: self.spectrum_mass,
        })
    }

    pub fn registry(&self) -> Result<ScaleRegistry> {
        if self.scales.is_empty() {
            return Err(Error::InvalidSession("no scales registered".into()));
        }
        ScaleRegistry::new(self.scales.iter().copied())
    }

    fn validate(&self) -> Result<()> {
        self.engine()?;
        self.registry()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub competence: f64,
}

/// A judgment as stored in session files and sent over the wire. Either
/// `grade` (with `direction`) or a real `value` for `a_ij` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub expert: String,
    pub i: usize,
    pub j: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<u32>,
    pub scale_grades: u32,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl JudgmentRecord {
    pub fn graded(
        expert: &str,
        i: usize,
        j: usize,
        grade: u32,
        scale_grades: u32,
        direction: Direction,
    ) -> Self {
        Self {
            expert: expert.to_string(),
            i,
            j,
            grade: Some(grade),
            scale_grades,
            direction,
            value: None,
        }
    }

    pub fn valued(expert: &str, i: usize, j: usize, value: f64, scale_grades: u32) -> Self {
        Self {
            expert: expert.to_string(),
            i,
            j,
            grade: None,
            scale_grades,
            direction: Direction::Row,
            value: Some(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub id: String,
    pub alternatives: Vec<String>,
    pub experts: Vec<ExpertRecord>,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionAction {
    Accept,
    Value,
    Decline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionAnswer {
    pub request_id: u64,
    pub action: RevisionAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_grades: Option<u32>,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub status: Status,
    pub w: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_index: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_coordinate: Option<usize>,
    pub total_trees: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suggested_edges: Vec<(usize, usize)>,
    /// Experts none of whose trees could be built.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disconnected_experts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        alternatives: Vec<String>,
        /// As submitted, before renormalization.
        experts: Vec<ExpertRecord>,
        config: SessionConfig,
    },
    JudgmentsSubmitted {
        judgments: Vec<JudgmentRecord>,
    },
    Reconfigured {
        config: SessionConfig,
    },
    Evaluated {
        status: Status,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_index: Option<f64>,
        /// Triggered by a revision answer rather than by the facilitator.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        automatic: bool,
    },
    RevisionRequested {
        request: RevisionRequest,
    },
    RevisionAnswered {
        answer: RevisionAnswer,
    },
}

/// One issued revision request and its answer, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: usize,
    pub min_index: Option<f64>,
    pub request: RevisionRequest,
    pub answer: Option<RevisionAnswer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    /// Session version after the event.
    pub version: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    #[serde(default)]
    pub version: u64,
    #[serde(default)]
    pub id: String,
    pub alternatives: Vec<String>,
    pub experts: Vec<ExpertRecord>,
    #[serde(default)]
    pub config: SessionConfig,
    #[serde(default)]
    pub judgments: Vec<JudgmentRecord>,
    #[serde(default)]
    pub status: Status,
    /// Revision rounds answered so far.
    #[serde(default)]
    pub round: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_request: Option<RevisionRequest>,
    /// Cells declined in the last round, skipped by the next request only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub declined: Vec<CellRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<Results>,
    #[serde(default)]
    pub events: Vec<EventRecord>,
}

impl Session {
    pub fn create(request: CreateSession) -> Result<Self> {
        let CreateSession {
            id,
            alternatives,
            experts,
            config,
        } = request;
        if alternatives.len() < 2 {
            return Err(Error::InvalidSession(format!(
                "need at least 2 alternatives, got {}",
                alternatives.len()
            )));
        }
        if experts.is_empty() {
            return Err(Error::InvalidSession("need at least one expert".into()));
        }
        unique("alternative", alternatives.iter())?;
        unique("expert id", experts.iter().map(|e| &e.id))?;
        config.validate()?;
        let mut session = Self {
            version: 0,
            id: id.clone(),
            alternatives: alternatives.clone(),
            experts: normalized(&experts)?,
            config: config.clone(),
            judgments: Vec::new(),
            status: Status::Collecting,
            round: 0,
            open_request: None,
            declined: Vec::new(),
            results: None,
            events: Vec::new(),
        };
        session.record(Event::Created {
            id,
            alternatives,
            experts,
            config,
        });
        Ok(session)
    }

    pub fn n(&self) -> usize {
        self.alternatives.len()
    }

    pub fn expert_index(&self, id: &str) -> Result<usize> {
        self.experts
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| Error::UnknownExpert(id.to_string()))
    }

    pub fn engine_config(&self) -> Result<EngineConfig> {
        self.config.engine()
    }

    /// The core view of the current judgments, versioned like the session.
    pub fn group(&self) -> Result<Group> {
        let judgments = self
            .judgments
            .iter()
            .map(|r| self.to_judgment(r))
            .collect::<Result<Vec<_>>>()?;
        let competences = self.experts.iter().map(|e| e.competence).collect();
        let group = Group::new(self.n(), competences, judgments).map_err(|e| match e {
            Error::Conflict { expert, i, j } => Error::InvalidJudgment(format!(
                "conflicting judgments for pair ({i}, {j}) from expert {}",
                self.experts[expert].id
            )),
            e => e,
        })?;
        Ok(group.with_version(self.version))
    }

    fn to_judgment(&self, r: &JudgmentRecord) -> Result<Judgment> {
        let expert = self.expert_index(&r.expert)?;
        let n = self.n();
        if r.i >= n || r.j >= n || r.i == r.j {
            return Err(Error::InvalidJudgment(format!(
                "pair ({}, {}) invalid for {n} alternatives",
                r.i, r.j
            )));
        }
        let scale = self.config.registry()?.get(r.scale_grades).ok_or_else(|| {
            Error::InvalidJudgment(format!(
                "scale with {} grades is not registered",
                r.scale_grades
            ))
        })?;
        match (r.grade, r.value) {
            (Some(grade), None) if (1..=scale.grades()).contains(&grade) => Ok(Judgment::graded(
                expert,
                r.i,
                r.j,
                grade,
                scale,
                r.direction,
            )),
            (Some(grade), None) => Err(Error::InvalidJudgment(format!(
                "grade {grade} outside 1..={}",
                scale.grades()
            ))),
            (None, Some(v)) if v.is_finite() && v > 0.0 => {
                Ok(Judgment::ratio(expert, r.i, r.j, v, scale))
            }
            (None, Some(v)) => Err(Error::InvalidJudgment(format!(
                "value {v} must be finite and positive"
            ))),
            _ => Err(Error::InvalidJudgment(
                "give exactly one of grade and value".into(),
            )),
        }
    }

    fn to_record(&self, jd: &Judgment) -> JudgmentRecord {
        let expert = &self.experts[jd.expert].id;
        match jd.estimate {
            Estimate::Grade { grade, direction } => {
                JudgmentRecord::graded(expert, jd.i, jd.j, grade, jd.scale.grades(), direction)
            }
            Estimate::Ratio(v) => JudgmentRecord::valued(expert, jd.i, jd.j, v, jd.scale.grades()),
        }
    }

    /// Adds judgments, replacing each expert's earlier judgment on the same
    /// unordered pair. Returns the new version.
    pub fn submit_judgments(
        &mut self,
        records: Vec<JudgmentRecord>,
        expected_version: Option<u64>,
    ) -> Result<u64> {
        self.check_version(expected_version)?;
        let incoming: HashSet<(String, usize, usize)> = records
            .iter()
            .map(|r| (r.expert.clone(), r.i.min(r.j), r.i.max(r.j)))
            .collect();
        let mut judgments: Vec<JudgmentRecord> = self
            .judgments
            .iter()
            .filter(|r| !incoming.contains(&(r.expert.clone(), r.i.min(r.j), r.i.max(r.j))))
            .cloned()
            .collect();
        judgments.extend(records.iter().cloned());
        let candidate = Self {
            judgments,
            ..self.clone()
        };
        candidate.group()?;
        self.judgments = candidate.judgments;
        self.status = Status::Collecting;
        self.open_request = None;
        self.declined.clear();
        self.results = None;
        self.record(Event::JudgmentsSubmitted { judgments: records });
        Ok(self.version)
    }

    /// Replaces the configuration. Earlier results no longer apply.
    pub fn reconfigure(&mut self, config: SessionConfig) -> Result<u64> {
        config.validate()?;
        let candidate = Self {
            config: config.clone(),
            ..self.clone()
        };
        candidate.group()?;
        self.config = config.clone();
        self.status = Status::Collecting;
        self.open_request = None;
        self.declined.clear();
        self.results = None;
        self.record(Event::Reconfigured { config });
        Ok(self.version)
    }

    /// Feedback rounds reconstructed from the event log.
    pub fn trace(&self) -> Vec<TraceEntry> {
        let mut entries: Vec<TraceEntry> = Vec::new();
        let mut min_index = None;
        for record in &self.events {
            match &record.event {
                Event::Evaluated { min_index: m, .. } => min_index = *m,
                Event::RevisionRequested { request } => entries.push(TraceEntry {
                    round: request.round,
                    min_index,
                    request: request.clone(),
                    answer: None,
                }),
                Event::RevisionAnswered { answer } => {
                    if let Some(last) = entries
                        .last_mut()
                        .filter(|e| e.request.id == answer.request_id)
                    {
                        last.answer = Some(answer.clone());
                    }
                }
                _ => {}
            }
        }
        entries
    }

    fn check_version(&self, expected: Option<u64>) -> Result<()> {
        match expected {
            Some(v) if v != self.version => Err(Error::VersionConflict {
                expected: self.version,
                got: v,
            }),
            _ => Ok(()),
        }
    }

    /// Runs the pipeline and moves the session along its lifecycle; below
    /// threshold, the next revision request is opened.
    pub fn evaluate(&mut self) -> Result<&Results> {
        self.evaluate_inner(false)
    }

    fn evaluate_inner(&mut self, automatic: bool) -> Result<&Results> {
        let config = self.engine_config()?;
        // The request must carry the version the expert will answer against.
        let next_version = self.version + 1;
        let group = self.group()?.with_version(next_version);
        let evaluation = group.evaluate(&config)?;
        let mut results = self.results_of(&evaluation);
        let mut request = None;
        if let Some(agreement) = &evaluation.agreement {
            results.status = if agreement.passing {
                Status::Converged
            } else if self.round >= self.config.cap {
                Status::Capped
            } else {
                match select_revision_target(&group, &evaluation, self.round, &self.declined) {
                    Ok(r) => {
                        request = Some(r);
                        Status::AwaitingRevision
                    }
                    Err(Error::Escalate | Error::AllDeclined) => Status::Escalated,
                    Err(e) => return Err(e),
                }
            };
        }
        self.status = results.status;
        self.open_request = request.clone();
        let min_index = results.min_index;
        self.results = Some(results);
        self.record(Event::Evaluated {
            status: self.status,
            min_index,
            automatic,
        });
        debug_assert_eq!(self.version, next_version);
        if let Some(request) = request {
            self.events.push(EventRecord {
                seq: self.events.len() as u64,
                version: self.version,
                event: Event::RevisionRequested { request },
            });
        }
        Ok(self.results.as_ref().expect("just set"))
    }

    fn results_of(&self, evaluation: &Evaluation) -> Results {
        let disconnected_experts = evaluation
            .completeness
            .disconnected_experts()
            .map(|k| self.experts[k].id.clone())
            .collect();
        match (&evaluation.aggregate, &evaluation.agreement) {
            (Some(aggregate), Some(agreement)) => Results {
                status: Status::Evaluating,
                w: aggregate.w.as_slice().to_vec(),
                k: agreement.indices.clone(),
                min_index: Some(agreement.min_index()),
                worst_coordinate: Some(agreement.worst_coordinate),
                total_trees: evaluation.total_trees(),
                suggested_edges: Vec::new(),
                disconnected_experts,
            },
            _ => Results {
                status: Status::Incomplete,
                w: Vec::new(),
                k: Vec::new(),
                min_index: None,
                worst_coordinate: None,
                total_trees: evaluation.total_trees(),
                suggested_edges: evaluation.completeness.suggested_edges.clone(),
                disconnected_experts,
            },
        }
    }

    /// Evaluates without changing the session.
    pub fn evaluation(&self) -> Result<Evaluation> {
        self.group()?.evaluate(&self.engine_config()?)
    }

    /// Per-coordinate spectrums of the current judgments.
    pub fn spectrums(&self) -> Result<Vec<Spectrum>> {
        let evaluation = self.evaluation()?;
        if !evaluation.is_complete() {
            return Err(Error::Incomplete(format!(
                "suggested comparisons {:?}",
                evaluation.completeness.suggested_edges
            )));
        }
        evaluation.spectrums()
    }

    pub fn revision_request(&self) -> Result<&RevisionRequest> {
        self.open_request.as_ref().ok_or(Error::NoOpenRequest)
    }

    /// Applies an expert's answer to the open request, then re-evaluates.
    pub fn respond_revision(&mut self, answer: RevisionAnswer) -> Result<&Results> {
        self.check_version(Some(answer.version))?;
        let request = self.open_request.clone().ok_or(Error::NoOpenRequest)?;
        if answer.request_id != request.id {
            return Err(Error::StaleRequest {
                issued: answer.request_id,
                current: request.id,
            });
        }
        let response = match answer.action {
            RevisionAction::Accept => RevisionResponse::Accept,
            RevisionAction::Decline => RevisionResponse::Decline,
            RevisionAction::Value => {
                let value = answer
                    .value
                    .ok_or_else(|| Error::InvalidJudgment("action value needs a value".into()))?;
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::InvalidJudgment(format!(
                        "value {value} must be finite and positive"
                    )));
                }
                let scale = match answer.scale_grades {
                    Some(g) => Some(self.config.registry()?.get(g).ok_or_else(|| {
                        Error::InvalidJudgment(format!("scale with {g} grades is not registered"))
                    })?),
                    None => None,
                };
                RevisionResponse::Value { value, scale }
            }
        };
        let declined = matches!(response, RevisionResponse::Decline);
        let next = apply_revision(&self.group()?, &request, response)?;
        self.judgments = next
            .judgments()
            .iter()
            .map(|jd| self.to_record(jd))
            .collect();
        self.declined = if declined {
            vec![request.cell()]
        } else {
            Vec::new()
        };
        self.round += 1;
        self.open_request = None;
        self.record(Event::RevisionAnswered { answer });
        self.evaluate_inner(true)
    }

    fn record(&mut self, event: Event) {
        self.version += 1;
        self.events.push(EventRecord {
            seq: self.events.len() as u64,
            version: self.version,
            event,
        });
    }

    /// Re-executes the commands in `events` from scratch.
    pub fn replay(events: &[EventRecord]) -> Result<Self> {
        let mut session: Option<Self> = None;
        for record in events {
            match (&record.event, session.as_mut()) {
                (
                    Event::Created {
                        id,
                        alternatives,
                        experts,
                        config,
                    },
                    None,
                ) => {
                    session = Some(Self::create(CreateSession {
                        id: id.clone(),
                        alternatives: alternatives.clone(),
                        experts: experts.clone(),
                        config: config.clone(),
                    })?);
                }
                (Event::Created { .. }, Some(_)) => {
                    return Err(Error::InvalidSession("second creation event".into()));
                }
                (_, None) => {
                    return Err(Error::InvalidSession(
                        "log does not start with creation".into(),
                    ))
                }
                (Event::JudgmentsSubmitted { judgments }, Some(s)) => {
                    s.submit_judgments(judgments.clone(), None)?;
                }
                (Event::Reconfigured { config }, Some(s)) => {
                    s.reconfigure(config.clone())?;
                }
                (
                    Event::Evaluated {
                        automatic: false, ..
                    },
                    Some(s),
                ) => {
                    s.evaluate()?;
                }
                (Event::RevisionAnswered { answer }, Some(s)) => {
                    s.respond_revision(RevisionAnswer {
                        version: s.version,
                        ..answer.clone()
                    })?;
                }
                // Derived from the commands above.
                (
                    Event::Evaluated {
                        automatic: true, ..
                    }
                    | Event::RevisionRequested { .. },
                    Some(_),
                ) => {}
            }
        }
        session.ok_or_else(|| Error::InvalidSession("empty event log".into()))
    }

    /// Whether replaying the log reproduces this exact state.
    pub fn replays_consistently(&self) -> Result<bool> {
        Ok(Self::replay(&self.events)? == *self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sessions serialize")
    }

    /// Parses and validates a session document. Competences that do not sum
    /// to 1 are renormalized. A document without an event log is rebuilt
    /// from its alternatives, experts, config and judgments so that it has
    /// one.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut session: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if session.events.is_empty() {
            let mut rebuilt = Self::create(CreateSession {
                id: session.id,
                alternatives: session.alternatives,
                experts: session.experts,
                config: session.config,
            })?;
            if !session.judgments.is_empty() {
                rebuilt.submit_judgments(session.judgments, None)?;
            }
            return Ok(rebuilt);
        }
        if session.alternatives.len() < 2 {
            return Err(Error::InvalidSession("need at least 2 alternatives".into()));
        }
        if session.experts.is_empty() {
            return Err(Error::InvalidSession("need at least one expert".into()));
        }
        unique("alternative", session.alternatives.iter())?;
        unique("expert id", session.experts.iter().map(|e| &e.id))?;
        session.config.validate()?;
        let total: f64 = session.experts.iter().map(|e| e.competence).sum();
        if (total - 1.0).abs() > 1e-12 {
            session.experts = normalized(&session.experts)?;
        }
        session.group()?;
        Ok(session)
    }
}

fn unique<'a>(what: &str, items: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = HashSet::new();
    for item in items {
        if !seen.insert(item) {
            return Err(Error::InvalidSession(format!("duplicate {what} {item:?}")));
        }
    }
    Ok(())
}

fn normalized(experts: &[ExpertRecord]) -> Result<Vec<ExpertRecord>> {
    if experts
        .iter()
        .any(|e| !(e.competence.is_finite() && e.competence > 0.0))
    {
        return Err(Error::InvalidSession("competences must be positive".into()));
    }
    let total: f64 = experts.iter().map(|e| e.competence).sum();
    Ok(experts
        .iter()
        .map(|e| ExpertRecord {
            competence: e.competence / total,
            ..e.clone()
        })
        .collect())
}
