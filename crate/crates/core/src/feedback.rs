//! Agreement-improvement loop: ask one expert at a time to move their most
//! outstanding comparison toward the aggregate consistent matrix, recompute,
//! and repeat until every coordinate's index exceeds the threshold.

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, Evaluation, Group};
use crate::error::{Error, Result};
use crate::pcm::Judgment;
use crate::scale::Scale;

pub const DEFAULT_CAP: usize = 50;

/// Deviations at or below this are not worth a request.
const MIN_DEVIATION: f64 = 1e-9;

/// One expert's comparison of an unordered pair, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRef {
    pub expert: usize,
    pub i: usize,
    pub j: usize,
}

impl CellRef {
    pub fn new(expert: usize, a: usize, b: usize) -> Self {
        Self {
            expert,
            i: a.min(b),
            j: a.max(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionRequest {
    pub id: u64,
    pub expert: usize,
    /// Row of the comparison: the failing coordinate.
    pub row: usize,
    pub column: usize,
    /// The expert's current `a_{row,column}`.
    pub current_value: f64,
    /// The aggregate consistent matrix's `a_{row,column}`.
    pub suggested_value: f64,
    pub coordinate: usize,
    pub round: usize,
    /// Group version the request was computed from.
    pub state_version: u64,
}

impl RevisionRequest {
    pub fn cell(&self) -> CellRef {
        CellRef::new(self.expert, self.row, self.column)
    }

    pub fn deviation(&self) -> f64 {
        (self.suggested_value - self.current_value).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RevisionResponse {
    /// Take the suggested value.
    Accept,
    /// A value of the expert's own choosing for `a_{row,column}`.
    Value {
        value: f64,
        scale: Option<Scale>,
    },
    Decline,
}

/// Picks the comparison to revise. The worst failing coordinate's row is
/// searched over all experts and columns for the largest absolute gap to
/// the aggregate matrix; ties go to the lowest (expert, column). When that
/// row already matches the aggregate, the next failing coordinate is tried.
/// Cells in `ineligible` are skipped.
pub fn select_revision_target(
    group: &Group,
    evaluation: &Evaluation,
    round: usize,
    ineligible: &[CellRef],
) -> Result<RevisionRequest> {
    let report = evaluation
        .agreement
        .as_ref()
        .ok_or_else(|| Error::Incomplete("no agreement report".into()))?;
    let aggregate = evaluation
        .aggregate
        .as_ref()
        .ok_or_else(|| Error::Incomplete("no aggregate".into()))?;
    if report.passing {
        return Err(Error::InvalidSession(
            "agreement already passes; nothing to revise".into(),
        ));
    }
    let target = aggregate.icpcm();
    let mut skipped = false;
    for coordinate in report.failing_coordinates() {
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for (k, pcm) in evaluation.pcms.iter().enumerate() {
            for column in 0..group.n() {
                let Some(current) = pcm
                    .value(coordinate, column)
                    .filter(|_| column != coordinate)
                else {
                    continue;
                };
                if ineligible.contains(&CellRef::new(k, coordinate, column)) {
                    skipped = true;
                    continue;
                }
                let dev = (target.get(coordinate, column) - current).abs();
                let better = match best {
                    None => dev > MIN_DEVIATION,
                    Some((b, ..)) => dev > b + 1e-12 * b.max(1.0),
                };
                if better {
                    best = Some((dev, k, column, current));
                }
            }
        }
        if let Some((_, expert, column, current_value)) = best {
            return Ok(RevisionRequest {
                id: round as u64 + 1,
                expert,
                row: coordinate,
                column,
                current_value,
                suggested_value: target.get(coordinate, column),
                coordinate,
                round,
                state_version: group.version(),
            });
        }
    }
    Err(if skipped {
        Error::AllDeclined
    } else {
        Error::Escalate
    })
}

/// Applies an expert's answer. Accepted or custom values replace the
/// expert's judgment on the pair, keeping the scale of the existing
/// judgment unless a new one is given. Declining leaves the group unchanged.
pub fn apply_revision(
    group: &Group,
    request: &RevisionRequest,
    response: RevisionResponse,
) -> Result<Group> {
    if request.state_version != group.version() {
        return Err(Error::StaleRequest {
            issued: request.state_version,
            current: group.version(),
        });
    }
    let (value, scale) = match response {
        RevisionResponse::Decline => return Ok(group.clone()),
        RevisionResponse::Accept => (request.suggested_value, None),
        RevisionResponse::Value { value, scale } => (value, scale),
    };
    let cell = request.cell();
    let scale = match scale {
        Some(s) => s,
        None => group
            .judgments()
            .iter()
            .rev()
            .find(|jd| CellRef::new(jd.expert, jd.i, jd.j) == cell)
            .map(|jd| jd.scale)
            .ok_or_else(|| Error::InvalidSession("revised cell has no judgment".into()))?,
    };
    let mut next = group.clone();
    next.replace_judgment(Judgment::ratio(
        request.expert,
        request.row,
        request.column,
        value,
        scale,
    ))?;
    Ok(next)
}

/// How an expert answers revision requests.
pub trait Responder {
    fn respond(&mut self, request: &RevisionRequest, group: &Group) -> RevisionResponse;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysAccept;

impl Responder for AlwaysAccept {
    fn respond(&mut self, _: &RevisionRequest, _: &Group) -> RevisionResponse {
        RevisionResponse::Accept
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysDecline;

impl Responder for AlwaysDecline {
    fn respond(&mut self, _: &RevisionRequest, _: &Group) -> RevisionResponse {
        RevisionResponse::Decline
    }
}

/// Moves a fraction of the way toward the suggestion on the log scale.
#[derive(Debug, Clone, Copy)]
pub struct Compromise {
    pub fraction: f64,
}

impl Responder for Compromise {
    fn respond(&mut self, request: &RevisionRequest, _: &Group) -> RevisionResponse {
        let f = self.fraction.clamp(0.0, 1.0);
        let value = request.current_value.powf(1.0 - f) * request.suggested_value.powf(f);
        RevisionResponse::Value { value, scale: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    CapReached,
    /// Every remaining candidate was declined in the previous round.
    ExpertDeclined,
    /// No comparison deviates from the aggregate yet agreement still fails.
    Escalated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRound {
    pub round: usize,
    pub min_index: f64,
    pub worst_coordinate: usize,
    pub request: RevisionRequest,
    pub response: RevisionResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rounds: Vec<TraceRound>,
    pub status: TerminalStatus,
    pub final_indices: Vec<f64>,
    pub final_w: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn final_min_index(&self) -> f64 {
        self.final_indices
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Iterates select, respond, apply and re-evaluate until the agreement
/// passes or `cap` requests have been issued.
pub fn run_loop<R: Responder>(
    group: &Group,
    config: &EngineConfig,
    responder: &mut R,
    cap: usize,
) -> Result<(Group, ConvergenceTrace)> {
    let mut group = group.clone();
    let mut rounds = Vec::new();
    let mut declined: Vec<CellRef> = Vec::new();
    loop {
        let evaluation = group.evaluate(config)?;
        let (Some(report), Some(aggregate)) = (&evaluation.agreement, &evaluation.aggregate) else {
            return Err(Error::Incomplete(
                "the group's judgments do not span all alternatives".into(),
            ));
        };
        let finish = |status| ConvergenceTrace {
            rounds: Vec::new(),
            status,
            final_indices: report.indices.clone(),
            final_w: aggregate.w.as_slice().to_vec(),
        };
        let status = if report.passing {
            Some(TerminalStatus::Converged)
        } else if rounds.len() >= cap {
            Some(TerminalStatus::CapReached)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok((
                group,
                ConvergenceTrace {
                    rounds,
                    ..finish(status)
                },
            ));
        }

        let request = match select_revision_target(&group, &evaluation, rounds.len(), &declined) {
            Ok(r) => r,
            Err(Error::AllDeclined) => {
                return Ok((
                    group,
                    ConvergenceTrace {
                        rounds,
                        ..finish(TerminalStatus::ExpertDeclined)
                    },
                ))
            }
            Err(Error::Escalate) => {
                return Ok((
                    group,
                    ConvergenceTrace {
                        rounds,
                        ..finish(TerminalStatus::Escalated)
                    },
                ))
            }
            Err(e) => return Err(e),
        };
        let response = responder.respond(&request, &group);
        declined = match response {
            RevisionResponse::Decline => vec![request.cell()],
            _ => Vec::new(),
        };
        let next = apply_revision(&group, &request, response)?;
        rounds.push(TraceRound {
            round: request.round,
            min_index: report.min_index(),
            worst_coordinate: report.worst_coordinate,
            request,
            response,
        });
        group = next;
    }
}
