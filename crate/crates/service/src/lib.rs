//! HTTP facilitation service over [`concord_core::session`].
//!
//! Routes:
//! - `POST /sessions`
//! - `GET /sessions/:id`
//! - `PUT /sessions/:id/judgments`
//! - `POST /sessions/:id/evaluate`
//! - `GET /sessions/:id/agreement`
//! - `GET /sessions/:id/revision`
//! - `POST /sessions/:id/revision`

pub mod error;
pub mod store;

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use concord_core::feedback::RevisionRequest;
use concord_core::session::{
    CreateSession, JudgmentRecord, Results, RevisionAnswer, Session, Status,
};
use concord_core::Error;
use serde::{Deserialize, Serialize};

pub use error::{ServiceError, ServiceResult};
pub use store::SessionStore;

type Shared = Arc<SessionStore>;

/// Judgments either as a bare list or with the version they were based on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubmitBody {
    List(Vec<JudgmentRecord>),
    Versioned {
        judgments: Vec<JudgmentRecord>,
        #[serde(default)]
        version: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub version: u64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub version: u64,
    pub results: Results,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<RevisionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionView {
    pub expert_id: String,
    pub version: u64,
    #[serde(flatten)]
    pub request: RevisionRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumView {
    pub coordinate: usize,
    pub grades: u32,
    pub contributions: usize,
    /// `(grade, mass)` rows, ascending by grade.
    pub mass: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementView {
    pub version: u64,
    pub status: Status,
    pub threshold: f64,
    pub passing: bool,
    pub w: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub min_index: f64,
    pub worst_coordinate: usize,
    pub spectrums: Vec<SpectrumView>,
}

fn revision_view(session: &Session) -> Option<RevisionView> {
    session.open_request.as_ref().map(|r| RevisionView {
        expert_id: session.experts[r.expert].id.clone(),
        version: session.version,
        request: r.clone(),
    })
}

fn evaluate_response(session: &Session) -> EvaluateResponse {
    EvaluateResponse {
        version: session.version,
        results: session
            .results
            .clone()
            .expect("evaluated session has results"),
        request: revision_view(session),
    }
}

/// Agreement of the current judgments; does not change the session.
pub fn agreement_view(session: &Session) -> concord_core::Result<AgreementView> {
    let evaluation = session.evaluation()?;
    let (Some(aggregate), Some(report)) = (&evaluation.aggregate, &evaluation.agreement) else {
        return Err(Error::Incomplete(format!(
            "suggested comparisons {:?}",
            evaluation.completeness.suggested_edges
        )));
    };
    let spectrums = evaluation
        .spectrums()?
        .into_iter()
        .enumerate()
        .map(|(coordinate, s)| SpectrumView {
            coordinate,
            grades: s.grades(),
            contributions: s.contributions(),
            mass: s.mass().iter().map(|(&g, &m)| (g, m)).collect(),
        })
        .collect();
    Ok(AgreementView {
        version: session.version,
        status: session.status,
        threshold: report.threshold,
        passing: report.passing,
        w: aggregate.w.as_slice().to_vec(),
        k: report.indices.clone(),
        min_index: report.min_index(),
        worst_coordinate: report.worst_coordinate,
        spectrums,
    })
}

async fn create_session(
    State(store): State<Shared>,
    Json(request): Json<CreateSession>,
) -> ServiceResult<(StatusCode, Json<Session>)> {
    let session = store.create(request).await?;
    tracing::info!(id = %session.id, "session created");
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> ServiceResult<Json<Session>> {
    Ok(Json(store.get(&id).await?))
}

async fn submit_judgments(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Json(body): Json<SubmitBody>,
) -> ServiceResult<Json<SubmitResponse>> {
    let (judgments, version) = match body {
        SubmitBody::List(j) => (j, None),
        SubmitBody::Versioned { judgments, version } => (judgments, version),
    };
    let response = store
        .update(&id, move |s| {
            let version = s.submit_judgments(judgments, version)?;
            Ok(SubmitResponse {
                version,
                status: s.status,
            })
        })
        .await?;
    Ok(Json(response))
}

async fn evaluate(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> ServiceResult<Json<EvaluateResponse>> {
    let response = store
        .update(&id, |s| {
            s.evaluate()?;
            Ok(evaluate_response(s))
        })
        .await?;
    tracing::info!(%id, status = ?response.results.status, "evaluated");
    Ok(Json(response))
}

async fn agreement(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> ServiceResult<Json<AgreementView>> {
    Ok(Json(store.read(&id, agreement_view).await?))
}

async fn get_revision(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> ServiceResult<Json<RevisionView>> {
    let session = store.get(&id).await?;
    revision_view(&session)
        .map(Json)
        .ok_or(ServiceError::Core(Error::NoOpenRequest))
}

async fn respond_revision(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Json(answer): Json<RevisionAnswer>,
) -> ServiceResult<Json<EvaluateResponse>> {
    let response = store
        .update(&id, move |s| {
            s.respond_revision(answer)?;
            Ok(evaluate_response(s))
        })
        .await?;
    Ok(Json(response))
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/judgments", put(submit_judgments))
        .route("/sessions/:id/evaluate", post(evaluate))
        .route("/sessions/:id/agreement", get(agreement))
        .route(
            "/sessions/:id/revision",
            get(get_revision).post(respond_revision),
        )
        .with_state(store)
}

pub async fn serve(listener: tokio::net::TcpListener, store: Shared) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr()?, "listening");
    axum::serve(listener, router(store)).await
}
