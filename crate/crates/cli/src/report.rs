use std::fmt::Write;

use concord_core::session::{Results, Session, Status, TraceEntry};
use concord_core::simulate::{SimulationRun, SimulationSummary};

fn status_name(status: Status) -> &'static str {
    match status {
        Status::Collecting => "collecting",
        Status::Incomplete => "incomplete",
        Status::Evaluating => "evaluating",
        Status::AwaitingRevision => "awaiting-revision",
        Status::Converged => "converged",
        Status::Capped => "capped",
        Status::Escalated => "escalated",
    }
}

fn pair(session: &Session, i: usize, j: usize) -> String {
    format!("({}, {})", session.alternatives[i], session.alternatives[j])
}

pub fn evaluation(session: &Session, results: &Results) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "session {} (version {}): {} alternatives, {} experts, {} trees",
        if session.id.is_empty() {
            "-"
        } else {
            &session.id
        },
        session.version,
        session.alternatives.len(),
        session.experts.len(),
        results.total_trees
    );
    if !results.disconnected_experts.is_empty() {
        let _ = writeln!(
            out,
            "experts without a spanning tree: {}",
            results.disconnected_experts.join(", ")
        );
    }
    if results.status == Status::Incomplete {
        let suggested: Vec<String> = results
            .suggested_edges
            .iter()
            .map(|&(i, j)| pair(session, i, j))
            .collect();
        if suggested.is_empty() {
            let _ = writeln!(out, "no expert's comparisons connect all alternatives");
        } else {
            let _ = writeln!(
                out,
                "comparisons needed to connect the group: {}",
                suggested.join(", ")
            );
        }
    } else {
        let width = session
            .alternatives
            .iter()
            .map(|a| a.len())
            .max()
            .unwrap_or(0)
            .max(11);
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}", "alternative", "w", "K");
        for (l, name) in session.alternatives.iter().enumerate() {
            let _ = writeln!(
                out,
                "{name:<width$}  {:>6.4}  {:>6.4}",
                results.w[l], results.k[l]
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.4}",
            "sum",
            results.w.iter().sum::<f64>()
        );
        if let (Some(min), Some(l)) = (results.min_index, results.worst_coordinate) {
            let _ = writeln!(
                out,
                "min K = {min:.4} at {}, threshold {}",
                session.alternatives[l], session.config.threshold
            );
        }
        if let Some(r) = &session.open_request {
            let _ = writeln!(
                out,
                "revision request {} to {}: a{} = {:.4}, suggested {:.4}",
                r.id,
                session.experts[r.expert].id,
                pair(session, r.row, r.column),
                r.current_value,
                r.suggested_value
            );
        }
    }
    let _ = writeln!(out, "status: {}", status_name(results.status));
    out
}

pub fn trace_table(session: &Session, trace: &[TraceEntry]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "round  min K   expert  pair  current  suggested  answer"
    );
    for e in trace {
        let r = &e.request;
        let answer = match &e.answer {
            None => "open".to_string(),
            Some(a) => match a.value {
                Some(v) => format!("{:?} {v:.4}", a.action).to_lowercase(),
                None => format!("{:?}", a.action).to_lowercase(),
            },
        };
        let _ = writeln!(
            out,
            "{:>5}  {:>6}  {:>6}  {}  {:>7.4}  {:>9.4}  {answer}",
            e.round,
            e.min_index.map_or("-".into(), |m| format!("{m:.4}")),
            session.experts[r.expert].id,
            pair(session, r.row, r.column),
            r.current_value,
            r.suggested_value
        );
    }
    let _ = writeln!(out, "status: {}", status_name(session.status));
    out
}

pub fn simulation(runs: &[SimulationRun], summary: &SimulationSummary) -> String {
    let mut out = String::new();
    if runs.len() <= 10 {
        let _ = writeln!(out, "seed  rounds  status        L-inf error");
        for r in runs {
            let _ = writeln!(
                out,
                "{:>4}  {:>6}  {:<12}  {:.4}",
                r.seed,
                r.rounds(),
                format!("{:?}", r.trace.status),
                r.linf_error
            );
        }
    }
    let _ = writeln!(
        out,
        "converged {}/{} ({:.1}%), mean rounds {:.2}, max rounds {}, mean L-inf error {:.4}, max over converged {:.4}",
        summary.converged,
        summary.runs,
        100.0 * summary.converged_fraction,
        summary.mean_rounds,
        summary.max_rounds,
        summary.mean_error,
        summary.max_converged_error
    );
    out
}
