//! Per-iteration solve reports, serialized as CSV rows.

use serde::Serialize;

use crate::mu_opt::{Block, MuSolveState};
use crate::su_opt::SuSolveState;
use crate::Result;

/// Outcome of one block update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    /// Initial point or single-user step; nothing to accept or reject.
    Start,
    Accepted,
    /// Candidate lowered the exact min-SINR and was discarded.
    Rejected,
    /// Bisection ran against the upper end of its bracket.
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub iteration: usize,
    /// `theta2`, `theta1`, `receivers`, `start`, or `ao` for single-user rows.
    pub block: &'static str,
    pub min_sinr: f64,
    pub min_sinr_db: f64,
    pub rate: f64,
    pub candidate: Option<f64>,
    pub accepted: Option<bool>,
    pub relaxed_delta: Option<f64>,
    pub relaxed_upper: Option<f64>,
    pub eps: Option<f64>,
    pub bisection_steps: Option<usize>,
    pub zf_fallback: Option<bool>,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SolveReport {
    pub rows: Vec<ReportRow>,
}

fn block_name(b: Block) -> &'static str {
    match b {
        Block::Theta2 => "theta2",
        Block::Theta1 => "theta1",
        Block::Receivers => "receivers",
    }
}

fn start_row(value: f64, block: &'static str, iteration: usize, status: StepStatus) -> ReportRow {
    ReportRow {
        iteration,
        block,
        min_sinr: value,
        min_sinr_db: 10.0 * value.log10(),
        rate: crate::system::rate(value),
        candidate: None,
        accepted: None,
        relaxed_delta: None,
        relaxed_upper: None,
        eps: None,
        bisection_steps: None,
        zf_fallback: None,
        status,
    }
}

impl SolveReport {
    /// One row for the initial point and one per block update; the min-SINR
    /// column holds the value after the update was accepted or rejected.
    pub fn from_multi_user(state: &MuSolveState) -> Self {
        let start = state.trace.first().copied().unwrap_or(state.min_sinr);
        let mut rows = vec![start_row(start, "start", 0, StepStatus::Start)];
        for s in &state.steps {
            let after = if s.accepted { s.candidate } else { s.before };
            let status = if !s.accepted {
                StepStatus::Rejected
            } else if s.saturated {
                StepStatus::Saturated
            } else {
                StepStatus::Accepted
            };
            let relaxed = matches!(s.block, Block::Theta1 | Block::Theta2);
            rows.push(ReportRow {
                candidate: Some(s.candidate),
                accepted: Some(s.accepted),
                relaxed_delta: s.relaxed_delta,
                relaxed_upper: s.relaxed_upper,
                eps: s.eps,
                bisection_steps: relaxed.then_some(s.bisection_steps),
                zf_fallback: Some(s.zf_fallback),
                ..start_row(after, block_name(s.block), s.iteration, status)
            });
        }
        SolveReport { rows }
    }

    /// Single-user AO: one row per completed iteration (SNR in the
    /// min-SINR columns).
    pub fn from_single_user(state: &SuSolveState) -> Self {
        let rows = state
            .trace
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i == 0 {
                    start_row(v, "start", 0, StepStatus::Start)
                } else {
                    start_row(v, "ao", i, StepStatus::Accepted)
                }
            })
            .collect();
        SolveReport { rows }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| crate::Error::Domain(e.to_string()))
    }
}

pub(crate) fn csv_error(e: csv::Error) -> crate::Error {
    crate::Error::Config(format!("csv: {e}"))
}
