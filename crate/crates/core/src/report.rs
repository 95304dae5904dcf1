//! JSON reports for coreset builds and discrepancy estimates.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::coreset::{level_error_term, CoresetResult, LevelRecord};
use crate::discrepancy::DiscrepancyReport;
use crate::error::Result;
use crate::gsw::Coloring;
use crate::kernels::KernelSpec;
use crate::rng::PRNG_NAME;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Coreset,
    Discrepancy,
}

/// The document written by [`write_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub kind: ReportKind,
    pub dataset_id: String,
    pub kernel: KernelSpec,
    pub seed: u64,
    pub indices: Vec<usize>,
    pub levels: Vec<LevelRecord>,
    pub error_estimate: f64,
    pub wall_ms: u64,
    pub prng: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_discrepancy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs: Option<Vec<i8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

impl ReportDocument {
    pub fn from_coreset(dataset_id: &str, result: &CoresetResult, wall_ms: u64) -> Result<Self> {
        Ok(ReportDocument {
            kind: ReportKind::Coreset,
            dataset_id: dataset_id.to_string(),
            kernel: result.config.kernel()?,
            seed: result.config.seed,
            indices: result.indices.clone(),
            levels: result.levels.clone(),
            error_estimate: result.error_estimate,
            wall_ms,
            prng: PRNG_NAME.to_string(),
            n: result.n,
            sup_discrepancy: None,
            signs: None,
            config: Some(result.config.clone()),
        })
    }

    /// A single-level document for the sup discrepancy of `coloring`.
    ///
    /// `error_estimate` is the KDE error that halving with this coloring
    /// would add, and `indices` is the `+1` class.
    pub fn from_discrepancy(
        dataset_id: &str,
        kernel: KernelSpec,
        seed: u64,
        coloring: &Coloring,
        report: &DiscrepancyReport,
        wall_ms: u64,
    ) -> Self {
        let n = coloring.len();
        let term = level_error_term(n, report.sup_discrepancy);
        ReportDocument {
            kind: ReportKind::Discrepancy,
            dataset_id: dataset_id.to_string(),
            kernel,
            seed,
            indices: (0..n).filter(|&i| coloring.signs()[i] == 1).collect(),
            levels: vec![LevelRecord {
                n_before: n,
                sup_discrepancy: report.sup_discrepancy,
                witness: report.witness.clone(),
                rebalance_flips: 0,
                negated: false,
                error_term: term,
                method: report.method,
                evaluations: report.evaluations,
                rejection: None,
            }],
            error_estimate: term,
            wall_ms,
            prng: PRNG_NAME.to_string(),
            n,
            sup_discrepancy: Some(report.sup_discrepancy),
            signs: Some(coloring.signs().to_vec()),
            config: None,
        }
    }
}

/// Compact JSON with a trailing newline.
pub fn report_to_string(doc: &ReportDocument) -> Result<String> {
    let mut s = serde_json::to_string(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<ReportDocument> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_report(doc: &ReportDocument, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, report_to_string(doc)?)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    parse_report(&fs::read_to_string(path)?)
}
