//! Single verification queries: a JSON query file names a model, a property,
//! a center point and a budget; the answer comes back as a JSON verdict with
//! search statistics and, for violations, the witness.

use std::fs;
use std::path::Path;

use robnet_core::data::InputDomain;
use robnet_core::properties::PropertyError;
use robnet_core::verifier::{verify, VerdictStatus, VerifierVerdict};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BudgetSection, PropertyFile};
use crate::model_io::{load_model, ModelIoError};
use crate::to_json_17;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error("invalid query: {reason}")]
    Invalid { reason: String },
    #[error("property not verifiable: {0}")]
    Property(PropertyError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainChoice {
    /// Intersect the ball with the unit box before verifying.
    Unit,
    #[default]
    Unbounded,
}

impl DomainChoice {
    pub fn to_domain(self) -> InputDomain {
        match self {
            DomainChoice::Unit => InputDomain::Unit,
            DomainChoice::Unbounded => InputDomain::Unbounded,
        }
    }
}

/// One verification query. A relative `model_path` is resolved against the
/// directory the query file lives in, so a query can ship next to its model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryFile {
    pub model_path: String,
    pub property: PropertyFile,
    pub center: Vec<f64>,
    /// True class of the center; CR/SCR verify against it.
    pub label: usize,
    /// Absent: the default budget (100k nodes, 30 s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
    #[serde(default, skip_serializing_if = "is_default_domain")]
    pub domain: DomainChoice,
}

fn is_default_domain(d: &DomainChoice) -> bool {
    *d == DomainChoice::Unbounded
}

/// JSON shape of the answer. Times are wall-clock and therefore not
/// byte-reproducible; everything else is.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictFile {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_margin: Option<f64>,
    pub stats: StatsFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsFile {
    pub nodes: u64,
    pub lps: u64,
    pub max_depth: usize,
    pub wall_ms: u64,
}

pub fn status_name(status: VerdictStatus) -> &'static str {
    match status {
        VerdictStatus::Holds => "holds",
        VerdictStatus::Violated => "violated",
        VerdictStatus::Timeout => "timeout",
    }
}

impl VerdictFile {
    pub fn from_verdict(verdict: &VerifierVerdict) -> VerdictFile {
        VerdictFile {
            status: String::from(status_name(verdict.status)),
            witness: verdict.witness.clone(),
            witness_margin: verdict.witness_margin,
            stats: StatsFile {
                nodes: verdict.stats.nodes,
                lps: verdict.stats.lps,
                max_depth: verdict.stats.max_depth,
                wall_ms: verdict.stats.wall_ms,
            },
        }
    }

    pub fn to_json(&self) -> String {
        to_json_17(self)
    }
}

pub fn load_query(path: &Path) -> Result<QueryFile, QueryError> {
    let text = fs::read_to_string(path)
        .map_err(|e| QueryError::Io { path: path.display().to_string(), source: e })?;
    serde_json::from_str(&text)
        .map_err(|e| QueryError::Json { path: path.display().to_string(), message: e.to_string() })
}

/// Loads the query and its model, runs the verifier, and returns the
/// verdict. `budget_seconds` overrides the query's wall-clock cap.
pub fn run_query(path: &Path, budget_seconds: Option<f64>) -> Result<VerdictFile, QueryError> {
    let query = load_query(path)?;
    let model_path = {
        let p = Path::new(&query.model_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            path.parent().unwrap_or_else(|| Path::new(".")).join(p)
        }
    };
    let net = load_model(&model_path)?;
    if query.center.len() != net.input_dim() {
        return Err(QueryError::Invalid {
            reason: format!(
                "center has {} coordinates, model expects {}",
                query.center.len(),
                net.input_dim()
            ),
        });
    }
    if query.center.iter().any(|v| !v.is_finite()) {
        return Err(QueryError::Invalid { reason: String::from("center must be finite") });
    }
    if query.label >= net.output_dim() {
        return Err(QueryError::Invalid {
            reason: format!("label {} out of range for {} outputs", query.label, net.output_dim()),
        });
    }
    let spec = query
        .property
        .to_spec()
        .map_err(|e| QueryError::Invalid { reason: e.to_string() })?;
    let mut budget = query.budget.as_ref().map(BudgetSection::to_budget).unwrap_or_default();
    if let Some(secs) = budget_seconds {
        budget.max_millis = Some((secs * 1000.0).round() as u64);
    }
    let verdict = verify(&spec, &net, &query.center, query.label, &budget, query.domain.to_domain())
        .map_err(QueryError::Property)?;
    Ok(VerdictFile::from_verdict(&verdict))
}
