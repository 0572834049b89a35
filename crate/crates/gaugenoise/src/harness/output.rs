//! CSV time series, metadata sidecars and the sweep index.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelName, ProtectionKind};
use super::experiment::RunOutcome;
use super::HarnessError;

pub const INDEX_FILE: &str = "index.csv";

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        fmt_f64(x)
    }
}

pub fn csv_header(model: ModelName) -> [&'static str; 8] {
    let model_column = match model {
        ModelName::U1 => "condensate",
        ModelName::Z2 => "imbalance_integrand",
    };
    [
        "time",
        "violation",
        model_column,
        "imbalance_avg",
        "fidelity",
        "entropy_midchain",
        "trace_error",
        "min_eig",
    ]
}

pub fn write_series_csv(path: &Path, outcome: &RunOutcome) -> Result<(), HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(csv_header(outcome.model)).map_err(csv_err)?;
    for (row, avg) in outcome.rows.iter().zip(&outcome.imbalance_avg) {
        w.write_record([
            fmt_f64(row.time),
            fmt_f64(row.violation),
            fmt_f64(row.model_column),
            fmt_f64(*avg),
            fmt_f64(row.fidelity),
            fmt_opt(row.entropy_midchain),
            fmt_f64(row.trace_error),
            fmt_opt(row.min_eig.unwrap_or(f64::NAN)),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// The `(time, violation)` columns of a run CSV.
pub fn read_violation(path: &Path) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Fit(format!("{} has no '{name}' column", path.display())))
    };
    let (ti, vi) = (col("time")?, col("violation")?);
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| HarnessError::Fit(format!("{}: bad number '{}': {e}", path.display(), &rec[i])))
        };
        t.push(parse(ti)?);
        v.push(parse(vi)?);
    }
    Ok((t, v))
}

#[derive(Clone, Debug, Serialize)]
struct Report {
    stem: String,
    gamma: f64,
    beta: f64,
    v: f64,
    eps_maxmix: f64,
    sector_blocked_eigensolver: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    sequence_compliant: Option<bool>,
    validity_threshold: f64,
    validity_max_ratio: f64,
    validity_pass: bool,
    validity_transitions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    validity_worst_omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validity_worst_rate: Option<f64>,
    accepted_steps: usize,
    rejected_steps: usize,
    rhs_evaluations: usize,
    max_trace_error: f64,
    max_hermiticity_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_eigenvalue: Option<f64>,
}

/// Resolved single-point configuration followed by a `[report]` table.
pub fn sidecar_text(config: &ExperimentConfig, stem: &str, outcome: &RunOutcome, compliant: Option<bool>) -> String {
    let v = &outcome.validity;
    let d = &outcome.diagnostics;
    let report = Report {
        stem: stem.to_string(),
        gamma: outcome.point.gamma,
        beta: outcome.point.beta,
        v: outcome.point.v,
        eps_maxmix: outcome.eps_maxmix,
        sector_blocked_eigensolver: outcome.sector_blocked,
        sequence_compliant: compliant,
        validity_threshold: v.threshold,
        validity_max_ratio: v.max_ratio,
        validity_pass: v.pass,
        validity_transitions: v.transitions.len(),
        validity_worst_omega: v.worst.map(|t| t.omega),
        validity_worst_rate: v.worst.map(|t| t.rate),
        accepted_steps: outcome.stats.accepted,
        rejected_steps: outcome.stats.rejected,
        rhs_evaluations: outcome.stats.rhs_evals,
        max_trace_error: d.max_trace_error,
        max_hermiticity_error: d.max_hermiticity_error,
        min_eigenvalue: d.min_eigenvalue.is_finite().then_some(d.min_eigenvalue),
    };
    let mut wrapper = toml::Table::new();
    wrapper.insert(
        "report".into(),
        toml::Value::try_from(&report).expect("report serializes"),
    );
    format!(
        "{}\n{}",
        config.at(outcome.point).to_toml(),
        toml::to_string(&wrapper).expect("report serializes")
    )
}

/// Deterministic file stem for one sweep point.
pub fn run_stem(config: &ExperimentConfig, outcome_point: super::config::RunPoint) -> String {
    if let Some(stem) = &config.output.stem {
        if config.points().len() == 1 {
            return stem.clone();
        }
    }
    let prot = match config.protection.kind {
        ProtectionKind::None => "none".to_string(),
        ProtectionKind::Quadratic => "quadratic".to_string(),
        ProtectionKind::Linear => format!(
            "{}-{}",
            config.protection.sequence.map(|s| s.to_string()).unwrap_or_default(),
            match config.protection.source {
                crate::models::GeneratorSource::Full => "full",
                crate::models::GeneratorSource::Pseudo => "pseudo",
            }
        ),
    };
    let prefix = config.output.stem.as_deref().unwrap_or("");
    let sep = if prefix.is_empty() { "" } else { "_" };
    format!(
        "{prefix}{sep}{}_{}_{}_g{}_b{}_V{}",
        config.model.kind,
        config.initial_state.replace(':', "-"),
        prot,
        outcome_point.gamma,
        outcome_point.beta,
        outcome_point.v
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub stem: String,
    pub csv: String,
    pub model: String,
    pub initial_state: String,
    pub protection: String,
    pub sequence: String,
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
    pub v: f64,
    pub eps_maxmix: f64,
    pub validity_max_ratio: f64,
    pub validity_pass: bool,
}

impl IndexEntry {
    pub fn new(config: &ExperimentConfig, stem: &str, outcome: &RunOutcome) -> Self {
        Self {
            stem: stem.to_string(),
            csv: format!("{stem}.csv"),
            model: config.model.kind.to_string(),
            initial_state: config.initial_state.clone(),
            protection: format!("{:?}", config.protection.kind).to_lowercase(),
            sequence: config.protection.sequence.map(|s| s.to_string()).unwrap_or_default(),
            lambda: config.lambda,
            gamma: outcome.point.gamma,
            beta: outcome.point.beta,
            v: outcome.point.v,
            eps_maxmix: outcome.eps_maxmix,
            validity_max_ratio: outcome.validity.max_ratio,
            validity_pass: outcome.validity.pass,
        }
    }
}

pub fn write_index(path: &Path, entries: &[IndexEntry]) -> Result<(), HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    for e in entries {
        w.serialize(e).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    r.deserialize()
        .collect::<Result<Vec<IndexEntry>, _>>()
        .map_err(|source| HarnessError::Csv {
            path: path.display().to_string(),
            source,
        })
}

/// Writes `<stem>.csv` and `<stem>.meta.toml` into `dir`.
pub fn write_run(
    dir: &Path,
    config: &ExperimentConfig,
    stem: &str,
    outcome: &RunOutcome,
    compliant: Option<bool>,
) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    write_series_csv(&csv_path, outcome)?;
    let meta = dir.join(format!("{stem}.meta.toml"));
    fs::write(&meta, sidecar_text(config, stem, outcome, compliant)).map_err(|e| HarnessError::io(&meta, e))?;
    Ok(csv_path)
}
