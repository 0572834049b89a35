//! Experiment configuration files (TOML).
//!
//! Grid-valued quantities (`gamma`, `beta`, `v`) accept a scalar or an array.
//! A run sidecar is itself a valid configuration: the `report` table it
//! carries is ignored on load.

use std::fmt;
use std::path::{Path, PathBuf};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::algebra::Boundary;
use crate::dynamics::{self, IntegratorConfig, TimeGrid};
use crate::models::{
    ErrorKnobs, GeneratorSource, InitialStatePreset, ModelKind, ProtectionSequence, SequenceKind, U1Params,
    Z2Params,
};
use crate::noise::DEFAULT_OMEGA_CUTOFF;
use crate::redfield::DEFAULT_VALIDITY_THRESHOLD;

use super::HarnessError;

/// Tables written by the harness into sidecars and skipped when parsing.
pub const RESERVED_TABLES: &[&str] = &["report"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    One(f64),
    Many(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::One(x) => vec![*x],
            Grid::Many(v) => v.clone(),
        }
    }
}

impl From<f64> for Grid {
    fn from(x: f64) -> Self {
        Grid::One(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    U1,
    Z2,
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelName::U1 => "u1",
            ModelName::Z2 => "z2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelName,
    #[serde(default = "default_sites")]
    pub sites: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "one")]
    pub j: f64,
    /// U(1) matter mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Z₂ electric field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Z₂ target sector label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_target: Option<i32>,
    /// Z₂ coherent-error couplings η₁..η₄.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<[f64; 4]>,
}

fn default_sites() -> usize {
    4
}

fn default_boundary() -> Boundary {
    Boundary::Periodic
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtectionKind {
    None,
    Linear,
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectionSection {
    #[serde(default = "protection_none")]
    pub kind: ProtectionKind,
    #[serde(default = "source_full")]
    pub source: GeneratorSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceKind>,
    /// Rational coefficients "p/q" for the custom sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<String>>,
    #[serde(default = "zero_grid")]
    pub v: Grid,
}

fn protection_none() -> ProtectionKind {
    ProtectionKind::None
}

fn source_full() -> GeneratorSource {
    GeneratorSource::Full
}

fn zero_grid() -> Grid {
    Grid::One(0.0)
}

impl Default for ProtectionSection {
    fn default() -> Self {
        Self {
            kind: ProtectionKind::None,
            source: GeneratorSource::Full,
            sequence: None,
            coefficients: None,
            v: zero_grid(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    PowerLaw,
    Rtn,
    Composite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpSelection {
    Both,
    Matter,
    Gauge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "power_law")]
    pub spectrum: SpectrumKind,
    #[serde(default = "zero_grid")]
    pub gamma: Grid,
    #[serde(default = "beta_one")]
    pub beta: Grid,
    #[serde(default = "omega_cutoff")]
    pub omega_cutoff: f64,
    /// Switching rate of a single telegraph fluctuator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Rate band and exponent of the fluctuator ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "jumps_both")]
    pub jumps: JumpSelection,
}

fn power_law() -> SpectrumKind {
    SpectrumKind::PowerLaw
}

fn beta_one() -> Grid {
    Grid::One(1.0)
}

fn omega_cutoff() -> f64 {
    DEFAULT_OMEGA_CUTOFF
}

fn jumps_both() -> JumpSelection {
    JumpSelection::Both
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            spectrum: SpectrumKind::PowerLaw,
            gamma: zero_grid(),
            beta: beta_one(),
            omega_cutoff: DEFAULT_OMEGA_CUTOFF,
            rate: None,
            r1: None,
            r2: None,
            alpha: None,
            jumps: JumpSelection::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Log,
    Uniform,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "grid_log")]
    pub kind: GridKind,
    #[serde(default = "t_min")]
    pub t_min: f64,
    #[serde(default = "t_max")]
    pub t_max: f64,
    #[serde(default = "points")]
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

fn grid_log() -> GridKind {
    GridKind::Log
}

fn t_min() -> f64 {
    0.1
}

fn t_max() -> f64 {
    1000.0
}

fn points() -> usize {
    400
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            kind: GridKind::Log,
            t_min: t_min(),
            t_max: t_max(),
            points: points(),
            times: None,
        }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<TimeGrid, dynamics::DynamicsError> {
        match self.kind {
            GridKind::Log => TimeGrid::log(self.t_min, self.t_max, self.points),
            GridKind::Uniform => TimeGrid::uniform(self.t_max, self.points),
            GridKind::Explicit => TimeGrid::explicit(self.times.clone().unwrap_or_default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "max_step")]
    pub max_step: f64,
    #[serde(default = "yes")]
    pub renormalize_trace: bool,
    #[serde(default = "stride")]
    pub positivity_stride: usize,
}

fn rel_tol() -> f64 {
    dynamics::DEFAULT_REL_TOL
}

fn abs_tol() -> f64 {
    dynamics::DEFAULT_ABS_TOL
}

fn max_step() -> f64 {
    dynamics::DEFAULT_MAX_STEP
}

fn yes() -> bool {
    true
}

fn stride() -> usize {
    1
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            rel_tol: rel_tol(),
            abs_tol: abs_tol(),
            max_step: max_step(),
            renormalize_trace: true,
            positivity_stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "output_dir")]
    pub dir: PathBuf,
    /// File stem for single runs; sweeps derive stems from parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
    #[serde(default = "yes")]
    pub entropy: bool,
}

fn output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: output_dir(),
            stem: None,
            entropy: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub initial_state: String,
    #[serde(default)]
    pub protection: ProtectionSection,
    /// Coherent gauge-breaking error strength λ.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default = "validity_threshold")]
    pub validity_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

fn validity_threshold() -> f64 {
    DEFAULT_VALIDITY_THRESHOLD
}

/// One point of the (γ, β, V) product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunPoint {
    pub gamma: f64,
    pub beta: f64,
    pub v: f64,
}

fn fmt_err(path: Option<&Path>, msg: impl fmt::Display) -> HarnessError {
    match path {
        Some(p) => HarnessError::Config(format!("{}: {msg}", p.display())),
        None => HarnessError::Config(msg.to_string()),
    }
}

fn parse_rational(s: &str) -> Option<Rational64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let (n, d) = (n.trim().parse::<i64>().ok()?, d.trim().parse::<i64>().ok()?);
            (d != 0).then(|| Rational64::new(n, d))
        }
        None => s.parse::<i64>().ok().map(Rational64::from_integer),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| fmt_err(Some(path), e))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(m) => fmt_err(Some(path), m),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| fmt_err(None, e))?;
        for key in RESERVED_TABLES {
            table.remove(*key);
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| fmt_err(None, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let m = &self.model;
        if !(m.j > 0.0 && m.j.is_finite()) {
            return bad(format!("model.j must be positive, got {}", m.j));
        }
        match m.kind {
            ModelName::U1 => {
                if m.h.is_some() || m.g_target.is_some() || m.eta.is_some() {
                    return bad("model.h, model.g_target and model.eta only apply to z2".into());
                }
            }
            ModelName::Z2 => {
                if m.mu.is_some() {
                    return bad("model.mu only applies to u1".into());
                }
                if let Some(g) = m.g_target {
                    if g != 1 && g != -1 {
                        return bad(format!("model.g_target must be +1 or -1, got {g}"));
                    }
                }
            }
        }
        let preset = self.preset()?;
        let model_of_preset = preset.to_string();
        if !model_of_preset.starts_with("custom") && !model_of_preset.starts_with(&m.kind.to_string()) {
            return bad(format!("initial_state '{preset}' does not belong to model {}", m.kind));
        }
        for (name, grid, allow_zero) in [
            ("noise.gamma", &self.noise.gamma, true),
            ("noise.beta", &self.noise.beta, false),
            ("protection.v", &self.protection.v, true),
        ] {
            let values = grid.values();
            if values.is_empty() {
                return bad(format!("{name} grid is empty"));
            }
            for x in values {
                if !x.is_finite() || x < 0.0 || (!allow_zero && x == 0.0) {
                    return bad(format!("{name} has invalid value {x}"));
                }
            }
        }
        if self.noise.beta.values().iter().any(|&b| b >= 2.0) {
            return bad("noise.beta must lie in (0, 2)".into());
        }
        if !(self.noise.omega_cutoff > 0.0) {
            return bad("noise.omega_cutoff must be positive".into());
        }
        match self.noise.spectrum {
            SpectrumKind::PowerLaw => {}
            SpectrumKind::Rtn => {
                if self.noise.rate.is_none() {
                    return bad("noise.rate is required for the rtn spectrum".into());
                }
            }
            SpectrumKind::Composite => {
                if self.noise.r1.is_none() || self.noise.r2.is_none() {
                    return bad("noise.r1 and noise.r2 are required for the composite spectrum".into());
                }
            }
        }
        let p = &self.protection;
        match p.kind {
            ProtectionKind::Linear => {
                self.sequence()?;
            }
            ProtectionKind::None | ProtectionKind::Quadratic => {
                if p.sequence.is_some() || p.coefficients.is_some() {
                    return bad("protection.sequence needs protection.kind = \"linear\"".into());
                }
            }
        }
        if p.kind == ProtectionKind::None && p.v.values().iter().any(|&v| v != 0.0) {
            return bad("protection.v is set but protection.kind is \"none\"".into());
        }
        if p.source == GeneratorSource::Pseudo && m.kind == ModelName::U1 {
            return bad("pseudogenerator protection is only defined for z2".into());
        }
        if !self.lambda.is_finite() {
            return bad("lambda must be finite".into());
        }
        self.grid.build().map_err(|e| HarnessError::Config(format!("grid: {e}")))?;
        self.integrator_config()?.validate().map_err(|e| HarnessError::Config(format!("integrator: {e}")))?;
        if !(self.validity_threshold > 0.0) {
            return bad("validity_threshold must be positive".into());
        }
        Ok(())
    }

    pub fn preset(&self) -> Result<InitialStatePreset, HarnessError> {
        self.initial_state.parse().map_err(HarnessError::Config)
    }

    pub fn model_kind(&self) -> ModelKind {
        let m = &self.model;
        match m.kind {
            ModelName::U1 => ModelKind::U1(U1Params {
                j: m.j,
                mu: m.mu.unwrap_or(U1Params::default().mu),
                sites: m.sites,
                boundary: m.boundary,
            }),
            ModelName::Z2 => ModelKind::Z2(Z2Params {
                j: m.j,
                h: m.h.unwrap_or(Z2Params::default().h),
                sites: m.sites,
                boundary: m.boundary,
                g_target: m.g_target.unwrap_or(1),
            }),
        }
    }

    pub fn error_knobs(&self) -> ErrorKnobs {
        match self.model.kind {
            ModelName::U1 => ErrorKnobs::U1,
            ModelName::Z2 => ErrorKnobs::Z2 {
                eta: self.model.eta.unwrap_or([1.0; 4]),
            },
        }
    }

    pub fn sequence(&self) -> Result<Option<ProtectionSequence>, HarnessError> {
        let p = &self.protection;
        if p.kind != ProtectionKind::Linear {
            return Ok(None);
        }
        let kind = p
            .sequence
            .ok_or_else(|| HarnessError::Config("linear protection needs protection.sequence".into()))?;
        let seq = match kind {
            SequenceKind::Custom => {
                let raw = p.coefficients.as_ref().ok_or_else(|| {
                    HarnessError::Config("custom sequence needs protection.coefficients".into())
                })?;
                let coeffs = raw
                    .iter()
                    .map(|s| {
                        parse_rational(s)
                            .ok_or_else(|| HarnessError::Config(format!("bad rational coefficient '{s}'")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                ProtectionSequence::custom(coeffs)
            }
            kind => {
                if p.coefficients.is_some() {
                    return Err(HarnessError::Config(
                        "protection.coefficients only apply to the custom sequence".into(),
                    ));
                }
                ProtectionSequence::new(kind, self.model.sites).map_err(|e| HarnessError::Config(e.to_string()))?
            }
        };
        if seq.len() != self.model.sites {
            return Err(HarnessError::Config(format!(
                "sequence has {} coefficients for {} sites",
                seq.len(),
                self.model.sites
            )));
        }
        Ok(Some(seq))
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig, HarnessError> {
        let grid = self.grid.build().map_err(|e| HarnessError::Config(format!("grid: {e}")))?;
        let i = &self.integrator;
        Ok(IntegratorConfig {
            rel_tol: i.rel_tol,
            abs_tol: i.abs_tol,
            max_step: i.max_step,
            grid,
            renormalize_trace: i.renormalize_trace,
            positivity_stride: i.positivity_stride,
        })
    }

    /// Cartesian product of the grids, γ outermost.
    pub fn points(&self) -> Vec<RunPoint> {
        let mut out = Vec::new();
        for gamma in self.noise.gamma.values() {
            for beta in self.noise.beta.values() {
                for v in self.protection.v.values() {
                    out.push(RunPoint { gamma, beta, v });
                }
            }
        }
        out
    }

    /// This configuration restricted to a single point.
    pub fn at(&self, point: RunPoint) -> Self {
        let mut c = self.clone();
        c.noise.gamma = Grid::One(point.gamma);
        c.noise.beta = Grid::One(point.beta);
        c.protection.v = Grid::One(point.v);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
initial_state = "u1_vacuum"
[model]
kind = "u1"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model.sites, 4);
        assert_eq!(c.grid.points, 400);
        assert_eq!(c.points().len(), 1);
        assert_eq!(c.integrator_config().unwrap().grid.len(), 401);
    }

    #[test]
    fn grids_expand() {
        let text = format!("{MINIMAL}[noise]\ngamma = [0.01, 0.05, 0.1]\nbeta = [1.0, 1.7]\n");
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(c.points().len(), 6);
    }

    #[test]
    fn rejects_unknown_fields_and_empty_grids() {
        assert!(ExperimentConfig::parse(&format!("{MINIMAL}bogus = 1\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("{MINIMAL}[noise]\ngamma = []\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("{MINIMAL}[protection]\nv = [-1.0]\n")).is_err());
        assert!(ExperimentConfig::parse("initial_state = \"z2_cdw\"\n[model]\nkind = \"u1\"\n").is_err());
    }

    #[test]
    fn reserved_tables_are_ignored() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        let text = format!("{}\n[report]\nmax_ratio = 0.01\n", c.to_toml());
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn custom_sequence_parses() {
        let text = format!("{MINIMAL}[protection]\nkind = \"linear\"\nsequence = \"custom\"\ncoefficients = [\"1\", \"-1/2\", \"3\", \"4\"]\nv = 10.0\n");
        let c = ExperimentConfig::parse(&text).unwrap();
        let seq = c.sequence().unwrap().unwrap();
        assert_eq!(seq.coefficients()[1], Rational64::new(-1, 2));
    }
}
