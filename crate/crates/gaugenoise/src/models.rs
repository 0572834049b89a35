//! The spin-1/2 U(1) quantum link model and the Z₂ lattice gauge theory:
//! Hamiltonians, gauge generators, protection and error terms, jump
//! operators and the preset initial states.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    self, embed_product, joint_eigenspaces, pauli, AlgebraError, Boundary, CMatrix, CVector, LatticeSpec,
    OperatorMatrix, StateVector, C64,
};

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("coupling J must be positive, got {0}")]
    NonPositiveCoupling(f64),
    #[error("parameter {name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("the staggered U(1) model needs an even number of sites on a periodic chain, got {0}")]
    OddPeriodicChain(usize),
    #[error("Z2 target sector label must be +1 or -1, got {0}")]
    InvalidTarget(i32),
    #[error("sequence has {got} coefficients for {expected} sites")]
    SequenceLength { expected: usize, got: usize },
    #[error("sequence {0} is only defined for L = 4")]
    SequenceNeedsFourSites(SequenceKind),
    #[error("sequence coefficients overflow for L = {0}")]
    SequenceOverflow(usize),
    #[error("custom sequences are built from explicit coefficients")]
    CustomWithoutCoefficients,
    #[error("model {model} has no pseudogenerators")]
    NoPseudogenerators { model: &'static str },
    #[error("preset {preset} is not defined for the {model} model")]
    PresetMismatch { preset: String, model: &'static str },
    #[error("initial state preset {preset} is not in the target sector ({detail})")]
    PresetOutsideTarget { preset: String, detail: String },
    #[error("invalid custom bitstring '{0}': {1}")]
    InvalidBitstring(String, String),
    #[error("no link configuration satisfies the target Gauss law for preset {0}")]
    NoGaussConsistentLinks(String),
    #[error("gauge symmetry violated at build time: [H0, G_{site}] = {norm:e}")]
    SymmetryBroken { site: usize, norm: f64 },
    #[error("generator eigenvalue {0} is not an integer")]
    NonIntegerSector(f64),
    #[error("error knobs do not match the {0} model")]
    KnobMismatch(&'static str),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct U1Params {
    pub j: f64,
    pub mu: f64,
    pub sites: usize,
    pub boundary: Boundary,
}

impl Default for U1Params {
    fn default() -> Self {
        Self {
            j: 1.0,
            mu: 0.5,
            sites: 4,
            boundary: Boundary::Periodic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Z2Params {
    pub j: f64,
    pub h: f64,
    pub sites: usize,
    pub boundary: Boundary,
    /// Common target label g^tar (±1) for every site.
    pub g_target: i32,
}

impl Default for Z2Params {
    fn default() -> Self {
        Self {
            j: 1.0,
            h: 0.54,
            sites: 4,
            boundary: Boundary::Periodic,
            g_target: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    U1(U1Params),
    Z2(Z2Params),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::U1(_) => "u1",
            ModelKind::Z2(_) => "z2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpKind {
    Matter,
    Gauge,
}

#[derive(Clone, Debug)]
pub struct JumpOperator {
    pub label: String,
    pub kind: JumpKind,
    pub op: OperatorMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorSource {
    Full,
    Pseudo,
}

#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub model: ModelKind,
    pub lattice: LatticeSpec,
    pub h0: OperatorMatrix,
    pub generators: Vec<OperatorMatrix>,
    pub pseudogenerators: Option<Vec<OperatorMatrix>>,
    pub jump_ops: Vec<JumpOperator>,
    pub target_sector: Vec<i32>,
}

impl ModelBundle {
    pub fn sites(&self) -> usize {
        self.lattice.sites()
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    fn matter(&self, j: usize) -> usize {
        self.lattice.matter_index(j as isize).expect("site in range")
    }

    /// σᶻ on matter site j.
    pub fn matter_sigma_z(&self, j: usize) -> OperatorMatrix {
        embed_product(&self.lattice, &[(self.matter(j), &pauli::sigma_z())]).expect("valid subsystem")
    }

    /// Occupation n_j on matter site j.
    pub fn matter_number(&self, j: usize) -> OperatorMatrix {
        embed_product(&self.lattice, &[(self.matter(j), &pauli::number())]).expect("valid subsystem")
    }

    /// (G_j − g^tar_j)² summed over sites.
    pub fn quadratic_protection(&self) -> OperatorMatrix {
        build_quadratic_protection(self)
    }
}

fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite { name, value })
    }
}

fn check_symmetry(h0: &OperatorMatrix, generators: &[OperatorMatrix]) -> Result<()> {
    let scale = h0.max_abs().max(1.0);
    for (k, g) in generators.iter().enumerate() {
        let norm = algebra::max_abs(&h0.commutator(g));
        if norm > SYMMETRY_TOL * scale {
            return Err(ModelError::SymmetryBroken { site: k + 1, norm });
        }
    }
    Ok(())
}

fn sum_ops(dim: usize, ops: impl IntoIterator<Item = OperatorMatrix>) -> OperatorMatrix {
    let mut acc = CMatrix::zeros(dim, dim);
    for op in ops {
        acc += op.matrix();
    }
    OperatorMatrix::new(acc).expect("square")
}

fn cscale(m: &CMatrix, s: f64) -> CMatrix {
    m * C64::new(s, 0.0)
}

fn parity(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn build_u1_qlm(params: &U1Params) -> Result<ModelBundle> {
    if params.j.is_nan() || params.j <= 0.0 {
        return Err(ModelError::NonPositiveCoupling(params.j));
    }
    check_finite("mu", params.mu)?;
    if params.boundary == Boundary::Periodic && params.sites % 2 == 1 {
        return Err(ModelError::OddPeriodicChain(params.sites));
    }
    let lat = LatticeSpec::new(params.sites, params.boundary)?;
    let d = lat.dim();
    let l = params.sites;
    let (sm, sp, sz, sx) = (pauli::sigma_minus(), pauli::sigma_plus(), pauli::sigma_z(), pauli::sigma_x());
    let link_sz = cscale(&sz, 0.5);
    let link_sx = cscale(&sx, 0.5);
    let m = |j: usize| lat.matter_index(j as isize).expect("site");

    let mut h0 = CMatrix::zeros(d, d);
    for j in 1..=l {
        if let Some(link) = lat.link_index(j as isize) {
            let hop = embed_product(&lat, &[(m(j), &sm), (link, &sp), (m(j % l + 1), &sm)])?;
            h0 += cscale(hop.matrix(), params.j);
            h0 += cscale(&hop.matrix().adjoint(), params.j);
        }
        h0 += cscale(embed_product(&lat, &[(m(j), &sz)])?.matrix(), params.mu / 2.0);
    }
    let h0 = OperatorMatrix::hermitian(h0)?;

    let mut generators = Vec::with_capacity(l);
    for j in 1..=l {
        let mut g = cscale(embed_product(&lat, &[(m(j), &pauli::number())])?.matrix(), 1.0);
        for link in [lat.link_index(j as isize - 1), lat.link_index(j as isize)].into_iter().flatten() {
            g += embed_product(&lat, &[(link, &link_sz)])?.matrix();
        }
        generators.push(OperatorMatrix::hermitian(cscale(&g, parity(j)))?);
    }
    check_symmetry(&h0, &generators)?;

    let mut jump_ops = Vec::new();
    for j in 1..=l {
        jump_ops.push(JumpOperator {
            label: format!("sigma_x[{j}]"),
            kind: JumpKind::Matter,
            op: embed_product(&lat, &[(m(j), &sx)])?,
        });
    }
    for j in 1..=l {
        if let Some(link) = lat.link_index(j as isize) {
            jump_ops.push(JumpOperator {
                label: format!("s_x[{j},{}]", j % l + 1),
                kind: JumpKind::Gauge,
                op: embed_product(&lat, &[(link, &link_sx)])?,
            });
        }
    }

    Ok(ModelBundle {
        model: ModelKind::U1(params.clone()),
        lattice: lat,
        h0,
        generators,
        pseudogenerators: None,
        jump_ops,
        target_sector: vec![0; l],
    })
}

pub fn build_z2_lgt(params: &Z2Params) -> Result<ModelBundle> {
    if params.j.is_nan() || params.j <= 0.0 {
        return Err(ModelError::NonPositiveCoupling(params.j));
    }
    check_finite("h", params.h)?;
    if params.g_target.abs() != 1 {
        return Err(ModelError::InvalidTarget(params.g_target));
    }
    let lat = LatticeSpec::new(params.sites, params.boundary)?;
    let d = lat.dim();
    let l = params.sites;
    let (sm, sp, sz, sx) = (pauli::sigma_minus(), pauli::sigma_plus(), pauli::sigma_z(), pauli::sigma_x());
    let m = |j: usize| lat.matter_index(j as isize).expect("site");

    let mut h0 = CMatrix::zeros(d, d);
    for j in 1..=l {
        if let Some(link) = lat.link_index(j as isize) {
            let hop = embed_product(&lat, &[(m(j), &sp), (link, &sz), (m(j % l + 1), &sm)])?;
            h0 += cscale(hop.matrix(), params.j);
            h0 += cscale(&hop.matrix().adjoint(), params.j);
            h0 -= cscale(embed_product(&lat, &[(link, &sx)])?.matrix(), params.h);
        }
    }
    let h0 = OperatorMatrix::hermitian(h0)?;

    // (−1)^n = diag(−1, +1) in the occupied-first basis
    let parity_op = cscale(&sz, -1.0);
    let mut generators = Vec::with_capacity(l);
    let mut pseudogenerators = Vec::with_capacity(l);
    for j in 1..=l {
        let links: Vec<usize> = [lat.link_index(j as isize - 1), lat.link_index(j as isize)]
            .into_iter()
            .flatten()
            .collect();
        let mut factors: Vec<(usize, &CMatrix)> = links.iter().map(|&k| (k, &sx)).collect();
        let tt = embed_product(&lat, &factors)?;
        factors.push((m(j), &parity_op));
        generators.push(embed_product(&lat, &factors)?);
        let n = embed_product(&lat, &[(m(j), &pauli::number())])?;
        let w = tt.matrix() + cscale(n.matrix(), 2.0 * params.g_target as f64);
        pseudogenerators.push(OperatorMatrix::hermitian(w)?);
    }
    check_symmetry(&h0, &generators)?;

    let mut jump_ops = Vec::new();
    for j in 1..=l {
        jump_ops.push(JumpOperator {
            label: format!("a+a_dag[{j}]"),
            kind: JumpKind::Matter,
            op: embed_product(&lat, &[(m(j), &sx)])?,
        });
    }
    for j in 1..=l {
        if let Some(link) = lat.link_index(j as isize) {
            jump_ops.push(JumpOperator {
                label: format!("tau_z[{j},{}]", j % l + 1),
                kind: JumpKind::Gauge,
                op: embed_product(&lat, &[(link, &sz)])?,
            });
        }
    }

    Ok(ModelBundle {
        model: ModelKind::Z2(params.clone()),
        lattice: lat,
        h0,
        generators,
        pseudogenerators: Some(pseudogenerators),
        jump_ops,
        target_sector: vec![params.g_target; l],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    #[serde(rename = "compliant_L4")]
    CompliantL4,
    Staggered,
    StarkStaggered,
    StarkLinear,
    Z2Geometric,
    Custom,
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SequenceKind::CompliantL4 => "compliant_L4",
            SequenceKind::Staggered => "staggered",
            SequenceKind::StarkStaggered => "stark_staggered",
            SequenceKind::StarkLinear => "stark_linear",
            SequenceKind::Z2Geometric => "z2_geometric",
            SequenceKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtectionSequence {
    pub kind: SequenceKind,
    coefficients: Vec<Rational64>,
}

impl ProtectionSequence {
    pub fn new(kind: SequenceKind, sites: usize) -> Result<Self> {
        let r = |n: i64, d: i64| Rational64::new(n, d);
        let coefficients = match kind {
            SequenceKind::CompliantL4 => {
                if sites != 4 {
                    return Err(ModelError::SequenceNeedsFourSites(kind));
                }
                vec![r(-115, 122), r(116, 122), r(-118, 122), r(122, 122)]
            }
            SequenceKind::Staggered => (1..=sites).map(|j| r(parity(j) as i64, 1)).collect(),
            SequenceKind::StarkStaggered => (1..=sites).map(|j| r(j as i64 * parity(j) as i64, 1)).collect(),
            SequenceKind::StarkLinear => (1..=sites).map(|j| r(j as i64, 1)).collect(),
            SequenceKind::Z2Geometric => (1..=sites)
                .map(|j| {
                    (-6i64)
                        .checked_pow(j as u32)
                        .and_then(|p| p.checked_add(5))
                        .map(|n| r(n, 11))
                        .ok_or(ModelError::SequenceOverflow(sites))
                })
                .collect::<Result<_>>()?,
            SequenceKind::Custom => return Err(ModelError::CustomWithoutCoefficients),
        };
        Ok(Self { kind, coefficients })
    }

    pub fn custom(coefficients: Vec<Rational64>) -> Self {
        Self {
            kind: SequenceKind::Custom,
            coefficients,
        }
    }

    pub fn coefficients(&self) -> &[Rational64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|c| *c.numer() as f64 / *c.denom() as f64)
            .collect()
    }
}

/// Σ_j c_j G_j, or Σ_j c_j W_j for the pseudogenerator source.
pub fn build_linear_protection(
    bundle: &ModelBundle,
    seq: &ProtectionSequence,
    source: GeneratorSource,
) -> Result<OperatorMatrix> {
    let ops = match source {
        GeneratorSource::Full => &bundle.generators,
        GeneratorSource::Pseudo => bundle.pseudogenerators.as_ref().ok_or(ModelError::NoPseudogenerators {
            model: bundle.model.name(),
        })?,
    };
    if seq.len() != ops.len() {
        return Err(ModelError::SequenceLength {
            expected: ops.len(),
            got: seq.len(),
        });
    }
    Ok(sum_ops(
        bundle.dim(),
        seq.as_f64().into_iter().zip(ops).map(|(c, g)| g.scaled(c)),
    ))
}

pub fn build_quadratic_protection(bundle: &ModelBundle) -> OperatorMatrix {
    let d = bundle.dim();
    let id = CMatrix::identity(d, d);
    let mut acc = CMatrix::zeros(d, d);
    for (g, &t) in bundle.generators.iter().zip(&bundle.target_sector) {
        let shifted = g.matrix() - cscale(&id, t as f64);
        acc += &shifted * &shifted;
    }
    OperatorMatrix::hermitian((&acc + acc.adjoint()) * C64::new(0.5, 0.0)).expect("Hermitian sum of squares")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorKnobs {
    U1,
    Z2 { eta: [f64; 4] },
}

impl ErrorKnobs {
    pub fn default_for(model: &ModelKind) -> Self {
        match model {
            ModelKind::U1(_) => ErrorKnobs::U1,
            ModelKind::Z2(_) => ErrorKnobs::Z2 { eta: [1.0; 4] },
        }
    }
}

/// The gauge-breaking Hamiltonian H₁ (without the λ prefactor).
pub fn build_coherent_error(bundle: &ModelBundle, knobs: ErrorKnobs) -> Result<OperatorMatrix> {
    let lat = &bundle.lattice;
    let l = lat.sites();
    let d = lat.dim();
    let m = |j: usize| lat.matter_index(j as isize).expect("site");
    let (sm, sp, sz, sx) = (pauli::sigma_minus(), pauli::sigma_plus(), pauli::sigma_z(), pauli::sigma_x());
    let mut h1 = CMatrix::zeros(d, d);
    match (&bundle.model, knobs) {
        (ModelKind::U1(_), ErrorKnobs::U1) => {
            let norm = (0.5f64 * 1.5).sqrt();
            let link_term = cscale(&(&sx + &sz), 0.5 / norm);
            for j in 1..=l {
                if let Some(link) = lat.link_index(j as isize) {
                    let next = m(j % l + 1);
                    h1 += embed_product(lat, &[(m(j), &sm), (next, &sm)])?.matrix();
                    h1 += embed_product(lat, &[(m(j), &sp), (next, &sp)])?.matrix();
                    h1 += embed_product(lat, &[(link, &link_term)])?.matrix();
                }
            }
        }
        (ModelKind::Z2(_), ErrorKnobs::Z2 { eta }) => {
            let id = pauli::identity();
            let dressing = cscale(&sp, eta[0]) + cscale(&sm, eta[1]) + &id;
            let n = pauli::number();
            for j in 1..=l {
                if let Some(link) = lat.link_index(j as isize) {
                    let next = m(j % l + 1);
                    let hop = embed_product(lat, &[(m(j), &sp), (next, &sm), (link, &dressing)])?;
                    h1 += hop.matrix() + hop.matrix().adjoint();
                    h1 += cscale(embed_product(lat, &[(m(j), &n), (link, &sz)])?.matrix(), eta[2]);
                    h1 -= cscale(embed_product(lat, &[(next, &n), (link, &sz)])?.matrix(), eta[3]);
                    h1 += embed_product(lat, &[(link, &sz)])?.matrix();
                }
            }
        }
        (model, _) => return Err(ModelError::KnobMismatch(model.name())),
    }
    Ok(OperatorMatrix::hermitian(h1)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplianceReport {
    /// Σ_j c_j (g_j − g^tar_j) for every supplied sector.
    pub values: Vec<(Vec<i32>, Rational64)>,
    pub compliant: bool,
}

pub fn check_compliance(seq: &ProtectionSequence, sectors: &[Vec<i32>], target: &[i32]) -> Result<ComplianceReport> {
    if target.len() != seq.len() {
        return Err(ModelError::SequenceLength {
            expected: target.len(),
            got: seq.len(),
        });
    }
    let mut values = Vec::with_capacity(sectors.len());
    let mut compliant = true;
    for g in sectors {
        if g.len() != seq.len() {
            return Err(ModelError::SequenceLength {
                expected: g.len(),
                got: seq.len(),
            });
        }
        let v: Rational64 = seq
            .coefficients()
            .iter()
            .zip(g.iter().zip(target))
            .map(|(c, (&gj, &tj))| c * Rational64::from_integer((gj - tj) as i64))
            .sum();
        if g.as_slice() != target && v == Rational64::from_integer(0) {
            compliant = false;
        }
        values.push((g.clone(), v));
    }
    Ok(ComplianceReport { values, compliant })
}

/// A joint eigenspace of all G_j.
#[derive(Clone, Debug)]
pub struct Sector {
    pub labels: Vec<i32>,
    /// Orthonormal columns spanning the sector.
    pub basis: CMatrix,
}

impl Sector {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn projector(&self) -> OperatorMatrix {
        let p = algebra::matmul(&self.basis, algebra::Op::Plain, &self.basis, algebra::Op::Adjoint);
        OperatorMatrix::hermitian(p).expect("projector is Hermitian")
    }

    /// Tr(ρ P_g).
    pub fn weight(&self, rho: &CMatrix) -> f64 {
        let rb = algebra::matmul(rho, algebra::Op::Plain, &self.basis, algebra::Op::Plain);
        let mut acc = 0.0;
        for k in 0..self.rank() {
            acc += self.basis.column(k).dotc(&rb.column(k)).re;
        }
        acc
    }
}

/// Every realized superselection sector, sorted lexicographically by label.
pub fn sector_projectors(bundle: &ModelBundle) -> Result<Vec<Sector>> {
    let ops: Vec<&CMatrix> = bundle.generators.iter().map(|g| g.matrix()).collect();
    let spaces = joint_eigenspaces(&ops, 1e-8)?;
    let mut sectors = spaces
        .into_iter()
        .map(|s| {
            let labels = s
                .eigenvalues
                .iter()
                .map(|&v| {
                    let r = v.round();
                    if (v - r).abs() > 1e-8 {
                        Err(ModelError::NonIntegerSector(v))
                    } else {
                        Ok(r as i32)
                    }
                })
                .collect::<Result<Vec<i32>>>()?;
            Ok(Sector { labels, basis: s.basis })
        })
        .collect::<Result<Vec<_>>>()?;
    sectors.sort_by(|a, b| a.labels.cmp(&b.labels));
    Ok(sectors)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialStatePreset {
    U1Vacuum,
    U1ChargeProliferated,
    U1DomainWallX,
    U1DomainWallZ,
    Z2Cdw,
    Z2DomainWallX,
    Z2DomainWallZ,
    /// One character per subsystem in canonical order: `1`/`u` up, `0`/`d`
    /// down, `+`/`-` the σˣ eigenstates.
    Custom(String),
}

impl InitialStatePreset {
    fn model(&self) -> Option<&'static str> {
        match self {
            Self::U1Vacuum | Self::U1ChargeProliferated | Self::U1DomainWallX | Self::U1DomainWallZ => Some("u1"),
            Self::Z2Cdw | Self::Z2DomainWallX | Self::Z2DomainWallZ => Some("z2"),
            Self::Custom(_) => None,
        }
    }

    /// Presets that lie entirely inside the target sector.
    pub fn is_sector_homogeneous(&self) -> bool {
        matches!(
            self,
            Self::U1Vacuum | Self::U1ChargeProliferated | Self::U1DomainWallZ | Self::Z2Cdw | Self::Z2DomainWallX
        )
    }
}

impl fmt::Display for InitialStatePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::U1Vacuum => "u1_vacuum",
            Self::U1ChargeProliferated => "u1_charge_proliferated",
            Self::U1DomainWallX => "u1_domainwall_x",
            Self::U1DomainWallZ => "u1_domainwall_z",
            Self::Z2Cdw => "z2_cdw",
            Self::Z2DomainWallX => "z2_domainwall_x",
            Self::Z2DomainWallZ => "z2_domainwall_z",
            Self::Custom(bits) => return write!(f, "custom:{bits}"),
        };
        f.write_str(s)
    }
}

impl FromStr for InitialStatePreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "u1_vacuum" => Self::U1Vacuum,
            "u1_charge_proliferated" => Self::U1ChargeProliferated,
            "u1_domainwall_x" => Self::U1DomainWallX,
            "u1_domainwall_z" => Self::U1DomainWallZ,
            "z2_cdw" => Self::Z2Cdw,
            "z2_domainwall_x" => Self::Z2DomainWallX,
            "z2_domainwall_z" => Self::Z2DomainWallZ,
            other => match other.strip_prefix("custom:") {
                Some(bits) if !bits.is_empty() => Self::Custom(bits.to_string()),
                _ => return Err(format!("unknown initial state '{other}'")),
            },
        })
    }
}

#[derive(Clone, Copy)]
enum Local {
    Up,
    Down,
    XPlus,
    XMinus,
}

impl Local {
    fn vector(self) -> CVector {
        match self {
            Local::Up => pauli::up(),
            Local::Down => pauli::down(),
            Local::XPlus => pauli::x_plus(),
            Local::XMinus => pauli::x_minus(),
        }
    }

    fn spin(up: bool) -> Self {
        if up {
            Local::Up
        } else {
            Local::Down
        }
    }

    fn xspin(plus: bool) -> Self {
        if plus {
            Local::XPlus
        } else {
            Local::XMinus
        }
    }
}

/// Solves the periodic chain of link values x_j (link j, j+1) from
/// x_j = f(j, x_{j−1}), trying the seeds for x_{L,1} in order.
fn solve_links<T: Copy + PartialEq>(
    sites: usize,
    seeds: &[T],
    valid: impl Fn(T) -> bool,
    step: impl Fn(usize, T) -> T,
) -> Option<Vec<T>> {
    for &seed in seeds {
        let mut links = Vec::with_capacity(sites);
        let mut prev = seed;
        let mut ok = true;
        for j in 1..=sites {
            let next = step(j, prev);
            if !valid(next) {
                ok = false;
                break;
            }
            links.push(next);
            prev = next;
        }
        if ok && prev == seed {
            return Some(links);
        }
    }
    None
}

fn left_half(sites: usize) -> Vec<bool> {
    (1..=sites).map(|j| j <= sites / 2).collect()
}

fn interleave(lat: &LatticeSpec, matter: &[Local], links: &[Local]) -> Vec<CVector> {
    (0..lat.n_subsystems())
        .map(|k| {
            if k % 2 == 0 {
                matter[k / 2].vector()
            } else {
                links[k / 2].vector()
            }
        })
        .collect()
}

fn parse_bitstring(lat: &LatticeSpec, bits: &str) -> Result<Vec<CVector>> {
    let chars: Vec<char> = bits.chars().collect();
    if chars.len() != lat.n_subsystems() {
        return Err(ModelError::InvalidBitstring(
            bits.to_string(),
            format!("expected {} characters", lat.n_subsystems()),
        ));
    }
    chars
        .iter()
        .map(|c| match c {
            '1' | 'u' => Ok(pauli::up()),
            '0' | 'd' => Ok(pauli::down()),
            '+' => Ok(pauli::x_plus()),
            '-' => Ok(pauli::x_minus()),
            other => Err(ModelError::InvalidBitstring(bits.to_string(), format!("unexpected '{other}'"))),
        })
        .collect()
}

pub fn build_initial_state(bundle: &ModelBundle, preset: &InitialStatePreset) -> Result<StateVector> {
    let lat = &bundle.lattice;
    let l = lat.sites();
    if let Some(model) = preset.model() {
        if model != bundle.model.name() {
            return Err(ModelError::PresetMismatch {
                preset: preset.to_string(),
                model: bundle.model.name(),
            });
        }
    }
    let no_links = || ModelError::NoGaussConsistentLinks(preset.to_string());
    let locals = match preset {
        InitialStatePreset::Custom(bits) => parse_bitstring(lat, bits)?,
        _ if lat.boundary() == Boundary::Open => {
            return Err(ModelError::PresetOutsideTarget {
                preset: preset.to_string(),
                detail: "presets are defined on periodic chains".into(),
            })
        }
        InitialStatePreset::U1Vacuum => {
            let links: Vec<Local> = (1..=l).map(|j| Local::spin(j % 2 == 0)).collect();
            interleave(lat, &vec![Local::Down; l], &links)
        }
        InitialStatePreset::U1ChargeProliferated => interleave(lat, &vec![Local::Up; l], &vec![Local::Down; l]),
        InitialStatePreset::U1DomainWallX => {
            let matter: Vec<Local> = left_half(l).into_iter().map(Local::spin).collect();
            interleave(lat, &matter, &vec![Local::XPlus; l])
        }
        InitialStatePreset::U1DomainWallZ => {
            let occ = left_half(l);
            // (−1)^j (s_{j−1,j} + s_{j,j+1} + n_j) = 0 fixes s_{j,j+1} from s_{j−1,j}; units of 1/2
            let links = solve_links(l, &[-1i32, 1], |s| s.abs() == 1, |j, s| -s - 2 * occ[j - 1] as i32)
                .ok_or_else(no_links)?;
            let matter: Vec<Local> = occ.into_iter().map(Local::spin).collect();
            let links: Vec<Local> = links.into_iter().map(|s| Local::spin(s > 0)).collect();
            interleave(lat, &matter, &links)
        }
        InitialStatePreset::Z2Cdw | InitialStatePreset::Z2DomainWallX => {
            let occ: Vec<bool> = match preset {
                InitialStatePreset::Z2Cdw => (1..=l).map(|j| j % 2 == 1).collect(),
                _ => left_half(l),
            };
            let g = bundle.target_sector[0];
            // (−1)^{n_j} τ_{j−1,j} τ_{j,j+1} = g fixes τ_{j,j+1}
            let links = solve_links(l, &[-1i32, 1], |_| true, |j, t| g * t * if occ[j - 1] { -1 } else { 1 })
                .ok_or_else(no_links)?;
            let matter: Vec<Local> = occ.into_iter().map(Local::spin).collect();
            let links: Vec<Local> = links.into_iter().map(|t| Local::xspin(t > 0)).collect();
            interleave(lat, &matter, &links)
        }
        InitialStatePreset::Z2DomainWallZ => {
            let matter: Vec<Local> = left_half(l).into_iter().map(Local::spin).collect();
            interleave(lat, &matter, &vec![Local::Up; l])
        }
    };
    let psi = StateVector::product(lat, &locals)?;
    if preset.is_sector_homogeneous() {
        assert_in_target(bundle, &psi, preset)?;
    }
    Ok(psi)
}

fn assert_in_target(bundle: &ModelBundle, psi: &StateVector, preset: &InitialStatePreset) -> Result<()> {
    for (j, (g, &t)) in bundle.generators.iter().zip(&bundle.target_sector).enumerate() {
        let gpsi = g.matrix() * psi.amplitudes();
        let residual = (gpsi - psi.amplitudes() * C64::new(t as f64, 0.0)).norm();
        if residual > 1e-10 {
            return Err(ModelError::PresetOutsideTarget {
                preset: preset.to_string(),
                detail: format!("|(G_{} - {t})psi| = {residual:e}", j + 1),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn u1() -> ModelBundle {
        build_u1_qlm(&U1Params::default()).unwrap()
    }

    fn z2() -> ModelBundle {
        build_z2_lgt(&Z2Params::default()).unwrap()
    }

    #[test]
    fn dimensions_and_jump_counts() {
        let b = u1();
        assert_eq!(b.dim(), 256);
        assert_eq!(b.jump_ops.len(), 8);
        assert_eq!(z2().jump_ops.len(), 8);
    }

    #[test]
    fn odd_periodic_u1_rejected() {
        let p = U1Params {
            sites: 3,
            ..U1Params::default()
        };
        assert!(matches!(build_u1_qlm(&p), Err(ModelError::OddPeriodicChain(3))));
        let z = Z2Params {
            j: 0.0,
            ..Z2Params::default()
        };
        assert!(build_z2_lgt(&z).is_err());
    }

    #[test]
    fn z2_generators_square_to_identity() {
        let b = z2();
        for g in &b.generators {
            let sq = g.matrix() * g.matrix();
            assert_abs_diff_eq!(algebra::max_abs(&(sq - CMatrix::identity(256, 256))), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn z2_h0_breaks_pseudogenerator_symmetry() {
        let b = z2();
        let w = &b.pseudogenerators.as_ref().unwrap()[0];
        assert!(algebra::max_abs(&b.h0.commutator(w)) > 1e-6);
    }

    #[test]
    fn sequences_match_closed_forms() {
        let c = ProtectionSequence::new(SequenceKind::CompliantL4, 4).unwrap();
        assert_eq!(c.coefficients()[0], Rational64::new(-115, 122));
        assert_eq!(c.coefficients()[3], Rational64::from_integer(1));
        assert!(ProtectionSequence::new(SequenceKind::CompliantL4, 6).is_err());
        let s = ProtectionSequence::new(SequenceKind::StarkStaggered, 4).unwrap();
        assert_eq!(s.as_f64(), vec![-1.0, 2.0, -3.0, 4.0]);
        let z = ProtectionSequence::new(SequenceKind::Z2Geometric, 4).unwrap();
        let want = [-1i64, 41, -211, 1301];
        for (c, w) in z.coefficients().iter().zip(want) {
            assert_eq!(*c, Rational64::new(w, 11));
        }
    }

    #[test]
    fn zero_sequence_gives_zero_operator() {
        let b = u1();
        let seq = ProtectionSequence::custom(vec![Rational64::from_integer(0); 4]);
        let op = build_linear_protection(&b, &seq, GeneratorSource::Full).unwrap();
        assert_eq!(op.max_abs(), 0.0);
        assert!(build_linear_protection(&b, &seq, GeneratorSource::Pseudo).is_err());
        let short = ProtectionSequence::custom(vec![Rational64::from_integer(1); 3]);
        assert!(build_linear_protection(&b, &short, GeneratorSource::Full).is_err());
    }

    #[test]
    fn zero_sequence_is_noncompliant() {
        let seq = ProtectionSequence::custom(vec![Rational64::from_integer(0); 2]);
        let r = check_compliance(&seq, &[vec![0, 0], vec![1, -1]], &[0, 0]).unwrap();
        assert!(!r.compliant);
    }

    #[test]
    fn presets_match_model() {
        let b = u1();
        assert!(build_initial_state(&b, &InitialStatePreset::Z2Cdw).is_err());
        assert!(build_initial_state(&b, &"custom:0001000".parse().unwrap()).is_err());
        let psi = build_initial_state(&b, &"custom:00010001".parse().unwrap()).unwrap();
        let vac = build_initial_state(&b, &InitialStatePreset::U1Vacuum).unwrap();
        assert_abs_diff_eq!(psi.inner(&vac).norm(), 1.0, epsilon = 1e-15);
        assert!("bogus".parse::<InitialStatePreset>().is_err());
    }

    #[test]
    fn coherent_error_knob_mismatch() {
        let b = u1();
        assert!(build_coherent_error(&b, ErrorKnobs::Z2 { eta: [1.0; 4] }).is_err());
    }
}
