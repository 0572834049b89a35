//! Physical observables evaluated along a trajectory.
//!
//! Two entry points exist for each quantity: functions over a stored
//! [`Trajectory`] in the computational basis, and [`Probe`], which
//! precomputes every operator in the energy eigenbasis and consumes the
//! streamed samples of [`crate::dynamics::evolve_with`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::algebra::{
    matmul, partial_trace, von_neumann_entropy, Op, AlgebraError, CMatrix, CVector, EigenDecomposition, OperatorMatrix,
    StateVector, C64,
};
use crate::dynamics::{Sample, Trajectory};
use crate::models::{ModelBundle, ModelKind, Sector};

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("{observable} is only defined for the {expected} model")]
    WrongModel {
        observable: &'static str,
        expected: &'static str,
    },
    #[error("mid-chain cut needs an even subsystem count, got {0}")]
    OddSubsystemCount(usize),
    #[error("weights have length {got}, expected {expected}")]
    WeightLength { expected: usize, got: usize },
    #[error("state dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ObservableError>;

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl ObservableSeries {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            times,
            values,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Value at the grid time closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.values[k])
    }

    /// Running time average (1/t)∫₀ᵗ by the trapezoid rule; the first sample is kept as is.
    pub fn running_average(&self) -> ObservableSeries {
        let values = running_average(&self.times, &self.values);
        ObservableSeries {
            name: format!("{}_avg", self.name),
            times: self.times.clone(),
            values,
            metadata: self.metadata.clone(),
        }
    }
}

pub fn running_average(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut integral = 0.0;
    for k in 0..values.len() {
        if k > 0 {
            integral += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        }
        let t = times[k] - times[0];
        out.push(if t > 0.0 { integral / t } else { values[k] });
    }
    out
}

/// (1/L) Σ_j (G_j − g_j)².
pub fn violation_operator(bundle: &ModelBundle) -> OperatorMatrix {
    let d = bundle.dim();
    let mut acc = CMatrix::zeros(d, d);
    for (g, &target) in bundle.generators.iter().zip(&bundle.target_sector) {
        let mut shifted = g.matrix().clone();
        for k in 0..d {
            shifted[(k, k)] -= C64::new(target as f64, 0.0);
        }
        acc += &shifted * &shifted;
    }
    OperatorMatrix::hermitian(acc / C64::new(bundle.sites() as f64, 0.0)).expect("square of Hermitian")
}

/// 1/2 + (1/2L) Σ_j σᶻ_j.
pub fn condensate_operator(bundle: &ModelBundle) -> Result<OperatorMatrix> {
    if !matches!(bundle.model, ModelKind::U1(_)) {
        return Err(ObservableError::WrongModel {
            observable: "chiral condensate",
            expected: "u1",
        });
    }
    let l = bundle.sites();
    let d = bundle.dim();
    let mut acc = CMatrix::identity(d, d) * C64::new(0.5, 0.0);
    for j in 1..=l {
        acc += bundle.matter_sigma_z(j).matrix() * C64::new(0.5 / l as f64, 0.0);
    }
    Ok(OperatorMatrix::hermitian(acc).expect("real diagonal"))
}

/// p_j = ⟨ψ₀|σᶻ_j|ψ₀⟩.
pub fn imbalance_weights(bundle: &ModelBundle, psi0: &StateVector) -> Vec<f64> {
    (1..=bundle.sites())
        .map(|j| psi0.expectation(&bundle.matter_sigma_z(j)).re)
        .collect()
}

/// (1/L) Σ_j p_j n_j.
pub fn imbalance_operator(bundle: &ModelBundle, weights: &[f64]) -> Result<OperatorMatrix> {
    let l = bundle.sites();
    if weights.len() != l {
        return Err(ObservableError::WeightLength {
            expected: l,
            got: weights.len(),
        });
    }
    let d = bundle.dim();
    let mut acc = CMatrix::zeros(d, d);
    for (j, &p) in (1..=l).zip(weights) {
        acc += bundle.matter_number(j).matrix() * C64::new(p / l as f64, 0.0);
    }
    Ok(OperatorMatrix::hermitian(acc).expect("real diagonal"))
}

fn series_of(traj: &Trajectory, name: &str, op: &OperatorMatrix) -> ObservableSeries {
    let values = traj.states.iter().map(|rho| rho.expectation(op).re).collect();
    ObservableSeries::new(name, traj.times.clone(), values)
}

fn tag(series: ObservableSeries, bundle: &ModelBundle) -> ObservableSeries {
    series
        .with_meta("model", bundle.model.name())
        .with_meta("sites", bundle.sites())
}

/// ε(t), clipped at zero against round-off.
pub fn gauge_violation(traj: &Trajectory, bundle: &ModelBundle) -> ObservableSeries {
    let mut s = series_of(traj, "violation", &violation_operator(bundle));
    for v in &mut s.values {
        *v = v.max(0.0);
    }
    tag(s, bundle)
}

pub fn chiral_condensate(traj: &Trajectory, bundle: &ModelBundle) -> Result<ObservableSeries> {
    Ok(tag(series_of(traj, "condensate", &condensate_operator(bundle)?), bundle))
}

/// Time-averaged imbalance; the integrand is [`imbalance_integrand`].
pub fn imbalance(traj: &Trajectory, bundle: &ModelBundle, weights: &[f64]) -> Result<ObservableSeries> {
    let integrand = imbalance_integrand(traj, bundle, weights)?;
    let mut avg = integrand.running_average();
    avg.name = "imbalance_avg".into();
    Ok(avg)
}

pub fn imbalance_integrand(traj: &Trajectory, bundle: &ModelBundle, weights: &[f64]) -> Result<ObservableSeries> {
    let op = imbalance_operator(bundle, weights)?;
    Ok(tag(series_of(traj, "imbalance_integrand", &op), bundle))
}

pub fn fidelity(traj: &Trajectory, psi0: &StateVector) -> Result<ObservableSeries> {
    let mut values = Vec::with_capacity(traj.states.len());
    for rho in &traj.states {
        if rho.dim() != psi0.dim() {
            return Err(ObservableError::DimensionMismatch {
                expected: psi0.dim(),
                got: rho.dim(),
            });
        }
        values.push(rho.overlap(psi0));
    }
    Ok(ObservableSeries::new("fidelity", traj.times.clone(), values))
}

/// Keeps the first half of the canonical subsystem order.
fn half_chain_entropy(rho: &CMatrix, dims: &[usize]) -> Result<f64> {
    if dims.len() % 2 != 0 {
        return Err(ObservableError::OddSubsystemCount(dims.len()));
    }
    let keep: Vec<usize> = (0..dims.len() / 2).collect();
    let reduced = partial_trace(rho, dims, &keep)?;
    Ok(von_neumann_entropy(&reduced)?.max(0.0))
}

pub fn midchain_entropy(traj: &Trajectory, bundle: &ModelBundle, averaged: bool) -> Result<ObservableSeries> {
    let dims = bundle.lattice.local_dims();
    let values = traj
        .states
        .iter()
        .map(|rho| half_chain_entropy(rho.matrix(), dims))
        .collect::<Result<Vec<_>>>()?;
    let s = tag(ObservableSeries::new("entropy_midchain", traj.times.clone(), values), bundle);
    Ok(if averaged { s.running_average() } else { s })
}

/// One series per sector, named by its label vector.
pub fn sector_weights(traj: &Trajectory, sectors: &[Sector]) -> Vec<ObservableSeries> {
    sectors
        .iter()
        .map(|sector| {
            let values = traj.states.iter().map(|rho| sector.weight(rho.matrix())).collect();
            ObservableSeries::new(sector_name(&sector.labels), traj.times.clone(), values)
        })
        .collect()
}

pub fn sector_name(labels: &[i32]) -> String {
    let parts: Vec<String> = labels.iter().map(|g| g.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Re Tr(ρ O) for Hermitian O: Σ_ab ρ_ab conj(O_ab).
fn hermitian_expectation(rho: &CMatrix, op: &CMatrix) -> f64 {
    op.dotc(rho).re
}

/// Which optional columns a [`Probe`] records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbeSelection {
    pub entropy: bool,
    pub sectors: bool,
}

impl Default for ProbeSelection {
    fn default() -> Self {
        Self {
            entropy: true,
            sectors: false,
        }
    }
}

/// Per-sample record of the standard observables.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProbeRow {
    pub time: f64,
    pub violation: f64,
    /// Condensate for U(1), imbalance integrand for Z₂.
    pub model_column: f64,
    pub imbalance_integrand: f64,
    pub fidelity: f64,
    pub entropy_midchain: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eig: Option<f64>,
}

/// Streaming evaluator over eigenbasis samples.
pub struct Probe<'a> {
    bundle: &'a ModelBundle,
    eig: &'a EigenDecomposition,
    selection: ProbeSelection,
    violation: CMatrix,
    condensate: Option<CMatrix>,
    imbalance: CMatrix,
    psi0: CVector,
    sectors: Vec<(Vec<i32>, CMatrix)>,
    rows: Vec<ProbeRow>,
    sector_rows: Vec<Vec<f64>>,
}

impl<'a> Probe<'a> {
    pub fn new(
        bundle: &'a ModelBundle,
        eig: &'a EigenDecomposition,
        psi0: &StateVector,
        sectors: &[Sector],
        selection: ProbeSelection,
    ) -> Result<Self> {
        if eig.dim() != bundle.dim() || psi0.dim() != bundle.dim() {
            return Err(ObservableError::DimensionMismatch {
                expected: bundle.dim(),
                got: eig.dim(),
            });
        }
        if selection.entropy && bundle.lattice.n_subsystems() % 2 != 0 {
            return Err(ObservableError::OddSubsystemCount(bundle.lattice.n_subsystems()));
        }
        let weights = imbalance_weights(bundle, psi0);
        let condensate = match bundle.model {
            ModelKind::U1(_) => Some(eig.to_eigenbasis(condensate_operator(bundle)?.matrix())),
            ModelKind::Z2(_) => None,
        };
        let adj = eig.eigenvectors.adjoint();
        let sectors = if selection.sectors {
            sectors
                .iter()
                .map(|s| (s.labels.clone(), matmul(&eig.eigenvectors, Op::Adjoint, &s.basis, Op::Plain)))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            bundle,
            eig,
            selection,
            violation: eig.to_eigenbasis(violation_operator(bundle).matrix()),
            condensate,
            imbalance: eig.to_eigenbasis(imbalance_operator(bundle, &weights)?.matrix()),
            psi0: &adj * psi0.amplitudes(),
            sectors,
            rows: Vec::new(),
            sector_rows: Vec::new(),
        })
    }

    pub fn record(&mut self, sample: &Sample) -> Result<ProbeRow> {
        let rho = sample.rho_eigen;
        let violation = hermitian_expectation(rho, &self.violation).max(0.0);
        let imbalance_integrand = hermitian_expectation(rho, &self.imbalance);
        let model_column = match &self.condensate {
            Some(c) => hermitian_expectation(rho, c),
            None => imbalance_integrand,
        };
        let fidelity = (self.psi0.dotc(&(rho * &self.psi0))).re;
        let entropy_midchain = if self.selection.entropy {
            let comp = self.eig.from_eigenbasis(rho);
            half_chain_entropy(&comp, self.bundle.lattice.local_dims())?
        } else {
            f64::NAN
        };
        if self.selection.sectors {
            let weights = self
                .sectors
                .iter()
                .map(|(_, b)| {
                    let rb = matmul(rho, Op::Plain, b, Op::Plain);
                    (0..b.ncols()).map(|k| b.column(k).dotc(&rb.column(k)).re).sum()
                })
                .collect();
            self.sector_rows.push(weights);
        }
        let row = ProbeRow {
            time: sample.time,
            violation,
            model_column,
            imbalance_integrand,
            fidelity,
            entropy_midchain,
            trace_error: sample.diagnostics.trace_error,
            hermiticity_error: sample.diagnostics.hermiticity_error,
            min_eig: sample.diagnostics.min_eigenvalue,
        };
        self.rows.push(row);
        Ok(row)
    }

    pub fn rows(&self) -> &[ProbeRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<ProbeRow> {
        self.rows
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.time).collect()
    }

    pub fn series(&self, name: &str) -> Option<ObservableSeries> {
        let pick: fn(&ProbeRow) -> f64 = match name {
            "violation" => |r| r.violation,
            "condensate" => |r| r.model_column,
            "imbalance_integrand" => |r| r.imbalance_integrand,
            "fidelity" => |r| r.fidelity,
            "entropy_midchain" => |r| r.entropy_midchain,
            "imbalance_avg" => {
                let integrand: Vec<f64> = self.rows.iter().map(|r| r.imbalance_integrand).collect();
                let s = ObservableSeries::new("imbalance_avg", self.times(), running_average(&self.times(), &integrand));
                return Some(tag(s, self.bundle));
            }
            _ => return None,
        };
        if name == "condensate" && self.condensate.is_none() {
            return None;
        }
        let values = self.rows.iter().map(pick).collect();
        Some(tag(ObservableSeries::new(name, self.times(), values), self.bundle))
    }

    pub fn sector_series(&self) -> Vec<ObservableSeries> {
        self.sectors
            .iter()
            .enumerate()
            .map(|(k, (labels, _))| {
                let values = self.sector_rows.iter().map(|w| w[k]).collect();
                ObservableSeries::new(sector_name(labels), self.times(), values)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Boundary, DensityMatrix};
    use crate::dynamics::{IntegratorStats, SampleDiagnostics};
    use crate::models::{build_initial_state, build_u1_qlm, InitialStatePreset, U1Params};
    use approx::assert_abs_diff_eq;

    fn single(rho: DensityMatrix) -> Trajectory {
        Trajectory {
            times: vec![0.0],
            states: vec![rho],
            diagnostics: vec![SampleDiagnostics::default()],
            stats: IntegratorStats::default(),
        }
    }

    #[test]
    fn running_average_trapezoid() {
        let t = [0.0, 1.0, 3.0];
        let v = [2.0, 4.0, 0.0];
        let avg = running_average(&t, &v);
        assert_eq!(avg, vec![2.0, 3.0, 7.0 / 3.0]);
    }

    #[test]
    fn vacuum_observables() {
        let b = build_u1_qlm(&U1Params::default()).unwrap();
        let psi = build_initial_state(&b, &InitialStatePreset::U1Vacuum).unwrap();
        let traj = single(psi.to_density());
        assert_abs_diff_eq!(gauge_violation(&traj, &b).values[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chiral_condensate(&traj, &b).unwrap().values[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&traj, &psi).unwrap().values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(midchain_entropy(&traj, &b, false).unwrap().values[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn maximally_mixed_values() {
        let b = build_u1_qlm(&U1Params::default()).unwrap();
        let traj = single(DensityMatrix::maximally_mixed(b.dim()));
        assert_abs_diff_eq!(chiral_condensate(&traj, &b).unwrap().values[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(gauge_violation(&traj, &b).values[0], 1.0, epsilon = 1e-12);
        let s = midchain_entropy(&traj, &b, false).unwrap().values[0];
        assert_abs_diff_eq!(s, 4.0 * 2f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn condensate_rejects_z2() {
        let b = crate::models::build_z2_lgt(&Default::default()).unwrap();
        let traj = single(DensityMatrix::maximally_mixed(b.dim()));
        assert!(chiral_condensate(&traj, &b).is_err());
    }

    #[test]
    fn open_chain_entropy_cut() {
        let b = build_u1_qlm(&U1Params {
            sites: 3,
            boundary: Boundary::Open,
            ..Default::default()
        })
        .unwrap();
        let traj = single(DensityMatrix::maximally_mixed(b.dim()));
        assert!(matches!(
            midchain_entropy(&traj, &b, false),
            Err(ObservableError::OddSubsystemCount(5))
        ));
    }
}
