//! Builds and runs a single quench from a resolved configuration.

use std::sync::Arc;

use crate::algebra::{self, hermitian_eig, hermitian_eig_blocked, EigenDecomposition, OperatorMatrix, StateVector};
use crate::dynamics::{evolve_with, IntegratorStats};
use crate::models::{
    build_coherent_error, build_initial_state, build_linear_protection, build_u1_qlm, build_z2_lgt,
    check_compliance, sector_projectors, JumpKind, ModelBundle, ModelKind, Sector,
};
use crate::noise::{
    CompositeSpectrum, NoiseError, PowerLawSpectrum, RtnSpectrum, SpectralDensity, Spectrum,
};
use crate::observables::{running_average, violation_operator, ObservableSeries, Probe, ProbeRow, ProbeSelection};
use crate::redfield::{
    assemble_generator, default_bin_tolerance, EigenOperatorSet, GeneratorOptions, RedfieldGenerator, ValidityReport,
};

use super::config::{ExperimentConfig, JumpSelection, ModelName, ProtectionKind, RunPoint, SpectrumKind};
use super::HarnessError;

const COMMUTES_TOL: f64 = 1e-10;

/// Spectrum multiplied by a constant amplitude.
#[derive(Clone, Copy, Debug)]
pub struct Scaled {
    pub amplitude: f64,
    pub inner: Spectrum,
}

impl SpectralDensity for Scaled {
    fn density(&self, omega: f64) -> Result<f64, NoiseError> {
        Ok(self.amplitude * self.inner.density(omega)?)
    }
}

/// State shared by every point of a sweep.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub bundle: ModelBundle,
    pub psi0: StateVector,
    pub sectors: Vec<Sector>,
    /// ε of the maximally mixed state.
    pub eps_maxmix: f64,
    protection: Option<OperatorMatrix>,
    coherent_error: Option<OperatorMatrix>,
    /// Whether the compliance condition holds for the linear sequence over the realized sectors.
    pub compliant: Option<bool>,
}

pub fn build_bundle(model: &ModelKind) -> Result<ModelBundle, HarnessError> {
    Ok(match model {
        ModelKind::U1(p) => build_u1_qlm(p)?,
        ModelKind::Z2(p) => build_z2_lgt(p)?,
    })
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let bundle = build_bundle(&config.model_kind())?;
        let psi0 = build_initial_state(&bundle, &config.preset()?)?;
        let sectors = sector_projectors(&bundle)?;
        let d = bundle.dim() as f64;
        let eps_maxmix = violation_operator(&bundle).matrix().trace().re / d;
        let mut compliant = None;
        let protection = match config.protection.kind {
            ProtectionKind::None => None,
            ProtectionKind::Quadratic => Some(bundle.quadratic_protection()),
            ProtectionKind::Linear => {
                let seq = config.sequence()?.expect("linear protection has a sequence");
                let labels: Vec<Vec<i32>> = sectors.iter().map(|s| s.labels.clone()).collect();
                compliant = Some(check_compliance(&seq, &labels, &bundle.target_sector)?.compliant);
                Some(build_linear_protection(&bundle, &seq, config.protection.source)?)
            }
        };
        let coherent_error = if config.lambda != 0.0 {
            Some(build_coherent_error(&bundle, config.error_knobs())?)
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            bundle,
            psi0,
            sectors,
            eps_maxmix,
            protection,
            coherent_error,
            compliant,
        })
    }

    /// H₀ + V·H_prot + λH₁.
    pub fn hamiltonian(&self, v: f64) -> OperatorMatrix {
        let mut h = self.bundle.h0.matrix().clone();
        if let Some(p) = &self.protection {
            h += p.matrix() * algebra::C64::new(v, 0.0);
        }
        if let Some(e) = &self.coherent_error {
            h += e.matrix() * algebra::C64::new(self.config.lambda, 0.0);
        }
        OperatorMatrix::hermitian((&h + h.adjoint()) * algebra::C64::new(0.5, 0.0)).expect("Hermitian sum")
    }

    pub fn spectrum(&self, point: RunPoint) -> Result<Arc<dyn SpectralDensity>, HarnessError> {
        let n = &self.config.noise;
        let wrap = |e: NoiseError| HarnessError::Config(format!("noise: {e}"));
        Ok(match n.spectrum {
            SpectrumKind::PowerLaw => Arc::new(PowerLawSpectrum::new(point.gamma, point.beta, n.omega_cutoff).map_err(wrap)?),
            SpectrumKind::Rtn => Arc::new(Scaled {
                amplitude: point.gamma,
                inner: Spectrum::Rtn(RtnSpectrum::new(n.rate.unwrap_or(1.0)).map_err(wrap)?),
            }),
            SpectrumKind::Composite => Arc::new(Scaled {
                amplitude: point.gamma,
                inner: Spectrum::Composite(
                    CompositeSpectrum::new(
                        n.r1.unwrap_or(1e-2),
                        n.r2.unwrap_or(1e2),
                        n.alpha.unwrap_or(point.beta),
                    )
                    .map_err(wrap)?,
                ),
            }),
        })
    }

    fn jump_ops(&self) -> Vec<&OperatorMatrix> {
        let sel = self.config.noise.jumps;
        self.bundle
            .jump_ops
            .iter()
            .filter(|j| match sel {
                JumpSelection::Both => true,
                JumpSelection::Matter => j.kind == JumpKind::Matter,
                JumpSelection::Gauge => j.kind == JumpKind::Gauge,
            })
            .map(|j| &j.op)
            .collect()
    }

    /// Eigendecomposition of H, sector by sector when H conserves every G_j.
    pub fn diagonalize(&self, h: &OperatorMatrix) -> Result<(EigenDecomposition, bool), HarnessError> {
        let scale = h.max_abs().max(1.0);
        let conserves = self
            .bundle
            .generators
            .iter()
            .all(|g| algebra::max_abs(&h.commutator(g)) <= COMMUTES_TOL * scale);
        if conserves {
            let blocks: Vec<_> = self.sectors.iter().map(|s| s.basis.clone()).collect();
            Ok((hermitian_eig_blocked(h.matrix(), &blocks)?, true))
        } else {
            Ok((hermitian_eig(h.matrix())?, false))
        }
    }

    pub fn generator(&self, point: RunPoint) -> Result<(RedfieldGenerator, bool), HarnessError> {
        let h = self.hamiltonian(point.v);
        let (eig, blocked) = self.diagonalize(&h)?;
        let tol = default_bin_tolerance(&eig.eigenvalues);
        let jumps = self.jump_ops();
        let eset = EigenOperatorSet::from_eigen(eig, &jumps, tol)?;
        let spectrum = self.spectrum(point)?;
        let spectra = vec![spectrum; jumps.len()];
        Ok((assemble_generator(eset, spectra, GeneratorOptions::default())?, blocked))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunDiagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

pub struct RunOutcome {
    pub point: RunPoint,
    pub model: ModelName,
    pub rows: Vec<ProbeRow>,
    pub imbalance_avg: Vec<f64>,
    pub sector_weights: Vec<ObservableSeries>,
    pub validity: ValidityReport,
    pub stats: IntegratorStats,
    pub diagnostics: RunDiagnostics,
    pub sector_blocked: bool,
    pub eps_maxmix: f64,
}

impl RunOutcome {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.time).collect()
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        match name {
            "imbalance_avg" => self.imbalance_avg.clone(),
            _ => self
                .rows
                .iter()
                .map(|r| match name {
                    "violation" => r.violation,
                    "condensate" | "model_column" => r.model_column,
                    "imbalance_integrand" => r.imbalance_integrand,
                    "fidelity" => r.fidelity,
                    "entropy_midchain" => r.entropy_midchain,
                    "trace_error" => r.trace_error,
                    "hermiticity_error" => r.hermiticity_error,
                    "min_eig" => r.min_eig.unwrap_or(f64::NAN),
                    other => panic!("unknown column {other}"),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub sector_weights: bool,
}

pub fn run_point(prep: &Prepared, point: RunPoint, options: RunOptions) -> Result<RunOutcome, HarnessError> {
    let (gen, blocked) = prep.generator(point)?;
    let validity = gen.validity_report(prep.config.validity_threshold)?;
    let icfg = prep.config.integrator_config()?;
    let selection = ProbeSelection {
        entropy: prep.config.output.entropy,
        sectors: options.sector_weights,
    };
    let eig = &gen.eigen_set().eig;
    let mut probe = Probe::new(&prep.bundle, eig, &prep.psi0, &prep.sectors, selection)?;
    let mut diagnostics = RunDiagnostics {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let mut probe_error = None;
    let stats = evolve_with(&gen, &prep.psi0.to_density(), &icfg, |sample| {
        diagnostics.max_trace_error = diagnostics.max_trace_error.max(sample.diagnostics.trace_error);
        diagnostics.max_hermiticity_error = diagnostics.max_hermiticity_error.max(sample.diagnostics.hermiticity_error);
        if let Some(m) = sample.diagnostics.min_eigenvalue {
            diagnostics.min_eigenvalue = diagnostics.min_eigenvalue.min(m);
        }
        probe.record(sample).map(|_| ()).map_err(|e| {
            let msg = e.to_string();
            probe_error = Some(e);
            crate::dynamics::DynamicsError::Observer(msg)
        })
    });
    if let Some(e) = probe_error {
        return Err(e.into());
    }
    let stats = stats?;
    let sector_weights = probe.sector_series();
    let rows = probe.into_rows();
    let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let integrand: Vec<f64> = rows.iter().map(|r| r.imbalance_integrand).collect();
    Ok(RunOutcome {
        point,
        model: prep.config.model.kind,
        imbalance_avg: running_average(&times, &integrand),
        rows,
        sector_weights,
        validity,
        stats,
        diagnostics,
        sector_blocked: blocked,
        eps_maxmix: prep.eps_maxmix,
    })
}

/// Prepares and runs a single-point configuration.
pub fn run_config(config: &ExperimentConfig, options: RunOptions) -> Result<RunOutcome, HarnessError> {
    let points = config.points();
    if points.len() != 1 {
        return Err(HarnessError::Config(format!(
            "configuration describes {} runs; use the sweep command",
            points.len()
        )));
    }
    let prep = Prepared::new(config)?;
    run_point(&prep, points[0], options)
}
