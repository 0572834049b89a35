//! Adaptive Dormand–Prince integration of the master equation and of closed
//! pure-state dynamics.
//!
//! The open evolution runs in the interaction picture of the coherent
//! Hamiltonian, ρ̃_ab = e^{iω_ab t} ρ_ab in the energy eigenbasis. The secular
//! dissipator only couples entries with matching Bohr frequency, so the
//! interaction-picture right-hand side varies on the dissipative time scale
//! rather than on 1/V.

use nalgebra::DVector;
use thiserror::Error;

use crate::algebra::{
    self, hermitian_eigenvalues, AlgebraError, CMatrix, DensityMatrix, EigenDecomposition, OperatorMatrix,
    StateVector, C64,
};
use crate::redfield::RedfieldGenerator;

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_STEP: f64 = 0.05;
pub const MAX_SNAPSHOTS: usize = 512;
pub const TRACE_TOL: f64 = 1e-8;
pub const HERMITICITY_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Invariant breaches beyond this multiple of the tolerance abort the run.
pub const ABORT_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: generator {generator}, state {state}")]
    DimensionMismatch { generator: usize, state: usize },
    #[error("step size underflow at t = {time} (h = {step:e}); the problem is too stiff for the explicit integrator")]
    StepUnderflow { time: f64, step: f64 },
    #[error("invariant breach at t = {time}: {what} = {value:e}")]
    InvariantBreach { time: f64, what: &'static str, value: f64 },
    #[error("grid has {0} samples; store at most {MAX_SNAPSHOTS} snapshots or stream with an observer")]
    TooManySnapshots(usize),
    #[error("observer aborted: {0}")]
    Observer(String),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// Output times: start at 0, strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn explicit(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(DynamicsError::InvalidConfig("output grid must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(DynamicsError::InvalidConfig("output grid must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    /// `n_samples` evenly spaced points on [0, t_max].
    pub fn uniform(t_max: f64, n_samples: usize) -> Result<Self> {
        if n_samples < 2 || !(t_max > 0.0) {
            return Err(DynamicsError::InvalidConfig("uniform grid needs t_max > 0 and two samples".into()));
        }
        let dt = t_max / (n_samples - 1) as f64;
        Self::explicit((0..n_samples).map(|k| if k + 1 == n_samples { t_max } else { k as f64 * dt }).collect())
    }

    /// t = 0 followed by `n_samples` log-spaced points on [t_min, t_max].
    pub fn log(t_min: f64, t_max: f64, n_samples: usize) -> Result<Self> {
        if n_samples < 2 || !(t_min > 0.0) || !(t_max > t_min) {
            return Err(DynamicsError::InvalidConfig("log grid needs 0 < t_min < t_max and two samples".into()));
        }
        let (a, b) = (t_min.log10(), t_max.log10());
        let mut times = vec![0.0];
        for k in 0..n_samples {
            let t = if k + 1 == n_samples {
                t_max
            } else {
                10f64.powf(a + (b - a) * k as f64 / (n_samples - 1) as f64)
            };
            times.push(t);
        }
        Self::explicit(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("grid is never empty")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub grid: TimeGrid,
    pub renormalize_trace: bool,
    /// Compute the minimum eigenvalue of ρ on every n-th sample (0 disables).
    pub positivity_stride: usize,
}

impl IntegratorConfig {
    pub fn new(grid: TimeGrid) -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            max_step: DEFAULT_MAX_STEP,
            grid,
            renormalize_trace: true,
            positivity_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !ok(self.rel_tol) || !ok(self.abs_tol) || !ok(self.max_step) {
            return Err(DynamicsError::InvalidConfig(
                "tolerances and max_step must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleDiagnostics {
    /// Largest |Tr ρ − 1| seen before renormalization since the previous sample.
    pub trace_error: f64,
    /// Largest max|ρ − ρ†| seen before symmetrization since the previous sample.
    pub hermiticity_error: f64,
    pub min_eigenvalue: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

pub struct Trajectory {
    pub times: Vec<f64>,
    /// Computational-basis density matrices, one per grid time.
    pub states: Vec<DensityMatrix>,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub stats: IntegratorStats,
}

/// A density matrix handed to an observer, in the energy eigenbasis
/// (Schrödinger picture).
pub struct Sample<'a> {
    pub index: usize,
    pub time: f64,
    pub rho_eigen: &'a CMatrix,
    pub diagnostics: SampleDiagnostics,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// y ← Σ c_k x_k over matrices of equal shape.
fn combine(out: &mut CMatrix, base: &CMatrix, terms: &[(f64, &CMatrix)]) {
    let o = out.as_mut_slice();
    o.copy_from_slice(base.as_slice());
    for &(c, x) in terms {
        if c == 0.0 {
            continue;
        }
        for (oi, xi) in o.iter_mut().zip(x.as_slice()) {
            *oi += xi * c;
        }
    }
}

struct StepReport {
    trace_error: f64,
    hermiticity_error: f64,
}

/// Dormand–Prince 5(4) with PI step control; lands exactly on every grid
/// time. `post_step` may project the accepted state and reports invariant
/// drift; `on_sample` receives the state at each grid time.
fn integrate<F, P, S>(
    mut rhs: F,
    y0: CMatrix,
    cfg: &IntegratorConfig,
    mut post_step: P,
    mut on_sample: S,
) -> Result<IntegratorStats>
where
    F: FnMut(f64, &CMatrix, &mut CMatrix),
    P: FnMut(&mut CMatrix) -> StepReport,
    S: FnMut(usize, f64, &CMatrix, StepReport) -> Result<()>,
{
    cfg.validate()?;
    let (r, c) = y0.shape();
    let zeros = || CMatrix::zeros(r, c);
    let mut y = y0;
    let mut stats = IntegratorStats::default();
    let mut k: Vec<CMatrix> = (0..7).map(|_| zeros()).collect();
    let mut tmp = zeros();
    let mut y_new = zeros();
    let times = cfg.grid.times();

    let mut t = 0.0;
    rhs(t, &y, &mut k[0]);
    stats.rhs_evals += 1;
    let mut drift = StepReport {
        trace_error: 0.0,
        hermiticity_error: 0.0,
    };
    on_sample(0, 0.0, &y, drift)?;
    drift = StepReport {
        trace_error: 0.0,
        hermiticity_error: 0.0,
    };

    let scale = |a: &CMatrix, b: &CMatrix, e: &CMatrix| -> f64 {
        let mut acc = 0.0;
        for ((ai, bi), ei) in a.as_slice().iter().zip(b.as_slice()).zip(e.as_slice()) {
            let sk = cfg.abs_tol + cfg.rel_tol * ai.norm().max(bi.norm());
            acc += (ei.norm() / sk).powi(2);
        }
        (acc / a.len() as f64).sqrt()
    };
    let d0 = scale(&y, &y, &y);
    let d1 = scale(&y, &y, &k[0]);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(cfg.max_step);
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;

    for (index, &target) in times.iter().enumerate().skip(1) {
        while t < target {
            let remaining = target - t;
            let landing = h >= remaining * (1.0 - 1e-12);
            let step = if landing { remaining } else { h };
            if step < 1e-14 * t.abs().max(1.0) && !landing {
                return Err(DynamicsError::StepUnderflow { time: t, step });
            }
            let (k1, rest) = k.split_at_mut(1);
            let k1 = &k1[0];
            combine(&mut tmp, &y, &[(step * A21, k1)]);
            rhs(t + C2 * step, &tmp, &mut rest[0]);
            combine(&mut tmp, &y, &[(step * A31, k1), (step * A32, &rest[0])]);
            rhs(t + C3 * step, &tmp, &mut rest[1]);
            combine(&mut tmp, &y, &[(step * A41, k1), (step * A42, &rest[0]), (step * A43, &rest[1])]);
            rhs(t + C4 * step, &tmp, &mut rest[2]);
            combine(
                &mut tmp,
                &y,
                &[(step * A51, k1), (step * A52, &rest[0]), (step * A53, &rest[1]), (step * A54, &rest[2])],
            );
            rhs(t + C5 * step, &tmp, &mut rest[3]);
            combine(
                &mut tmp,
                &y,
                &[
                    (step * A61, k1),
                    (step * A62, &rest[0]),
                    (step * A63, &rest[1]),
                    (step * A64, &rest[2]),
                    (step * A65, &rest[3]),
                ],
            );
            rhs(t + step, &tmp, &mut rest[4]);
            combine(
                &mut y_new,
                &y,
                &[
                    (step * B1, k1),
                    (step * B3, &rest[1]),
                    (step * B4, &rest[2]),
                    (step * B5, &rest[3]),
                    (step * B6, &rest[4]),
                ],
            );
            rhs(t + step, &y_new, &mut rest[5]);
            stats.rhs_evals += 6;
            let zero = zeros();
            combine(
                &mut tmp,
                &zero,
                &[
                    (step * E1, k1),
                    (step * E3, &rest[1]),
                    (step * E4, &rest[2]),
                    (step * E5, &rest[3]),
                    (step * E6, &rest[4]),
                    (step * E7, &rest[5]),
                ],
            );
            let err = scale(&y, &y_new, &tmp);
            if !err.is_finite() {
                return Err(DynamicsError::StepUnderflow { time: t, step });
            }
            if err <= 1.0 {
                stats.accepted += 1;
                t = if landing { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                let report = post_step(&mut y);
                drift.trace_error = drift.trace_error.max(report.trace_error);
                drift.hermiticity_error = drift.hermiticity_error.max(report.hermiticity_error);
                // FSAL, unless the projection changed the state
                if report.trace_error == 0.0 && report.hermiticity_error == 0.0 {
                    k.swap(0, 6);
                } else {
                    rhs(t, &y, &mut k[0]);
                    stats.rhs_evals += 1;
                }
                let mut fac = SAFETY * err.max(1e-10).powf(-PI_ALPHA) * err_old.powf(PI_BETA);
                fac = fac.clamp(FAC_MIN, if last_rejected { 1.0 } else { FAC_MAX });
                let proposal = (step * fac).min(cfg.max_step);
                // keep the free-running step when a grid landing shortened it
                h = if landing { proposal.max(h.min(cfg.max_step)) } else { proposal };
                err_old = err.max(1e-4);
                last_rejected = false;
            } else {
                stats.rejected += 1;
                let fac = (SAFETY * err.powf(-PI_ALPHA)).max(FAC_MIN);
                h = step * fac;
                last_rejected = true;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(DynamicsError::StepUnderflow { time: t, step: h });
                }
            }
        }
        on_sample(index, t, &y, drift)?;
        drift = StepReport {
            trace_error: 0.0,
            hermiticity_error: 0.0,
        };
    }
    Ok(stats)
}

fn phases(energies: &[f64], t: f64) -> DVector<C64> {
    DVector::from_iterator(energies.len(), energies.iter().map(|&e| C64::from_polar(1.0, -e * t)))
}

/// ρ_ab = p_a p̄_b ρ̃_ab with p_a = e^{−iε_a t}.
fn to_schrodinger(rho_tilde: &CMatrix, p: &DVector<C64>, out: &mut CMatrix) {
    let d = p.len();
    for b in 0..d {
        let pb = p[b].conj();
        for a in 0..d {
            out[(a, b)] = rho_tilde[(a, b)] * p[a] * pb;
        }
    }
}

fn to_interaction(rho: &CMatrix, p: &DVector<C64>, out: &mut CMatrix) {
    let d = p.len();
    for b in 0..d {
        let pb = p[b];
        for a in 0..d {
            out[(a, b)] = rho[(a, b)] * p[a].conj() * pb;
        }
    }
}

fn check_invariant(time: f64, what: &'static str, value: f64, tol: f64) -> Result<()> {
    if value > ABORT_FACTOR * tol || !value.is_finite() {
        return Err(DynamicsError::InvariantBreach { time, what, value });
    }
    Ok(())
}

/// Integrates the master equation from `rho0` (computational basis) and
/// streams eigenbasis samples to `observer`.
pub fn evolve_with<O>(
    gen: &RedfieldGenerator,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
    mut observer: O,
) -> Result<IntegratorStats>
where
    O: FnMut(&Sample) -> Result<()>,
{
    let d = gen.dim();
    if rho0.dim() != d {
        return Err(DynamicsError::DimensionMismatch {
            generator: d,
            state: rho0.dim(),
        });
    }
    let eig = &gen.eigen_set().eig;
    let energies: Vec<f64> = {
        let e = gen.energies();
        let mid = 0.5 * (e[0] + e[d - 1]);
        e.iter().map(|x| x - mid).collect()
    };
    let y0 = eig.to_eigenbasis(rho0.matrix());
    let mut rho_s = CMatrix::zeros(d, d);
    let mut d_s = CMatrix::zeros(d, d);
    let rhs = |t: f64, y: &CMatrix, out: &mut CMatrix| {
        let p = phases(&energies, t);
        to_schrodinger(y, &p, &mut rho_s);
        d_s.fill(C64::new(0.0, 0.0));
        gen.apply_dissipator_add(&rho_s, &mut d_s);
        to_interaction(&d_s, &p, out);
    };
    let renormalize = cfg.renormalize_trace;
    let post_step = |y: &mut CMatrix| {
        let herm = algebra::hermiticity_error(y);
        let sym = (&*y + y.adjoint()) * C64::new(0.5, 0.0);
        y.copy_from(&sym);
        let tr = y.trace();
        let trace_error = (tr - C64::new(1.0, 0.0)).norm();
        if renormalize && trace_error > 0.0 {
            *y /= C64::new(tr.re, 0.0);
        }
        StepReport {
            trace_error,
            hermiticity_error: herm,
        }
    };
    let stride = cfg.positivity_stride;
    let coherent_only = gen.rates().iter().flatten().all(|&r| r == 0.0);
    let mut sample_rho = CMatrix::zeros(d, d);
    let on_sample = |index: usize, t: f64, y: &CMatrix, drift: StepReport| -> Result<()> {
        let p = phases(&energies, t);
        to_schrodinger(y, &p, &mut sample_rho);
        let trace_error = if renormalize {
            drift.trace_error
        } else {
            (sample_rho.trace() - C64::new(1.0, 0.0)).norm()
        };
        check_invariant(t, "trace error", trace_error, TRACE_TOL)?;
        check_invariant(t, "hermiticity error", drift.hermiticity_error, HERMITICITY_TOL)?;
        let min_eigenvalue = if stride > 0 && index % stride == 0 {
            let m = hermitian_eigenvalues(&sample_rho)?[0];
            check_invariant(t, "negative eigenvalue", -m, POSITIVITY_TOL)?;
            Some(m)
        } else {
            None
        };
        observer(&Sample {
            index,
            time: t,
            rho_eigen: &sample_rho,
            diagnostics: SampleDiagnostics {
                trace_error,
                hermiticity_error: drift.hermiticity_error,
                min_eigenvalue,
            },
        })
    };
    if coherent_only {
        // ρ̃ is conserved exactly; only the phases evolve
        cfg.validate()?;
        let mut on_sample = on_sample;
        for (index, &t) in cfg.grid.times().iter().enumerate() {
            on_sample(
                index,
                t,
                &y0,
                StepReport {
                    trace_error: 0.0,
                    hermiticity_error: 0.0,
                },
            )?;
        }
        return Ok(IntegratorStats::default());
    }
    integrate(rhs, y0, cfg, post_step, on_sample)
}

/// Integrates the master equation and stores every sample in the computational basis.
pub fn evolve(gen: &RedfieldGenerator, rho0: &DensityMatrix, cfg: &IntegratorConfig) -> Result<Trajectory> {
    if cfg.grid.len() > MAX_SNAPSHOTS {
        return Err(DynamicsError::TooManySnapshots(cfg.grid.len()));
    }
    let eig = &gen.eigen_set().eig;
    let mut traj = Trajectory {
        times: Vec::with_capacity(cfg.grid.len()),
        states: Vec::with_capacity(cfg.grid.len()),
        diagnostics: Vec::with_capacity(cfg.grid.len()),
        stats: IntegratorStats::default(),
    };
    traj.stats = evolve_with(gen, rho0, cfg, |s| {
        traj.times.push(s.time);
        traj.states
            .push(DensityMatrix::from_matrix_unchecked(eig.from_eigenbasis(s.rho_eigen)));
        traj.diagnostics.push(s.diagnostics);
        Ok(())
    })?;
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosedMethod {
    /// ψ(t) = U e^{−iEt} U† ψ₀.
    Spectral,
    /// Dormand–Prince on dψ/dt = −iHψ.
    Stepped,
}

pub struct PureTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub norm_errors: Vec<f64>,
    pub stats: IntegratorStats,
}

impl PureTrajectory {
    pub fn to_mixed(&self) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|s| s.to_density()).collect(),
            diagnostics: self
                .norm_errors
                .iter()
                .map(|&e| SampleDiagnostics {
                    trace_error: e,
                    hermiticity_error: 0.0,
                    min_eigenvalue: None,
                })
                .collect(),
            stats: self.stats,
        }
    }
}

/// Closed evolution of a pure state, streaming (index, t, ψ(t)) to `observer`.
pub fn evolve_closed_with<O>(
    h: &OperatorMatrix,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
    method: ClosedMethod,
    mut observer: O,
) -> Result<IntegratorStats>
where
    O: FnMut(usize, f64, &StateVector) -> Result<()>,
{
    if h.dim() != psi0.dim() {
        return Err(DynamicsError::DimensionMismatch {
            generator: h.dim(),
            state: psi0.dim(),
        });
    }
    if !h.is_hermitian() {
        return Err(DynamicsError::Algebra(AlgebraError::NotHermitian(algebra::hermiticity_error(
            h.matrix(),
        ))));
    }
    cfg.validate()?;
    match method {
        ClosedMethod::Spectral => {
            let eig: EigenDecomposition = algebra::hermitian_eig(h.matrix())?;
            let coeffs = eig.eigenvectors.adjoint() * psi0.amplitudes();
            for (index, &t) in cfg.grid.times().iter().enumerate() {
                let p = phases(&eig.eigenvalues, t);
                let evolved = &eig.eigenvectors * coeffs.component_mul(&p);
                let psi = StateVector::new(evolved)?;
                observer(index, t, &psi)?;
            }
            Ok(IntegratorStats::default())
        }
        ClosedMethod::Stepped => {
            let hm = h.matrix();
            let minus_i = C64::new(0.0, -1.0);
            let rhs = |_t: f64, y: &CMatrix, out: &mut CMatrix| {
                out.gemm(minus_i, hm, y, C64::new(0.0, 0.0));
            };
            let renormalize = cfg.renormalize_trace;
            let post = |y: &mut CMatrix| {
                let norm = y.norm();
                if renormalize && norm > 0.0 {
                    y.unscale_mut(norm);
                }
                StepReport {
                    trace_error: (norm - 1.0).abs(),
                    hermiticity_error: 0.0,
                }
            };
            let y0 = CMatrix::from_column_slice(psi0.dim(), 1, psi0.amplitudes().as_slice());
            let on_sample = |index: usize, t: f64, y: &CMatrix, report: StepReport| -> Result<()> {
                let v = y.column(0).into_owned();
                let norm_err = report.trace_error.max((v.norm() - 1.0).abs());
                check_invariant(t, "norm error", norm_err, TRACE_TOL)?;
                observer(index, t, &StateVector::normalized(v)?)
            };
            integrate(rhs, y0, cfg, post, on_sample)
        }
    }
}

pub fn evolve_closed(
    h: &OperatorMatrix,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
    method: ClosedMethod,
) -> Result<PureTrajectory> {
    let mut traj = PureTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        norm_errors: Vec::new(),
        stats: IntegratorStats::default(),
    };
    let psi0_norm = psi0.amplitudes().norm();
    traj.stats = evolve_closed_with(h, psi0, cfg, method, |_, t, psi| {
        traj.times.push(t);
        traj.norm_errors.push((psi.amplitudes().norm() - psi0_norm).abs());
        traj.states.push(psi.clone());
        Ok(())
    })?;
    Ok(traj)
}
