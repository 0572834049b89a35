//! Secular Bloch–Redfield generator in the energy eigenbasis.
//!
//! Jump operators are split into eigenoperators A(ω) over binned Bohr
//! frequencies. The dissipator
//!
//! D(ρ) = Σ_α Σ_ω S_α(ω) [A_α(ω) ρ A_α(ω)† − ½{A_α(ω)†A_α(ω), ρ}]
//!
//! is stored as a sparse Liouville-space matrix for the jump part and a
//! sparse Hermitian decay matrix K for the anticommutator.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{self, hermitian_eig, AlgebraError, CMatrix, EigenDecomposition, OperatorMatrix, C64};
use crate::noise::{NoiseError, SpectralDensity};

/// Relative binning tolerance, multiplied by the spectral range of H.
pub const DEFAULT_RELATIVE_BIN_TOL: f64 = 1e-8;
pub const DEFAULT_VALIDITY_THRESHOLD: f64 = 0.1;
const ENTRY_CUTOFF: f64 = 1e-13;
const MAX_TENSOR_ENTRIES: usize = 60_000_000;
const DENSE_DIM_LIMIT: usize = 32;

#[derive(Debug, Error)]
pub enum RedfieldError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("jump operator {0} is not Hermitian")]
    NonHermitianJump(usize),
    #[error("Hamiltonian is not Hermitian")]
    NonHermitianHamiltonian,
    #[error("{jumps} jump operators but {spectra} spectra")]
    MissingSpectrum { jumps: usize, spectra: usize },
    #[error("spectrum for jump {jump} returned negative rate {rate:e} at omega = {omega}")]
    NegativeRate { jump: usize, omega: f64, rate: f64 },
    #[error("non-secular Redfield evolution is not supported")]
    NonSecularUnsupported,
    #[error("dissipator would need {0} stored entries; the eigenbasis is too degenerate for a sparse representation")]
    TooDense(usize),
    #[error("dense superoperator requested for dimension {0} (limit {DENSE_DIM_LIMIT})")]
    DenseLimit(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, RedfieldError>;

/// One eigenoperator A_α(ω): nonzero entries (n, m, ⟨n|A|m⟩) with ε_m − ε_n in the bin.
#[derive(Clone, Debug)]
pub struct FrequencyBlock {
    pub bin: usize,
    pub omega: f64,
    pub entries: Vec<(usize, usize, C64)>,
}

#[derive(Clone, Debug)]
pub struct JumpEigenOperators {
    /// The jump operator in the energy eigenbasis.
    pub rotated: CMatrix,
    pub blocks: Vec<FrequencyBlock>,
}

#[derive(Clone, Debug)]
pub struct EigenOperatorSet {
    pub eig: EigenDecomposition,
    pub bin_tol: f64,
    /// Representative frequency per bin, ascending.
    pub bins: Vec<f64>,
    pair_bin: Vec<u32>,
    pub jumps: Vec<JumpEigenOperators>,
}

pub fn default_bin_tolerance(eigenvalues: &[f64]) -> f64 {
    let range = match (eigenvalues.first(), eigenvalues.last()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0.0,
    };
    DEFAULT_RELATIVE_BIN_TOL * range.max(1.0)
}

/// Clusters all Bohr frequencies ε_m − ε_n by single linkage with gap `tol`.
/// Returns the bin representatives and the bin of each pair at index n·d + m.
fn bin_frequencies(energies: &[f64], tol: f64) -> (Vec<f64>, Vec<u32>) {
    let d = energies.len();
    let mut pairs: Vec<(f64, u32)> = Vec::with_capacity(d * d);
    for n in 0..d {
        for m in 0..d {
            pairs.push((energies[m] - energies[n], (n * d + m) as u32));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bins = Vec::new();
    let mut pair_bin = vec![0u32; d * d];
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end].0 - pairs[end - 1].0 <= tol {
            end += 1;
        }
        let members = &pairs[start..end];
        let mean = members.iter().map(|p| p.0).sum::<f64>() / members.len() as f64;
        for p in members {
            pair_bin[p.1 as usize] = bins.len() as u32;
        }
        bins.push(mean);
        start = end;
    }
    (bins, pair_bin)
}

impl EigenOperatorSet {
    /// Builds the eigenoperators from an existing eigendecomposition of H.
    pub fn from_eigen(eig: EigenDecomposition, jumps: &[&OperatorMatrix], bin_tol: f64) -> Result<Self> {
        let d = eig.dim();
        for (k, a) in jumps.iter().enumerate() {
            if a.dim() != d {
                return Err(RedfieldError::DimensionMismatch {
                    expected: d,
                    got: a.dim(),
                });
            }
            if !a.is_hermitian() {
                return Err(RedfieldError::NonHermitianJump(k));
            }
        }
        let (bins, pair_bin) = bin_frequencies(&eig.eigenvalues, bin_tol);
        let jumps = jumps
            .iter()
            .map(|a| {
                let rotated = eig.to_eigenbasis(a.matrix());
                let cutoff = ENTRY_CUTOFF * algebra::max_abs(&rotated).max(1.0);
                let mut grouped: BTreeMap<u32, Vec<(usize, usize, C64)>> = BTreeMap::new();
                for m in 0..d {
                    for n in 0..d {
                        let v = rotated[(n, m)];
                        if v.norm() > cutoff {
                            grouped.entry(pair_bin[n * d + m]).or_default().push((n, m, v));
                        }
                    }
                }
                let blocks = grouped
                    .into_iter()
                    .map(|(bin, entries)| FrequencyBlock {
                        bin: bin as usize,
                        omega: bins[bin as usize],
                        entries,
                    })
                    .collect();
                JumpEigenOperators { rotated, blocks }
            })
            .collect();
        Ok(Self {
            eig,
            bin_tol,
            bins,
            pair_bin,
            jumps,
        })
    }

    pub fn dim(&self) -> usize {
        self.eig.dim()
    }

    pub fn energies(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    /// Bin index of the Bohr frequency ε_m − ε_n.
    pub fn bin_of(&self, n: usize, m: usize) -> usize {
        self.pair_bin[n * self.dim() + m] as usize
    }

    pub fn block_matrix(&self, jump: usize, block: usize) -> CMatrix {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        for &(n, m, v) in &self.jumps[jump].blocks[block].entries {
            out[(n, m)] = v;
        }
        out
    }

    /// Σ_ω A_α(ω), which should return the rotated jump operator.
    pub fn reconstruct(&self, jump: usize) -> CMatrix {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        for b in &self.jumps[jump].blocks {
            for &(n, m, v) in &b.entries {
                out[(n, m)] += v;
            }
        }
        out
    }
}

/// Diagonalizes H and splits every jump operator into eigenoperators.
pub fn decompose_eigenoperators(h: &OperatorMatrix, jumps: &[&OperatorMatrix], bin_tol: f64) -> Result<EigenOperatorSet> {
    if !h.is_hermitian() {
        return Err(RedfieldError::NonHermitianHamiltonian);
    }
    let eig = hermitian_eig(h.matrix())?;
    EigenOperatorSet::from_eigen(eig, jumps, bin_tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorOptions {
    pub secular: bool,
    pub drop_zero_frequency: bool,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            secular: true,
            drop_zero_frequency: false,
        }
    }
}

/// Compressed sparse rows over Liouville indices. Both row and column
/// indices are column-major positions a + b·d, matching nalgebra storage.
#[derive(Clone, Debug, Default)]
struct SparseLiouville {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<C64>,
}

impl SparseLiouville {
    fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, C64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("merged entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { row_ptr, cols, vals }
    }

    fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn apply_add(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *out += acc;
        }
    }
}

pub struct RedfieldGenerator {
    eset: EigenOperatorSet,
    spectra: Vec<Arc<dyn SpectralDensity>>,
    options: GeneratorOptions,
    /// S_α(ω) per jump, aligned with `eset.jumps[α].blocks`.
    rates: Vec<Vec<f64>>,
    jump_part: SparseLiouville,
    /// Nonzero entries (a, c, K_ac) of K = Σ S A(ω)†A(ω).
    decay: Vec<(usize, usize, C64)>,
}

impl std::fmt::Debug for RedfieldGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RedfieldGenerator")
            .field("dim", &self.dim())
            .field("jumps", &self.eset.jumps.len())
            .field("bins", &self.eset.bins.len())
            .field("jump_entries", &self.jump_part.nnz())
            .field("decay_entries", &self.decay.len())
            .finish()
    }
}

/// Evaluates each spectrum once per bin it is needed at.
fn rate_table(eset: &EigenOperatorSet, spectra: &[Arc<dyn SpectralDensity>]) -> Result<Vec<Vec<f64>>> {
    eset.jumps
        .iter()
        .zip(spectra)
        .enumerate()
        .map(|(alpha, (jump, spectrum))| {
            jump.blocks
                .iter()
                .map(|b| {
                    let rate = spectrum.density(b.omega)?;
                    if !(rate >= 0.0) || !rate.is_finite() {
                        return Err(RedfieldError::NegativeRate {
                            jump: alpha,
                            omega: b.omega,
                            rate,
                        });
                    }
                    Ok(rate)
                })
                .collect()
        })
        .collect()
}

pub fn assemble_generator(
    eset: EigenOperatorSet,
    spectra: Vec<Arc<dyn SpectralDensity>>,
    options: GeneratorOptions,
) -> Result<RedfieldGenerator> {
    if !options.secular {
        return Err(RedfieldError::NonSecularUnsupported);
    }
    if spectra.len() != eset.jumps.len() {
        return Err(RedfieldError::MissingSpectrum {
            jumps: eset.jumps.len(),
            spectra: spectra.len(),
        });
    }
    let d = eset.dim();
    let rates = rate_table(&eset, &spectra)?;
    let keep = |b: &FrequencyBlock, rate: f64| rate > 0.0 && !(options.drop_zero_frequency && b.omega.abs() <= eset.bin_tol);

    let mut total = 0usize;
    for (jump, jr) in eset.jumps.iter().zip(&rates) {
        for (b, &rate) in jump.blocks.iter().zip(jr) {
            if keep(b, rate) {
                total += b.entries.len() * b.entries.len();
            }
        }
    }
    if total > MAX_TENSOR_ENTRIES {
        return Err(RedfieldError::TooDense(total));
    }

    let mut triplets: Vec<(u32, u32, C64)> = Vec::with_capacity(total);
    let mut decay: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    let mut by_row: BTreeMap<usize, Vec<(usize, C64)>> = BTreeMap::new();
    for (jump, jr) in eset.jumps.iter().zip(&rates) {
        for (b, &rate) in jump.blocks.iter().zip(jr) {
            if !keep(b, rate) {
                continue;
            }
            let s = C64::new(rate, 0.0);
            // (A ρ A†)_ab = Σ_cd A_ac ρ_cd conj(A_bd)
            for &(a, c, v1) in &b.entries {
                for &(bb, dd, v2) in &b.entries {
                    triplets.push(((a + bb * d) as u32, (c + dd * d) as u32, s * v1 * v2.conj()));
                }
            }
            // K_ac = Σ_n conj(A_na) A_nc
            by_row.clear();
            for &(n, m, v) in &b.entries {
                by_row.entry(n).or_default().push((m, v));
            }
            for row in by_row.values() {
                for &(a, va) in row {
                    for &(c, vc) in row {
                        *decay.entry((a, c)).or_default() += s * va.conj() * vc;
                    }
                }
            }
        }
    }
    let jump_part = SparseLiouville::from_triplets(d * d, triplets);
    let decay = decay.into_iter().map(|((a, c), v)| (a, c, v)).collect();
    Ok(RedfieldGenerator {
        eset,
        spectra,
        options,
        rates,
        jump_part,
        decay,
    })
}

impl RedfieldGenerator {
    pub fn dim(&self) -> usize {
        self.eset.dim()
    }

    pub fn eigen_set(&self) -> &EigenOperatorSet {
        &self.eset
    }

    pub fn energies(&self) -> &[f64] {
        self.eset.energies()
    }

    pub fn options(&self) -> GeneratorOptions {
        self.options
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    /// Stored entries of the jump part and of K.
    pub fn sparsity(&self) -> (usize, usize) {
        (self.jump_part.nnz(), self.decay.len())
    }

    /// out += D(ρ), all in the energy eigenbasis.
    pub fn apply_dissipator_add(&self, rho: &CMatrix, out: &mut CMatrix) {
        let d = self.dim();
        self.jump_part.apply_add(rho.as_slice(), out.as_mut_slice());
        let half = C64::new(0.5, 0.0);
        for &(a, c, k) in &self.decay {
            let hk = half * k;
            for b in 0..d {
                out[(a, b)] -= hk * rho[(c, b)];
                out[(b, c)] -= rho[(b, a)] * hk;
            }
        }
    }

    pub fn dissipator(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        self.apply_dissipator_add(rho, &mut out);
        out
    }

    /// −i[H, ρ] + D(ρ) in the energy eigenbasis.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let e = self.energies();
        let mut out = CMatrix::from_fn(self.dim(), self.dim(), |a, b| C64::new(0.0, -(e[a] - e[b])) * rho[(a, b)]);
        self.apply_dissipator_add(rho, &mut out);
        out
    }

    pub fn validity_report(&self, threshold: f64) -> Result<ValidityReport> {
        validity_check(&self.eset, &self.spectra, threshold)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub initial: usize,
    pub final_state: usize,
    /// ε_i − ε_f.
    pub omega: f64,
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct ValidityReport {
    pub threshold: f64,
    pub transitions: Vec<Transition>,
    pub max_ratio: f64,
    pub worst: Option<Transition>,
    pub pass: bool,
}

/// Golden-rule rates Γ_if = Σ_α |⟨i|A_α|f⟩|² S_α(ω_if) over all eigenpairs
/// with a non-negligible matrix element and |ω_if| above the bin tolerance.
/// Spectra are evaluated at the bin representative of ω_if.
pub fn validity_check(
    eset: &EigenOperatorSet,
    spectra: &[Arc<dyn SpectralDensity>],
    threshold: f64,
) -> Result<ValidityReport> {
    if spectra.len() != eset.jumps.len() {
        return Err(RedfieldError::MissingSpectrum {
            jumps: eset.jumps.len(),
            spectra: spectra.len(),
        });
    }
    let d = eset.dim();
    let e = eset.energies();
    let mut rates = vec![0.0f64; d * d];
    let mut touched = vec![false; d * d];
    for (jump, spectrum) in eset.jumps.iter().zip(spectra) {
        let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
        for b in &jump.blocks {
            for &(i, f, v) in &b.entries {
                if v.norm() <= 1e-12 || (e[i] - e[f]).abs() <= eset.bin_tol {
                    continue;
                }
                let bin = eset.bin_of(f, i);
                let s = match cache.get(&bin) {
                    Some(&s) => s,
                    None => {
                        let s = spectrum.density(eset.bins[bin])?;
                        cache.insert(bin, s);
                        s
                    }
                };
                rates[i * d + f] += v.norm_sqr() * s;
                touched[i * d + f] = true;
            }
        }
    }
    let mut transitions = Vec::new();
    let mut worst: Option<Transition> = None;
    let mut max_ratio = 0.0f64;
    for i in 0..d {
        for f in 0..d {
            if !touched[i * d + f] {
                continue;
            }
            let t = Transition {
                initial: i,
                final_state: f,
                omega: e[i] - e[f],
                rate: rates[i * d + f],
            };
            let ratio = t.rate / t.omega.abs();
            if ratio > max_ratio || worst.is_none() {
                max_ratio = max_ratio.max(ratio);
                worst = Some(t);
            }
            transitions.push(t);
        }
    }
    Ok(ValidityReport {
        threshold,
        transitions,
        max_ratio,
        worst,
        pass: max_ratio < threshold,
    })
}

/// Explicit d²×d² generator built from the Bloch–Redfield tensor with a
/// secular filter, acting on row-major vec(ρ) (index a·d + b) in the energy
/// eigenbasis. Only meant as a brute-force reference for small systems.
pub fn dense_superoperator(gen: &RedfieldGenerator) -> Result<CMatrix> {
    let eset = &gen.eset;
    let d = eset.dim();
    if d > DENSE_DIM_LIMIT {
        return Err(RedfieldError::DenseLimit(d));
    }
    let e = eset.energies();
    let tol = eset.bin_tol;
    let w = |a: usize, b: usize| e[a] - e[b];
    let drop = |omega: f64| gen.options.drop_zero_frequency && omega.abs() <= tol;
    let idx = |a: usize, b: usize| a * d + b;
    let mut r = CMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            r[(idx(a, b), idx(a, b))] += C64::new(0.0, -w(a, b));
        }
    }
    for (jump, spectrum) in eset.jumps.iter().zip(&gen.spectra) {
        let amat = &jump.rotated;
        let s = |omega: f64| -> Result<f64> {
            if drop(omega) {
                Ok(0.0)
            } else {
                Ok(spectrum.density(omega)?)
            }
        };
        let mut sw = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                sw[a * d + b] = s(w(a, b))?;
            }
        }
        let sw = |a: usize, b: usize| sw[a * d + b];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for dd in 0..d {
                        if (w(a, b) - w(c, dd)).abs() > tol {
                            continue;
                        }
                        let mut v = amat[(a, c)] * amat[(dd, b)] * C64::new(0.5 * (sw(c, a) + sw(dd, b)), 0.0);
                        if b == dd {
                            for n in 0..d {
                                v -= amat[(a, n)] * amat[(n, c)] * C64::new(0.25 * (sw(a, n) + sw(c, n)), 0.0);
                            }
                        }
                        if a == c {
                            for n in 0..d {
                                v -= amat[(dd, n)] * amat[(n, b)] * C64::new(0.25 * (sw(dd, n) + sw(b, n)), 0.0);
                            }
                        }
                        r[(idx(a, b), idx(c, dd))] += v;
                    }
                }
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{pauli, CVector};
    use crate::noise::PowerLawSpectrum;
    use approx::assert_abs_diff_eq;

    struct Flat(f64);

    impl SpectralDensity for Flat {
        fn density(&self, _omega: f64) -> std::result::Result<f64, NoiseError> {
            Ok(self.0)
        }
    }

    fn two_level(delta: f64) -> OperatorMatrix {
        let v = CVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(delta, 0.0)]);
        OperatorMatrix::hermitian(CMatrix::from_diagonal(&v)).unwrap()
    }

    #[test]
    fn two_level_frequencies() {
        let h = two_level(2.0);
        let x = OperatorMatrix::hermitian(pauli::sigma_x()).unwrap();
        let eset = decompose_eigenoperators(&h, &[&x], 1e-8).unwrap();
        assert_eq!(eset.bins.len(), 3);
        assert_abs_diff_eq!(eset.bins[0], -2.0);
        assert_abs_diff_eq!(eset.bins[2], 2.0);
        // the zero bin carries no σˣ weight
        let omegas: Vec<f64> = eset.jumps[0].blocks.iter().map(|b| b.omega).collect();
        assert_eq!(omegas, vec![-2.0, 2.0]);
        let plus = eset.jumps[0].blocks.iter().find(|b| b.omega > 0.0).unwrap();
        assert_eq!(plus.entries.len(), 1);
        // ε_m − ε_n = +Δ for (n, m) = (0, 1): lowers the energy
        assert_eq!((plus.entries[0].0, plus.entries[0].1), (0, 1));
    }

    #[test]
    fn dephasing_jump_has_single_zero_frequency() {
        let h = two_level(1.0);
        let z = OperatorMatrix::hermitian(pauli::sigma_z()).unwrap();
        let eset = decompose_eigenoperators(&h, &[&z], 1e-8).unwrap();
        assert_eq!(eset.jumps[0].blocks.len(), 1);
        assert_eq!(eset.jumps[0].blocks[0].omega, 0.0);
        assert_abs_diff_eq!(algebra::max_abs(&(eset.block_matrix(0, 0) - pauli::sigma_z())), 0.0);
    }

    #[test]
    fn flat_spectrum_two_level_rates() {
        let g = 0.3;
        let h = two_level(1.5);
        let x = OperatorMatrix::hermitian(pauli::sigma_x()).unwrap();
        let eset = decompose_eigenoperators(&h, &[&x], 1e-8).unwrap();
        let gen = assemble_generator(eset, vec![Arc::new(Flat(g))], GeneratorOptions::default()).unwrap();
        // populations relax towards I/2 at total rate 2g, coherences at rate g
        let mut rho = CMatrix::zeros(2, 2);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let dr = gen.dissipator(&rho);
        assert_abs_diff_eq!(dr[(0, 0)].re, -g, epsilon = 1e-15);
        assert_abs_diff_eq!(dr[(1, 1)].re, g, epsilon = 1e-15);
        let mut coh = CMatrix::zeros(2, 2);
        coh[(0, 1)] = C64::new(1.0, 0.0);
        assert_abs_diff_eq!(gen.dissipator(&coh)[(0, 1)].re, -g, epsilon = 1e-15);
        let mixed = CMatrix::identity(2, 2) * C64::new(0.5, 0.0);
        assert_abs_diff_eq!(algebra::max_abs(&gen.dissipator(&mixed)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_coupling_is_coherent() {
        let h = two_level(1.0);
        let x = OperatorMatrix::hermitian(pauli::sigma_x()).unwrap();
        let eset = decompose_eigenoperators(&h, &[&x], 1e-8).unwrap();
        let s = PowerLawSpectrum::new(0.0, 1.0, 1e-2).unwrap();
        let gen = assemble_generator(eset, vec![Arc::new(s)], GeneratorOptions::default()).unwrap();
        let mut p = CMatrix::zeros(2, 2);
        p[(1, 1)] = C64::new(1.0, 0.0);
        assert_eq!(algebra::max_abs(&gen.apply(&p)), 0.0);
        let dense = dense_superoperator(&gen).unwrap();
        let hm = h.matrix();
        let id = CMatrix::identity(2, 2);
        let want = (hm.kronecker(&id) - id.kronecker(&hm.transpose())) * C64::new(0.0, -1.0);
        assert_abs_diff_eq!(algebra::max_abs(&(dense - want)), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = two_level(1.0);
        let p = OperatorMatrix::new(pauli::sigma_plus()).unwrap();
        assert!(matches!(
            decompose_eigenoperators(&h, &[&p], 1e-8),
            Err(RedfieldError::NonHermitianJump(0))
        ));
        let x = OperatorMatrix::hermitian(pauli::sigma_x()).unwrap();
        let eset = decompose_eigenoperators(&h, &[&x], 1e-8).unwrap();
        assert!(matches!(
            assemble_generator(eset.clone(), vec![], GeneratorOptions::default()),
            Err(RedfieldError::MissingSpectrum { .. })
        ));
        let opts = GeneratorOptions {
            secular: false,
            ..GeneratorOptions::default()
        };
        assert!(matches!(
            assemble_generator(eset.clone(), vec![Arc::new(Flat(1.0))], opts),
            Err(RedfieldError::NonSecularUnsupported)
        ));
        assert!(matches!(
            assemble_generator(eset, vec![Arc::new(Flat(-1.0))], GeneratorOptions::default()),
            Err(RedfieldError::NegativeRate { .. })
        ));
    }

    #[test]
    fn binning_merges_degenerate_frequencies() {
        let (bins, pair_bin) = bin_frequencies(&[0.0, 1.0, 1.0 + 1e-12, 3.0], 1e-8);
        assert_eq!(pair_bin[1], pair_bin[2]);
        for w in bins.windows(2) {
            assert!(w[1] - w[0] > 1e-8);
        }
        assert_eq!(bins.len(), 7);
    }
}
