//! Noise power spectra S(ω) entering the Bloch–Redfield rates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_OMEGA_CUTOFF: f64 = 1e-2;
pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("rate band requires 0 < r1 < r2, got r1 = {r1}, r2 = {r2}")]
    InvalidBand { r1: f64, r2: f64 },
    #[error("quadrature failed to reach relative tolerance {tol:e} at omega = {omega} (estimate {estimate:e})")]
    QuadratureFailed { omega: f64, tol: f64, estimate: f64 },
    #[error("spectrum evaluated at non-finite frequency {0}")]
    NonFiniteFrequency(f64),
}

pub type Result<T> = std::result::Result<T, NoiseError>;

pub trait SpectralDensity: Send + Sync {
    fn density(&self, omega: f64) -> Result<f64>;
}

fn require(name: &'static str, requirement: &'static str, value: f64, ok: bool) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(NoiseError::InvalidParameter {
            name,
            requirement,
            value,
        })
    }
}

/// γ / max(|ω|, ω_c)^β.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpectrum {
    gamma: f64,
    beta: f64,
    omega_cutoff: f64,
}

impl PowerLawSpectrum {
    pub fn new(gamma: f64, beta: f64, omega_cutoff: f64) -> Result<Self> {
        require("gamma", "non-negative", gamma, gamma >= 0.0)?;
        require("beta", "in (0, 2)", beta, beta > 0.0 && beta < 2.0)?;
        require("omega_cutoff", "positive", omega_cutoff, omega_cutoff > 0.0)?;
        Ok(Self {
            gamma,
            beta,
            omega_cutoff,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega_cutoff(&self) -> f64 {
        self.omega_cutoff
    }
}

impl SpectralDensity for PowerLawSpectrum {
    fn density(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(NoiseError::NonFiniteFrequency(omega));
        }
        Ok(self.gamma / omega.abs().max(self.omega_cutoff).powf(self.beta))
    }
}

/// Lorentzian spectrum of a single random telegraph fluctuator with switching rate r.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtnSpectrum {
    rate: f64,
}

impl RtnSpectrum {
    pub fn new(rate: f64) -> Result<Self> {
        require("rate", "positive", rate, rate > 0.0)?;
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

fn lorentzian(omega: f64, r: f64) -> f64 {
    r / (PI * (omega * omega + r * r))
}

impl SpectralDensity for RtnSpectrum {
    fn density(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(NoiseError::NonFiniteFrequency(omega));
        }
        Ok(lorentzian(omega, self.rate))
    }
}

/// Ensemble of telegraph fluctuators with switching rates r ∈ [r1, r2]
/// distributed as p(r) ∝ r^(−α).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeSpectrum {
    r1: f64,
    r2: f64,
    alpha: f64,
    rel_tol: f64,
}

impl CompositeSpectrum {
    pub fn new(r1: f64, r2: f64, alpha: f64) -> Result<Self> {
        Self::with_tolerance(r1, r2, alpha, DEFAULT_QUADRATURE_TOL)
    }

    pub fn with_tolerance(r1: f64, r2: f64, alpha: f64, rel_tol: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > r1 && r2.is_finite()) {
            return Err(NoiseError::InvalidBand { r1, r2 });
        }
        require("alpha", "finite", alpha, true)?;
        require("rel_tol", "positive", rel_tol, rel_tol > 0.0)?;
        Ok(Self { r1, r2, alpha, rel_tol })
    }

    /// ∫ r^(−α) dr over the band.
    fn normalization(&self) -> f64 {
        let e = 1.0 - self.alpha;
        if e.abs() < 1e-12 {
            (self.r2 / self.r1).ln()
        } else {
            (self.r2.powf(e) - self.r1.powf(e)) / e
        }
    }
}

impl SpectralDensity for CompositeSpectrum {
    fn density(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(NoiseError::NonFiniteFrequency(omega));
        }
        // substitute r = e^u so that dr r^(−α) = e^{u(1−α)} du
        let e = 1.0 - self.alpha;
        let f = |u: f64| {
            let r = u.exp();
            lorentzian(omega, r) * (u * e).exp()
        };
        let (a, b) = (self.r1.ln(), self.r2.ln());
        let value = adaptive_gauss_kronrod(&f, a, b, self.rel_tol).map_err(|estimate| NoiseError::QuadratureFailed {
            omega,
            tol: self.rel_tol,
            estimate,
        })?;
        Ok(value / self.normalization())
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive 7/15-point Gauss–Kronrod; the error is the last
/// estimate on failure.
fn adaptive_gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> std::result::Result<f64, f64> {
    const MAX_INTERVALS: usize = 2000;
    let (v, e) = gauss_kronrod_15(f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let total: f64 = intervals.iter().map(|x| x.2).sum();
        let err: f64 = intervals.iter().map(|x| x.3).sum();
        if err <= rel_tol * total.abs() || err < f64::MIN_POSITIVE {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(err);
        }
        let (k, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        for (l, r) in [(lo, mid), (mid, hi)] {
            let (v, e) = gauss_kronrod_15(f, l, r);
            intervals.push((l, r, v, e));
        }
    }
}

/// Tagged union of the spectra selectable from a run configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spectrum {
    PowerLaw(PowerLawSpectrum),
    Rtn(RtnSpectrum),
    Composite(CompositeSpectrum),
}

impl SpectralDensity for Spectrum {
    fn density(&self, omega: f64) -> Result<f64> {
        match self {
            Spectrum::PowerLaw(s) => s.density(omega),
            Spectrum::Rtn(s) => s.density(omega),
            Spectrum::Composite(s) => s.density(omega),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_law_values() {
        let s = PowerLawSpectrum::new(0.1, 1.0, 1e-2).unwrap();
        assert_relative_eq!(s.density(2.0).unwrap(), 0.05);
        assert_relative_eq!(s.density(-2.0).unwrap(), 0.05);
        assert_relative_eq!(s.density(0.0).unwrap(), 10.0);
        assert_relative_eq!(s.density(1e-3).unwrap(), 10.0);
        let s = PowerLawSpectrum::new(1.0, 1.7, 1e-2).unwrap();
        assert_relative_eq!(s.density(4.0).unwrap(), 4f64.powf(-1.7), max_relative = 1e-15);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(PowerLawSpectrum::new(-0.1, 1.0, 1e-2).is_err());
        assert!(PowerLawSpectrum::new(0.1, 2.0, 1e-2).is_err());
        assert!(PowerLawSpectrum::new(0.1, 0.0, 1e-2).is_err());
        assert!(PowerLawSpectrum::new(0.1, 1.0, 0.0).is_err());
        assert!(RtnSpectrum::new(0.0).is_err());
        assert!(CompositeSpectrum::new(1.0, 1.0, 1.0).is_err());
        assert!(CompositeSpectrum::new(0.0, 1.0, 1.0).is_err());
        let s = PowerLawSpectrum::new(0.1, 1.0, 1e-2).unwrap();
        assert!(s.density(f64::NAN).is_err());
    }

    #[test]
    fn lorentzian_peak() {
        let s = RtnSpectrum::new(2.0).unwrap();
        assert_relative_eq!(s.density(0.0).unwrap(), 1.0 / (2.0 * PI));
    }

    #[test]
    fn gauss_kronrod_integrates_polynomials_exactly() {
        let (v, _) = gauss_kronrod_15(&|x| x.powi(6) - 3.0 * x, 0.0, 2.0);
        assert_relative_eq!(v, 128.0 / 7.0 - 6.0, max_relative = 1e-14);
    }
}
