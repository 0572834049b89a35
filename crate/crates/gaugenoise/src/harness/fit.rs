//! Early-time slopes of ε(t) and the cross-run scaling regressions.

use std::path::Path;

use super::output::{read_index, read_violation, IndexEntry};
use super::HarnessError;

/// Upper end of the fit window when ε stays small.
pub const WINDOW_T_MAX: f64 = 5.0;
/// Lower end of the fit window.
pub const WINDOW_T_MIN: f64 = 0.5;
/// Fraction of the maximal-mixing violation that closes the window.
pub const WINDOW_EPS_FRACTION: f64 = 0.1;
/// Leading grid samples never used in a fit.
pub const SKIPPED_SAMPLES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Ordinary least squares y = a + b x.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - intercept - slope * xi).powi(2))
        .sum();
    let slope_stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub t_lo: f64,
    pub t_hi: f64,
    pub fit: LinearFit,
}

/// [t_lo, t_hi] with t_hi = min(5, first t where ε ≥ 0.1 ε_mm) and t_lo = min(0.5, t_hi/4).
pub fn fit_window(times: &[f64], eps: &[f64], eps_maxmix: f64) -> (f64, f64) {
    let crossing = times
        .iter()
        .zip(eps)
        .find(|(_, &e)| e >= WINDOW_EPS_FRACTION * eps_maxmix)
        .map(|(&t, _)| t)
        .unwrap_or(f64::INFINITY);
    let t_hi = crossing.min(WINDOW_T_MAX);
    (WINDOW_T_MIN.min(t_hi / 4.0), t_hi)
}

pub fn early_slope(times: &[f64], eps: &[f64], eps_maxmix: f64) -> Result<SlopeFit, HarnessError> {
    let (t_lo, t_hi) = fit_window(times, eps, eps_maxmix);
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(eps)
        .skip(SKIPPED_SAMPLES)
        .filter(|(&t, _)| t >= t_lo && t <= t_hi)
        .map(|(&t, &e)| (t, e))
        .unzip();
    if x.len() < 3 {
        return Err(HarnessError::Fit(format!(
            "only {} samples in the fit window [{t_lo}, {t_hi}]; refine the early output grid",
            x.len()
        )));
    }
    let fit = linear_regression(&x, &y).ok_or_else(|| HarnessError::Fit("degenerate fit window".into()))?;
    Ok(SlopeFit { t_lo, t_hi, fit })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    Protection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSlope {
    pub stem: String,
    pub gamma: f64,
    pub v: f64,
    pub slope: SlopeFit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub axis: SweepAxis,
    pub runs: Vec<RunSlope>,
    /// Regression of ln(slope) on ln(γ) or ln(V).
    pub log_fit: LinearFit,
    /// For V sweeps: β̂ = −d ln(slope)/d ln V.
    pub beta_hat: Option<f64>,
    /// For γ sweeps: least-squares k in slope = kγ.
    pub proportionality: Option<f64>,
    /// For γ sweeps: max_i |slope_i − kγ_i| / (kγ_i).
    pub max_relative_deviation: Option<f64>,
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn fit_scaling(runs: Vec<RunSlope>) -> Result<ScalingFit, HarnessError> {
    if runs.len() < 3 {
        return Err(HarnessError::Fit(format!("need at least 3 runs, got {}", runs.len())));
    }
    let gammas = distinct(runs.iter().map(|r| r.gamma));
    let vs = distinct(runs.iter().map(|r| r.v));
    let axis = match (gammas.len() > 1, vs.len() > 1) {
        (true, false) => SweepAxis::Gamma,
        (false, true) => SweepAxis::Protection,
        (true, true) => return Err(HarnessError::Fit("runs vary both gamma and V".into())),
        (false, false) => return Err(HarnessError::Fit("runs vary neither gamma nor V".into())),
    };
    let (xs, count) = match axis {
        SweepAxis::Gamma => (runs.iter().map(|r| r.gamma).collect::<Vec<_>>(), gammas.len()),
        SweepAxis::Protection => (runs.iter().map(|r| r.v).collect(), vs.len()),
    };
    if count < 3 {
        return Err(HarnessError::Fit(format!("need at least 3 distinct values, got {count}")));
    }
    if xs.iter().any(|&x| x <= 0.0) {
        return Err(HarnessError::Fit("log-log regression needs positive sweep values".into()));
    }
    let slopes: Vec<f64> = runs.iter().map(|r| r.slope.fit.slope).collect();
    if let Some(bad) = runs.iter().find(|r| r.slope.fit.slope <= 0.0) {
        return Err(HarnessError::Fit(format!(
            "run {} has non-positive early slope {:e}",
            bad.stem, bad.slope.fit.slope
        )));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = slopes.iter().map(|s| s.ln()).collect();
    let log_fit = linear_regression(&lx, &ly).ok_or_else(|| HarnessError::Fit("degenerate regression".into()))?;
    let (beta_hat, proportionality, max_relative_deviation) = match axis {
        SweepAxis::Protection => (Some(-log_fit.slope), None, None),
        SweepAxis::Gamma => {
            let k = xs.iter().zip(&slopes).map(|(x, s)| x * s).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
            let dev = xs
                .iter()
                .zip(&slopes)
                .map(|(x, s)| ((s - k * x) / (k * x)).abs())
                .fold(0.0, f64::max);
            (None, Some(k), Some(dev))
        }
    };
    Ok(ScalingFit {
        axis,
        runs,
        log_fit,
        beta_hat,
        proportionality,
        max_relative_deviation,
    })
}

fn check_consistent(entries: &[IndexEntry]) -> Result<(), HarnessError> {
    let first = &entries[0];
    for e in entries {
        if e.model != first.model
            || e.initial_state != first.initial_state
            || e.protection != first.protection
            || e.sequence != first.sequence
            || e.beta != first.beta
            || e.lambda != first.lambda
        {
            return Err(HarnessError::Fit(format!(
                "run {} differs from {} in more than gamma or V",
                e.stem, first.stem
            )));
        }
    }
    Ok(())
}

/// Reads an index file and the CSVs it lists, then fits the scaling law.
pub fn fit_index(index: &Path) -> Result<ScalingFit, HarnessError> {
    let entries = read_index(index)?;
    if entries.is_empty() {
        return Err(HarnessError::Fit("index is empty".into()));
    }
    check_consistent(&entries)?;
    let dir = index.parent().unwrap_or(Path::new("."));
    let mut runs = Vec::with_capacity(entries.len());
    for e in &entries {
        let (t, eps) = read_violation(&dir.join(&e.csv))?;
        runs.push(RunSlope {
            stem: e.stem.clone(),
            gamma: e.gamma,
            v: e.v,
            slope: early_slope(&t, &eps, e.eps_maxmix)?,
        });
    }
    fit_scaling(runs)
}

pub fn render(fit: &ScalingFit) -> String {
    let mut out = String::new();
    let axis = match fit.axis {
        SweepAxis::Gamma => "gamma",
        SweepAxis::Protection => "V",
    };
    out.push_str(&format!("sweep axis: {axis}\n"));
    out.push_str("stem,gamma,V,t_lo,t_hi,slope,slope_stderr,r_squared\n");
    for r in &fit.runs {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.10e},{:.3e},{:.6}\n",
            r.stem, r.gamma, r.v, r.slope.t_lo, r.slope.t_hi, r.slope.fit.slope, r.slope.fit.slope_stderr, r.slope.fit.r_squared
        ));
    }
    out.push_str(&format!(
        "log-log exponent: {:.6} +/- {:.6} (R^2 = {:.6})\n",
        fit.log_fit.slope, fit.log_fit.slope_stderr, fit.log_fit.r_squared
    ));
    if let Some(b) = fit.beta_hat {
        out.push_str(&format!(
            "beta_hat: {b:.6} (95% interval {:.6} .. {:.6})\n",
            b - 2.0 * fit.log_fit.slope_stderr,
            b + 2.0 * fit.log_fit.slope_stderr
        ));
    }
    if let (Some(k), Some(dev)) = (fit.proportionality, fit.max_relative_deviation) {
        out.push_str(&format!("slope/gamma: {k:.6e}\nmax relative deviation from proportionality: {dev:.4}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn regression_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let f = linear_regression(&x, &y).unwrap();
        assert_relative_eq!(f.slope, -2.0, epsilon = 1e-14);
        assert_relative_eq!(f.intercept, 3.0, epsilon = 1e-14);
        assert_relative_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn window_closes_at_ten_percent() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let eps: Vec<f64> = t.iter().map(|t| 0.1 * t).collect();
        let (lo, hi) = fit_window(&t, &eps, 2.0);
        assert_relative_eq!(hi, 2.0, epsilon = 1e-12);
        assert_relative_eq!(lo, 0.5);
        let (lo, hi) = fit_window(&t, &eps, 1.0);
        assert_relative_eq!(hi, 1.0, epsilon = 1e-12);
        assert_relative_eq!(lo, 0.25, epsilon = 1e-12);
    }

    fn run(gamma: f64, v: f64, slope: f64) -> RunSlope {
        RunSlope {
            stem: format!("g{gamma}_V{v}"),
            gamma,
            v,
            slope: SlopeFit {
                t_lo: 0.5,
                t_hi: 5.0,
                fit: LinearFit {
                    slope,
                    intercept: 0.0,
                    slope_stderr: 0.0,
                    r_squared: 1.0,
                    n: 10,
                },
            },
        }
    }

    #[test]
    fn power_law_exponent() {
        let runs = [10.0, 20.0, 40.0, 80.0].iter().map(|&v| run(0.1, v, 0.1 * v.powf(-1.7))).collect();
        let f = fit_scaling(runs).unwrap();
        assert_relative_eq!(f.beta_hat.unwrap(), 1.7, epsilon = 1e-12);
    }

    #[test]
    fn gamma_proportionality() {
        let runs = [0.025, 0.05, 0.1].iter().map(|&g| run(g, 0.0, 3.0 * g)).collect();
        let f = fit_scaling(runs).unwrap();
        assert_relative_eq!(f.proportionality.unwrap(), 3.0, epsilon = 1e-12);
        assert!(f.max_relative_deviation.unwrap() < 1e-12);
    }

    #[test]
    fn confounded_or_short_sweeps_fail() {
        assert!(fit_scaling(vec![run(0.1, 10.0, 1.0), run(0.2, 20.0, 1.0), run(0.3, 30.0, 1.0)]).is_err());
        assert!(fit_scaling(vec![run(0.1, 10.0, 1.0), run(0.1, 20.0, 1.0)]).is_err());
    }
}
