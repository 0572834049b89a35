use std::f64::consts::PI;

use gaugenoise::noise::{CompositeSpectrum, PowerLawSpectrum, RtnSpectrum, SpectralDensity};

/// ∫ S(ω) dω over the real line via ω = tan θ and composite Simpson.
fn total_weight(s: &dyn SpectralDensity, n: usize) -> f64 {
    let a = -PI / 2.0;
    let h = PI / n as f64;
    let f = |theta: f64| {
        let c = theta.cos();
        if c.abs() < 1e-300 {
            return 0.0;
        }
        s.density(theta.tan()).unwrap() / (c * c)
    };
    let mut acc = f(a) + f(-a);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn telegraph_spectrum_is_normalized() {
    for rate in [0.3, 1.0, 2.5] {
        let s = RtnSpectrum::new(rate).unwrap();
        assert!((total_weight(&s, 4000) - 1.0).abs() < 1e-6, "rate {rate}");
    }
}

#[test]
fn composite_spectrum_is_normalized() {
    let s = CompositeSpectrum::new(0.2, 5.0, 1.0).unwrap();
    assert!((total_weight(&s, 2000) - 1.0).abs() < 1e-5);
}

#[test]
fn spectra_are_even() {
    let c = CompositeSpectrum::new(1e-3, 1e3, 1.3).unwrap();
    let p = PowerLawSpectrum::new(0.1, 1.4, 1e-2).unwrap();
    let r = RtnSpectrum::new(0.7).unwrap();
    for w in [1e-4, 0.05, 0.9, 3.0, 40.0] {
        for s in [&c as &dyn SpectralDensity, &p, &r] {
            assert_eq!(s.density(w).unwrap(), s.density(-w).unwrap());
        }
    }
}

#[test]
fn composite_follows_power_law_inside_band() {
    for alpha in [0.8, 1.0, 1.5] {
        let s = CompositeSpectrum::new(1e-5, 1e5, alpha).unwrap();
        let (w1, w2) = (1e-2, 1e2);
        let slope = (s.density(w2).unwrap() / s.density(w1).unwrap()).ln() / (w2 / w1).ln();
        assert!((slope + alpha).abs() < 0.02, "alpha {alpha}: slope {slope}");
    }
}

#[test]
fn composite_flattens_below_band() {
    let s = CompositeSpectrum::new(1.0, 100.0, 1.0).unwrap();
    let (a, b) = (s.density(1e-4).unwrap(), s.density(1e-3).unwrap());
    assert!((a / b - 1.0).abs() < 1e-3);
}

#[test]
fn power_law_is_capped_at_cutoff() {
    let s = PowerLawSpectrum::new(0.2, 1.0, 0.05).unwrap();
    assert_eq!(s.density(0.0).unwrap(), s.density(0.01).unwrap());
    assert!((s.density(0.0).unwrap() - 4.0).abs() < 1e-12);
}
