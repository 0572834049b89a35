use std::sync::OnceLock;

use gaugenoise::algebra::{CMatrix, C64};
use gaugenoise::harness::config::ExperimentConfig;
use gaugenoise::harness::experiment::Prepared;
use gaugenoise::redfield::RedfieldGenerator;
use proptest::prelude::*;

fn generator() -> &'static RedfieldGenerator {
    static GEN: OnceLock<RedfieldGenerator> = OnceLock::new();
    GEN.get_or_init(|| {
        let cfg = ExperimentConfig::parse(
            "initial_state = \"u1_vacuum\"\n[model]\nkind = \"u1\"\nsites = 2\n\
             [protection]\nkind = \"linear\"\nsequence = \"staggered\"\nv = 5.0\n[noise]\ngamma = 0.2\nbeta = 1.4\n",
        )
        .unwrap();
        let prep = Prepared::new(&cfg).unwrap();
        prep.generator(cfg.points()[0]).unwrap().0
    })
}

fn density(entries: &[(f64, f64)], d: usize) -> CMatrix {
    let a = CMatrix::from_fn(d, d, |i, j| {
        let (re, im) = entries[i * d + j];
        C64::new(re, im)
    });
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generator_preserves_trace_and_hermiticity(entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 256)) {
        let gen = generator();
        let rho = density(&entries, gen.dim());
        let out = gen.apply(&rho);
        prop_assert!(out.trace().norm() < 1e-12);
        prop_assert!((&out - out.adjoint()).camax() < 1e-12);
    }

    #[test]
    fn dissipator_is_unital_and_never_raises_purity(entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 256)) {
        // Hermitian jumps make the flow unital: D(1) = 0.
        let gen = generator();
        let d = gen.dim();
        let id = CMatrix::identity(d, d);
        prop_assert!(gen.dissipator(&id).camax() < 1e-12);
        let rho = density(&entries, d);
        let purity_rate = 2.0 * (rho.adjoint() * gen.dissipator(&rho)).trace().re;
        prop_assert!(purity_rate <= 1e-12);
    }
}
