use gaugenoise::algebra::{CMatrix, DensityMatrix, OperatorMatrix, C64};
use gaugenoise::dynamics::{evolve, evolve_closed, ClosedMethod, IntegratorConfig, TimeGrid};
use gaugenoise::harness::config::{ExperimentConfig, RunPoint};
use gaugenoise::harness::experiment::Prepared;
use gaugenoise::models::{build_initial_state, build_u1_qlm, InitialStatePreset, U1Params};
use gaugenoise::observables::violation_operator;

fn prepared(toml: &str) -> (ExperimentConfig, Prepared) {
    let cfg = ExperimentConfig::parse(toml).unwrap();
    let prep = Prepared::new(&cfg).unwrap();
    (cfg, prep)
}

fn small_u1(state: &str, v: f64) -> String {
    format!(
        "initial_state = \"{state}\"\n[model]\nkind = \"u1\"\nsites = 2\n\
         [protection]\nkind = \"linear\"\nsequence = \"staggered\"\nv = {v:?}\n\
         [noise]\ngamma = 0.1\nbeta = 1.3\n[grid]\nkind = \"uniform\"\nt_max = 4.0\npoints = 9\n"
    )
}

#[test]
fn x_domain_wall_starts_at_maximal_violation() {
    // Links in σˣ eigenstates contribute (s^z)^2 = 1/4 each and no cross terms,
    // so ⟨G_j²⟩ = n_j + 1/2 and half filling averages to exactly one.
    let b = build_u1_qlm(&U1Params::default()).unwrap();
    let psi = build_initial_state(&b, &InitialStatePreset::U1DomainWallX).unwrap();
    let eps = psi.expectation(&violation_operator(&b)).re;
    assert!((eps - 1.0).abs() < 1e-12, "{eps}");
}

#[test]
fn stepped_closed_evolution_matches_spectral() {
    let b = build_u1_qlm(&U1Params::default()).unwrap();
    let psi = build_initial_state(&b, &InitialStatePreset::U1DomainWallX).unwrap();
    let mut cfg = IntegratorConfig::new(TimeGrid::explicit(vec![0.0, 10.0, 50.0]).unwrap());
    cfg.rel_tol = 1e-13;
    cfg.abs_tol = 1e-15;
    let exact = evolve_closed(&b.h0, &psi, &cfg, ClosedMethod::Spectral).unwrap();
    let stepped = evolve_closed(&b.h0, &psi, &cfg, ClosedMethod::Stepped).unwrap();
    for (a, s) in exact.states.iter().zip(&stepped.states) {
        let diff = (a.amplitudes() - s.amplitudes()).norm();
        assert!(diff < 1e-9, "{diff}");
    }
}

#[test]
fn maximally_mixed_state_is_stationary_under_noise() {
    let (cfg, prep) = prepared(&small_u1("u1_vacuum", 10.0));
    let (gen, _) = prep.generator(cfg.points()[0]).unwrap();
    let mixed = DensityMatrix::maximally_mixed(gen.dim());
    let traj = evolve(&gen, &mixed, &cfg.integrator_config().unwrap()).unwrap();
    for s in &traj.states {
        assert!(s.trace_distance(&mixed).unwrap() < 1e-10);
    }
}

#[test]
fn hamiltonian_eigenstate_is_stationary_without_noise() {
    let (cfg, prep) = prepared(&small_u1("u1_vacuum", 10.0));
    let point = RunPoint {
        gamma: 0.0,
        ..cfg.points()[0]
    };
    let (gen, _) = prep.generator(point).unwrap();
    let eig = &gen.eigen_set().eig;
    let v = eig.eigenvectors.column(3).into_owned();
    let rho = DensityMatrix::new(&v * v.adjoint()).unwrap();
    let traj = evolve(&gen, &rho, &cfg.integrator_config().unwrap()).unwrap();
    for s in &traj.states {
        assert!(s.trace_distance(&rho).unwrap() < 1e-10);
    }
}

#[test]
fn evolution_is_linear_in_the_initial_state() {
    let (cfg, prep) = prepared(&small_u1("u1_vacuum", 0.0));
    let (gen, _) = prep.generator(cfg.points()[0]).unwrap();
    let mut icfg = cfg.integrator_config().unwrap();
    icfg.rel_tol = 1e-11;
    icfg.abs_tol = 1e-13;
    let b = &prep.bundle;
    let r1 = build_initial_state(b, &InitialStatePreset::U1Vacuum).unwrap().to_density();
    let r2 = build_initial_state(b, &InitialStatePreset::U1DomainWallX).unwrap().to_density();
    let w = 0.3;
    let mix = DensityMatrix::new(r1.matrix() * C64::new(w, 0.0) + r2.matrix() * C64::new(1.0 - w, 0.0)).unwrap();
    let (t1, t2, tm) = (
        evolve(&gen, &r1, &icfg).unwrap(),
        evolve(&gen, &r2, &icfg).unwrap(),
        evolve(&gen, &mix, &icfg).unwrap(),
    );
    for k in 0..tm.states.len() {
        let combo: CMatrix = t1.states[k].matrix() * C64::new(w, 0.0) + t2.states[k].matrix() * C64::new(1.0 - w, 0.0);
        let diff = (tm.states[k].matrix() - combo).norm();
        assert!(diff < 1e-8, "t = {}: {diff}", tm.times[k]);
    }
}

#[test]
fn noise_breaks_gauge_invariance_of_the_vacuum() {
    let (cfg, prep) = prepared(&small_u1("u1_vacuum", 0.0));
    let (gen, _) = prep.generator(cfg.points()[0]).unwrap();
    let traj = evolve(&gen, &prep.psi0.to_density(), &cfg.integrator_config().unwrap()).unwrap();
    let op = violation_operator(&prep.bundle);
    let eps: Vec<f64> = traj.states.iter().map(|s| s.expectation(&op).re).collect();
    assert!(eps[0].abs() < 1e-12);
    assert!(eps.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(*eps.last().unwrap() > 1e-3);
}

#[test]
fn closed_dynamics_conserves_energy() {
    let (cfg, prep) = prepared(&small_u1("u1_domainwall_x", 10.0));
    let point = RunPoint {
        gamma: 0.0,
        ..cfg.points()[0]
    };
    let (gen, _) = prep.generator(point).unwrap();
    let h = prep.hamiltonian(point.v);
    let traj = evolve(&gen, &prep.psi0.to_density(), &cfg.integrator_config().unwrap()).unwrap();
    let e0 = traj.states[0].expectation(&h).re;
    for s in &traj.states {
        assert!((s.expectation(&h).re - e0).abs() < 1e-8);
    }
}

#[test]
fn halving_tolerances_leaves_observables_unchanged() {
    let body = small_u1("u1_domainwall_x", 10.0).replace("t_max = 4.0\npoints = 9", "t_max = 50.0\npoints = 26");
    let (cfg, prep) = prepared(&body);
    let (gen, _) = prep.generator(cfg.points()[0]).unwrap();
    let coarse = cfg.integrator_config().unwrap();
    let mut fine = coarse.clone();
    fine.rel_tol /= 2.0;
    fine.abs_tol /= 2.0;
    let rho0 = prep.psi0.to_density();
    let (a, b) = (evolve(&gen, &rho0, &coarse).unwrap(), evolve(&gen, &rho0, &fine).unwrap());
    let ops = [violation_operator(&prep.bundle), prep.hamiltonian(0.0), OperatorMatrix::hermitian(rho0.matrix().clone()).unwrap()];
    for (x, y) in a.states.iter().zip(&b.states) {
        for op in &ops {
            assert!((x.expectation(op) - y.expectation(op)).norm() < 1e-6);
        }
    }
}
