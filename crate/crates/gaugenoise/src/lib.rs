//! Exact-diagonalization simulator for the spin-1/2 U(1) quantum link model
//! and the Z₂ lattice gauge theory coupled to 1/f^β noise through a secular
//! Bloch–Redfield master equation.

extern crate openblas_src;

pub mod algebra;
pub mod dynamics;
pub mod harness;
pub mod models;
pub mod noise;
pub mod observables;
pub mod redfield;
