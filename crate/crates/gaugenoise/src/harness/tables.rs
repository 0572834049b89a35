//! The Z₂ generator/pseudogenerator eigenvalue table and the sector-weight
//! tables of the domain-wall initial states, computed from the operators.

use crate::algebra::{pauli, Boundary, CVector, StateVector};
use crate::models::{
    build_initial_state, build_u1_qlm, build_z2_lgt, sector_projectors, InitialStatePreset, ModelBundle, U1Params,
    Z2Params,
};

use super::HarnessError;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenvalueRow {
    pub occupation: i32,
    pub tau_left: i32,
    pub tau_right: i32,
    pub g: i32,
    pub w_minus: i32,
    pub w_plus: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectorRow {
    pub labels: Vec<i32>,
    pub rho_z: f64,
    pub rho_x: f64,
}

fn z2_bundle(g_target: i32) -> Result<ModelBundle, HarnessError> {
    Ok(build_z2_lgt(&Z2Params {
        g_target,
        boundary: Boundary::Periodic,
        sites: 4,
        ..Default::default()
    })?)
}

fn round_label(x: f64) -> Result<i32, HarnessError> {
    let r = x.round();
    if (x - r).abs() > 1e-10 {
        return Err(HarnessError::Config(format!("non-integer eigenvalue {x}")));
    }
    Ok(r as i32)
}

/// Eigenvalues of G_j and W_j (for g^tar = −1 and +1) on product states of
/// matter site j and its two links.
pub fn z2_eigenvalue_table() -> Result<Vec<EigenvalueRow>, HarnessError> {
    let minus = z2_bundle(-1)?;
    let plus = z2_bundle(1)?;
    let lat = &plus.lattice;
    let site = 2isize;
    let m = lat.matter_index(site).expect("site");
    let left = lat.link_index(site - 1).expect("link");
    let right = lat.link_index(site).expect("link");
    let tau = |s: i32| if s > 0 { pauli::x_plus() } else { pauli::x_minus() };
    let mut rows = Vec::new();
    for n in [0, 1] {
        for tl in [-1, 1] {
            for tr in [-1, 1] {
                let mut locals: Vec<CVector> = (0..lat.n_subsystems())
                    .map(|k| if k % 2 == 0 { pauli::down() } else { pauli::x_plus() })
                    .collect();
                locals[m] = if n == 1 { pauli::up() } else { pauli::down() };
                locals[left] = tau(tl);
                locals[right] = tau(tr);
                let psi = StateVector::product(lat, &locals)?;
                let k = (site - 1) as usize;
                let w = |b: &ModelBundle| -> Result<i32, HarnessError> {
                    let ops = b.pseudogenerators.as_ref().expect("z2 has pseudogenerators");
                    round_label(psi.expectation(&ops[k]).re)
                };
                rows.push(EigenvalueRow {
                    occupation: n,
                    tau_left: tl,
                    tau_right: tr,
                    g: round_label(psi.expectation(&plus.generators[k]).re)?,
                    w_minus: w(&minus)?,
                    w_plus: w(&plus)?,
                });
            }
        }
    }
    Ok(rows)
}

fn sector_table(bundle: &ModelBundle, z: InitialStatePreset, x: InitialStatePreset) -> Result<Vec<SectorRow>, HarnessError> {
    let rho_z = build_initial_state(bundle, &z)?.to_density();
    let rho_x = build_initial_state(bundle, &x)?.to_density();
    let mut rows = Vec::new();
    for s in sector_projectors(bundle)? {
        let (wz, wx) = (s.weight(rho_z.matrix()), s.weight(rho_x.matrix()));
        if wz.abs() > 1e-12 || wx.abs() > 1e-12 {
            rows.push(SectorRow {
                labels: s.labels,
                rho_z: wz,
                rho_x: wx,
            });
        }
    }
    Ok(rows)
}

/// Sectors populated by the U(1) domain-wall states at L = 4.
pub fn u1_sector_table() -> Result<Vec<SectorRow>, HarnessError> {
    let b = build_u1_qlm(&U1Params::default())?;
    sector_table(&b, InitialStatePreset::U1DomainWallZ, InitialStatePreset::U1DomainWallX)
}

/// Sectors populated by the Z₂ domain-wall states at L = 4.
pub fn z2_sector_table() -> Result<Vec<SectorRow>, HarnessError> {
    let b = z2_bundle(1)?;
    sector_table(&b, InitialStatePreset::Z2DomainWallZ, InitialStatePreset::Z2DomainWallX)
}

fn signed(x: i32) -> String {
    if x > 0 {
        format!("+{x}")
    } else {
        x.to_string()
    }
}

fn labels(l: &[i32]) -> String {
    format!("({})", l.iter().map(|&g| signed(g)).collect::<Vec<_>>().join(","))
}

pub fn render_all() -> Result<String, HarnessError> {
    let mut out = String::new();
    out.push_str("# Z2 generator and pseudogenerator eigenvalues\n");
    out.push_str("n_j  tau_x(j-1,j)  tau_x(j,j+1)  G_j  W_j(g=-1)  W_j(g=+1)\n");
    for r in z2_eigenvalue_table()? {
        out.push_str(&format!(
            "{:>3}  {:>12}  {:>12}  {:>3}  {:>9}  {:>9}\n",
            r.occupation,
            signed(r.tau_left),
            signed(r.tau_right),
            signed(r.g),
            signed(r.w_minus),
            signed(r.w_plus)
        ));
    }
    for (title, rows, z_first) in [
        ("U(1) sector weights", u1_sector_table()?, true),
        ("Z2 sector weights", z2_sector_table()?, false),
    ] {
        out.push_str(&format!("\n# {title}\n"));
        let (c1, c2) = if z_first { ("rho_z", "rho_x") } else { ("rho_x", "rho_z") };
        out.push_str(&format!("{:<16}  {:>7}  {:>7}\n", "sector", c1, c2));
        for r in rows {
            let (a, b) = if z_first { (r.rho_z, r.rho_x) } else { (r.rho_x, r.rho_z) };
            out.push_str(&format!("{:<16}  {:>7.4}  {:>7.4}\n", labels(&r.labels), a, b));
        }
    }
    Ok(out)
}
