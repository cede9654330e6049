//! Number-conserving lattice fermion models: hopping, on-site potentials and
//! density-density interactions, each acting identically on every internal
//! state of a site.

use crate::error::Result;
use crate::fock::{self, FockSpace};
use crate::interactions::Interaction;
use crate::lattice::Lattice;
use crate::linalg::{self, c64, CMat};

/// `Σ_σ (t a*_{x,σ} a_{y,σ} + t̄ a*_{y,σ} a_{x,σ})` on a two-site local space
/// ordered `(x, y)` if `x < y`.
fn bond_term(l: &FockSpace, spin: usize, x_first: bool, t: c64) -> Result<CMat> {
    let mut m = linalg::zeros(l.dim());
    for s in 0..spin {
        let (px, py) = if x_first { (s, spin + s) } else { (spin + s, s) };
        let h = fock::hopping(l, px, py)?;
        linalg::add_assign_scaled(&mut m, t, &h);
        linalg::add_assign_scaled(&mut m, t.conj(), &linalg::adjoint(&h));
    }
    Ok(m)
}

/// Hopping between `x` and `x + range·e_i` for all axes with amplitude `t`
/// on `a*_x a_{x+range e_i}` (plus its adjoint).
pub fn hopping(lat: &Lattice, range: usize, t: c64) -> Result<Interaction> {
    let mut phi = Interaction::new(lat);
    for (x, y) in lat.bonds(range) {
        phi.insert_with([x, y].into(), |l| bond_term(l, lat.spin(), x < y, t))?;
    }
    Ok(phi)
}

/// Nearest-neighbour hopping along `axis` alternating between `intra`
/// (bonds starting on an even offset from the box corner) and `inter`.
pub fn dimerized_hopping(lat: &Lattice, axis: usize, intra: f64, inter: f64) -> Result<Interaction> {
    let mut phi = Interaction::new(lat);
    let lo = lat.coords(0)[axis];
    for x in lat.sites() {
        if let Some(y) = lat.shift(x, axis, 1) {
            if x == y {
                continue;
            }
            let t = if (lat.coords(x)[axis] - lo) % 2 == 0 { intra } else { inter };
            phi.insert_with([x, y].into(), |l| bond_term(l, lat.spin(), x < y, c64::new(t, 0.0)))?;
        }
    }
    Ok(phi)
}

/// `Σ_x v(x) n_x`.
pub fn onsite(lat: &Lattice, v: impl Fn(&[i64]) -> f64) -> Result<Interaction> {
    let mut phi = Interaction::new(lat);
    let modes: Vec<usize> = (0..lat.spin()).collect();
    for x in lat.sites() {
        let val = v(lat.coords(x));
        if val != 0.0 {
            phi.insert_with([x].into(), |l| {
                Ok(linalg::scale_re(&fock::number_operator(l, &modes)?, val))
            })?;
        }
    }
    Ok(phi)
}

/// `μ_s Σ_x (-1)^{x_1+…+x_d} n_x`.
pub fn staggered(lat: &Lattice, amplitude: f64) -> Result<Interaction> {
    onsite(lat, |c| {
        if c.iter().sum::<i64>().rem_euclid(2) == 0 {
            amplitude
        } else {
            -amplitude
        }
    })
}

/// `−μ N`.
pub fn chemical_potential(lat: &Lattice, mu: f64) -> Result<Interaction> {
    onsite(lat, |_| -mu)
}

/// `w Σ_{{x,y}: d(x,y) = range} n_x n_y`, one term per unordered pair.
pub fn density_density(lat: &Lattice, range: usize, w: f64) -> Result<Interaction> {
    let mut phi = Interaction::new(lat);
    let r = lat.spin();
    for x in lat.sites() {
        for y in (x + 1)..lat.n_sites() {
            if lat.dist(x, y) == range {
                phi.insert_with([x, y].into(), |l| {
                    let nx = fock::number_operator(l, &(0..r).collect::<Vec<_>>())?;
                    let ny = fock::number_operator(l, &(r..2 * r).collect::<Vec<_>>())?;
                    Ok(linalg::scale_re(&linalg::mul(&nx, &ny), w))
                })?;
            }
        }
    }
    Ok(phi)
}

/// Single-particle hopping matrix `h_{xy}` with `H = Σ h_{xy} a*_x a_y`
/// (spinless), used as an independent oracle for the many-body assembly.
pub fn one_body_matrix(lat: &Lattice, range: usize, t: c64, v: impl Fn(&[i64]) -> f64) -> CMat {
    let n = lat.n_sites();
    let mut h = linalg::zeros(n);
    for (x, y) in lat.bonds(range) {
        h[(x, y)] += t;
        h[(y, x)] += t.conj();
    }
    for x in lat.sites() {
        h[(x, x)] += c64::new(v(lat.coords(x)), 0.0);
    }
    h
}
