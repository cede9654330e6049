//! Operators, families and observables assembled from a [`Config`].

use std::f64::consts::PI;

use neass_core::dynamics::{HamiltonianFamily, Schedule};
use neass_core::fock::{self, FockSpace};
use neass_core::interactions::Interaction;
use neass_core::lattice::{Lattice, SiteSet};
use neass_core::liouvillian::WeightFunction;
use neass_core::linalg::{self, c64, CMat};
use neass_core::models;

use crate::config::{Config, ObservableSpec, Term};
use crate::LabError;

pub fn lattice(cfg: &Config, side: usize) -> Result<Lattice, LabError> {
    let l = &cfg.lattice;
    Ok(Lattice::new(l.dim, side, l.geometry, l.spin)?)
}

pub fn space(cfg: &Config, lat: &Lattice) -> Result<FockSpace, LabError> {
    Ok(FockSpace::for_lattice(lat, cfg.lattice.particles)?)
}

fn axis_check(lat: &Lattice, axis: usize, what: &str) -> Result<(), LabError> {
    if axis >= lat.dim() {
        return Err(LabError::Invalid(format!("{what}: axis {axis} out of range for a {}-dimensional lattice", lat.dim())));
    }
    Ok(())
}

/// The interaction of a term, without its schedule.
pub fn term_interaction(term: &Term, lat: &Lattice) -> Result<Interaction, LabError> {
    let phi = match term {
        Term::Hopping { range, amplitude, .. } => {
            models::hopping(lat, *range, c64::new(amplitude.re(), amplitude.im()))?
        }
        Term::DimerizedHopping { axis, intra, inter, .. } => {
            axis_check(lat, *axis, "dimerized_hopping")?;
            models::dimerized_hopping(lat, *axis, intra.re(), inter.re())?
        }
        Term::Staggered { amplitude, .. } => models::staggered(lat, amplitude.re())?,
        Term::Onsite { site, amplitude, .. } => {
            if lat.index_of(site).is_none() {
                return Err(LabError::Invalid(format!("onsite: site {site:?} is not in the lattice")));
            }
            let (site, v) = (site.clone(), amplitude.re());
            models::onsite(lat, move |c| if c == site.as_slice() { v } else { 0.0 })?
        }
        Term::ChemicalPotential { mu, .. } => models::chemical_potential(lat, mu.re())?,
        Term::DensityDensity { range, strength, .. } => models::density_density(lat, *range, strength.re())?,
        Term::LinearField { axis, slope, offset, .. } => {
            axis_check(lat, *axis, "linear_field")?;
            let (a, s, o) = (*axis, *slope, *offset);
            models::onsite(lat, move |c| s * c[a] as f64 + o)?
        }
        Term::CosineField { axis, amplitude, wavelength, .. } => {
            axis_check(lat, *axis, "cosine_field")?;
            let (a, amp, wl) = (*axis, *amplitude, *wavelength);
            models::onsite(lat, move |c| amp * (2.0 * PI * c[a] as f64 / wl).cos())?
        }
    };
    Ok(phi)
}

/// `Σ_terms s(t) Φ_term` on `lat`.
pub fn interaction_at(terms: &[Term], lat: &Lattice, t: f64) -> Result<Interaction, LabError> {
    let mut acc = Interaction::new(lat);
    for term in terms {
        let s = term.schedule().value(t);
        acc = acc.add_scaled(c64::new(s, 0.0), &term_interaction(term, lat)?)?;
    }
    Ok(acc)
}

/// The family of the configuration on a box of the given side.
pub fn family(cfg: &Config, side: usize, epsilon: f64, eta: f64) -> Result<HamiltonianFamily, LabError> {
    let lat = lattice(cfg, side)?;
    let sp = space(cfg, &lat)?;
    family_on(cfg, &lat, &sp, epsilon, eta)
}

pub fn family_on(
    cfg: &Config,
    lat: &Lattice,
    sp: &FockSpace,
    epsilon: f64,
    eta: f64,
) -> Result<HamiltonianFamily, LabError> {
    let mut fam = HamiltonianFamily::new(lat, sp, epsilon, eta)?;
    for term in &cfg.model {
        fam.add_unperturbed(term.label(), &term_interaction(term, lat)?, term.schedule().clone())?;
    }
    for term in &cfg.perturbation {
        fam.add_perturbation(term.label(), &term_interaction(term, lat)?, term.schedule().clone())?;
    }
    Ok(fam)
}

/// Whether every model and perturbation schedule is constant.
pub fn is_static(cfg: &Config) -> bool {
    cfg.model.iter().chain(&cfg.perturbation).all(|t| matches!(t.schedule(), Schedule::Constant { .. }))
}

pub fn site_index(lat: &Lattice, c: &[i64]) -> Result<usize, LabError> {
    lat.index_of(c)
        .ok_or_else(|| LabError::Invalid(format!("site {c:?} is not in the lattice of side {}", lat.side())))
}

pub fn site_set(lat: &Lattice, coords: &[Vec<i64>]) -> Result<SiteSet, LabError> {
    coords.iter().map(|c| site_index(lat, c)).collect()
}

/// The observable on the whole Fock space.
pub fn observable(spec: &ObservableSpec, lat: &Lattice, sp: &FockSpace) -> Result<CMat, LabError> {
    match spec {
        ObservableSpec::SiteNumber { site } => {
            let x = site_index(lat, site)?;
            Ok(fock::site_number(sp, lat, &[x].into())?)
        }
        ObservableSpec::Bond { from, to } => {
            let (x, y) = (site_index(lat, from)?, site_index(lat, to)?);
            if x == y {
                return Err(LabError::Invalid("bond observable needs two distinct sites".into()));
            }
            let mut m = linalg::zeros(sp.dim());
            for i in 0..lat.spin() {
                let h = fock::hopping(sp, lat.mode(x, i), lat.mode(y, i))?;
                linalg::add_assign_scaled(&mut m, linalg::ONE, &h);
                linalg::add_assign_scaled(&mut m, linalg::ONE, &linalg::adjoint(&h));
            }
            Ok(m)
        }
    }
}

/// The same observable as a matrix on the full local space of its support.
pub fn local_observable(spec: &ObservableSpec, spin: usize) -> Result<CMat, LabError> {
    let sites = spec.sites();
    let lat = Lattice::new(1, sites.len(), neass_core::lattice::Geometry::Open, spin)?;
    let sp = FockSpace::full(lat.n_modes())?;
    // Local sites are laid out in the order of the global coordinates.
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|a, b| sites[*a].cmp(&sites[*b]));
    let local = |k: usize| lat.coords(order.iter().position(|o| *o == k).unwrap()).to_vec();
    let relabeled = match spec {
        ObservableSpec::SiteNumber { .. } => ObservableSpec::SiteNumber { site: local(0) },
        ObservableSpec::Bond { .. } => ObservableSpec::Bond { from: local(0), to: local(1) },
    };
    observable(&relabeled, &lat, &sp)
}

pub fn weight(cfg: &Config) -> Result<WeightFunction, LabError> {
    let spec = cfg
        .weight
        .as_ref()
        .ok_or_else(|| LabError::Invalid("weight: section required for this experiment".into()))?;
    Ok(WeightFunction::build(spec.params())?)
}
