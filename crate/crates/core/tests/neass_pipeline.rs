use std::time::Instant;

use neass_core::dynamics::{HamiltonianFamily, PropagationOptions, Schedule};
use neass_core::fock::{self, FockSpace};
use neass_core::interactions::LipschitzPotential;
use neass_core::lattice::{Geometry, Lattice};
use neass_core::liouvillian::{SpectralFrame, WeightFunction, WeightParams};
use neass_core::linalg::{self, c64};
use neass_core::models;
use neass_core::neass::{self, BundleOptions};

fn torus_family(side: usize, eps: f64, eta: f64, with_v: bool) -> HamiltonianFamily {
    let lat = Lattice::new(1, side, Geometry::Torus, 1).unwrap();
    let space = FockSpace::for_lattice(&lat, Some(side / 2)).unwrap();
    let mut fam = HamiltonianFamily::new(&lat, &space, eps, eta).unwrap();
    fam.add_unperturbed("hopping", &models::hopping(&lat, 1, c64::new(-1.0, 0.0)).unwrap(), Schedule::constant(1.0))
        .unwrap();
    fam.add_unperturbed("staggered", &models::staggered(&lat, 1.0).unwrap(), Schedule::ramp(1.0, 2.0, 0.0, 1.0))
        .unwrap();
    if with_v {
        let l = side as f64;
        let v = LipschitzPotential::from_fn(move |c| (2.0 * std::f64::consts::PI * c[0] as f64 / l).cos());
        fam.add_potential("cosine", &v, Schedule::constant(1.0)).unwrap();
    }
    fam
}

fn weight() -> WeightFunction {
    WeightFunction::build(WeightParams::new(1.0)).unwrap()
}

#[test]
fn first_order_bundle_is_the_closed_form_a1() {
    let w = weight();
    let fam = torus_family(6, 0.1, 0.05, true);
    let t = 0.4;
    let b = neass::build_bundle(&fam, 1, t, &w, &BundleOptions::default()).unwrap();
    let frame = SpectralFrame::new(&fam.h0(t)).unwrap();
    let a1 = neass::build_a1(&frame, &fam.perturbation(t), &fam.h0_dot(t), &w, 0.5);
    assert!(linalg::max_abs(&(&b.a(1).unwrap() - &a1)) < 1e-10);
    assert!(linalg::hermiticity_defect(&a1) < 1e-10);
}

#[test]
fn second_order_split_holds_as_matrices() {
    let w = weight();
    let fam = torus_family(6, 0.1, 0.1, true);
    let b = neass::build_bundle(&fam, 2, 0.5, &w, &BundleOptions::default()).unwrap();
    for r in &b.split_residuals {
        assert!(*r <= 1e-8, "{r}");
    }
    // Off-diagonal blocks of the order-j generator are leakage-suppressed.
    for r in &b.block_residuals {
        assert!(*r <= 1e-6, "{r}");
    }
    assert!(b.summary().hermiticity_defect < 1e-9);
    assert!(b.summary().dressing_unitarity_defect < 1e-10);
}

#[test]
fn stationary_unperturbed_bundle_is_the_ground_state() {
    let w = weight();
    let fam = torus_family(6, 0.0, 0.1, false);
    let b = neass::build_bundle(&fam, 3, 0.0, &w, &BundleOptions::default()).unwrap();
    let rho0 = linalg::projector(&b.ground.vector);
    assert!(linalg::max_abs(&(&b.density() - &rho0)) <= 1e-10);
    let n0 = fock::site_number(fam.space(), fam.lattice(), &[2].into()).unwrap();
    let d = neass::adiabatic_defect(&fam, &n0, 2, 0.0, 0.0, &w, &BundleOptions::default(), &PropagationOptions::default())
        .unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn second_order_beats_first_order_on_the_torus() {
    let w = weight();
    let start = Instant::now();
    let fam = torus_family(8, 0.1, 0.1, true);
    let n0 = fock::site_number(fam.space(), fam.lattice(), &[3].into()).unwrap();
    let opts = PropagationOptions::magnus4();
    let d1 = neass::adiabatic_defects(&fam, &[n0.clone()], 1, 0.0, 1.0, &w, &BundleOptions::default(), &opts).unwrap();
    let d2 = neass::adiabatic_defects(&fam, &[n0], 2, 0.0, 1.0, &w, &BundleOptions::default(), &opts).unwrap();
    eprintln!("{:?} {:?} {:?} {:?}", d1.defects, d2.defects, d2.steps, start.elapsed());
    assert!(d2.defects[0] < d1.defects[0]);
}
