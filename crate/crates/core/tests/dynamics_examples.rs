use neass_core::dynamics::{
    heisenberg, lr_commutator_scan, propagate, propagate_fixed, volume_convergence, HamiltonianFamily, Integrator,
    PropagationOptions, Schedule,
};
use neass_core::fock::{self, FockSpace, LocalOperator, RandomKind};
use neass_core::interactions::Interaction;
use neass_core::lattice::{Geometry, Lattice, SiteSet};
use neass_core::linalg::{self, c64, CMat};
use neass_core::models;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chain(side: usize) -> (Lattice, FockSpace, Interaction) {
    let lat = Lattice::new(1, side, Geometry::Open, 1).unwrap();
    let space = FockSpace::full(side).unwrap();
    let h = models::hopping(&lat, 1, c64::new(-1.0, 0.0))
        .unwrap()
        .add_scaled(linalg::ONE, &models::staggered(&lat, 0.8).unwrap())
        .unwrap();
    (lat, space, h)
}

fn exact(h: &CMat, tau: f64) -> CMat {
    linalg::eigh(h).apply_fn(|e| c64::cis(-e * tau))
}

#[test]
fn zero_hamiltonian_gives_the_identity() {
    let (lat, space, _) = chain(4);
    let mut fam = HamiltonianFamily::new(&lat, &space, 0.0, 0.5).unwrap();
    fam.add_unperturbed("zero", &Interaction::new(&lat), Schedule::ramp(0.0, 1.0, 0.0, 1.0)).unwrap();
    let p = propagate(&fam, 0.0, 1.0, &PropagationOptions::default()).unwrap();
    assert!(linalg::max_abs(&(&p.unitary - &linalg::identity(space.dim()))) <= 1e-14);
}

#[test]
fn constant_hamiltonian_matches_the_eigendecomposition() {
    let (lat, space, h) = chain(5);
    let hm = h.assemble(&space).unwrap();
    // Constant on [1, 2] but not flagged static, so the stepping path runs.
    let mut fam = HamiltonianFamily::new(&lat, &space, 0.0, 0.7).unwrap();
    fam.add_unperturbed("h", &h, Schedule::ramp(0.0, 1.0, 0.0, 0.5)).unwrap();
    assert!(!fam.is_static());
    for opts in [PropagationOptions::default(), PropagationOptions::magnus4()] {
        let p = propagate(&fam, 1.0, 2.0, &opts).unwrap();
        assert!(linalg::max_abs(&(&p.unitary - &exact(&hm, 1.0 / 0.7))) <= 1e-10);
    }
    let mut st = HamiltonianFamily::new(&lat, &space, 0.0, 0.7).unwrap();
    st.add_unperturbed("h", &h, Schedule::constant(1.0)).unwrap();
    let p = propagate(&st, 0.0, 1.3, &PropagationOptions::default()).unwrap();
    assert!(linalg::max_abs(&(&p.unitary - &exact(&hm, 1.3 / 0.7))) <= 1e-10);
    // A = 1 and A = H are conserved.
    let id = linalg::identity(space.dim());
    assert!(linalg::max_abs(&(&p.heisenberg(&id) - &id)) <= 1e-12);
    assert!(linalg::max_abs(&(&p.heisenberg(&hm) - &hm)) <= 1e-10);
}

fn ramped(side: usize, eta: f64) -> HamiltonianFamily {
    let (lat, space, h) = chain(side);
    let mut fam = HamiltonianFamily::new(&lat, &space, 0.3, eta).unwrap();
    fam.add_unperturbed("hop", &models::hopping(&lat, 1, c64::new(-1.0, 0.0)).unwrap(), Schedule::constant(1.0))
        .unwrap();
    fam.add_unperturbed("stag", &models::staggered(&lat, 1.0).unwrap(), Schedule::ramp(0.5, 1.5, 0.0, 1.0))
        .unwrap();
    fam.add_perturbation("h", &h, Schedule::ramp(0.0, 1.0, 0.2, 0.8)).unwrap();
    fam
}

#[test]
fn propagators_compose() {
    let fam = ramped(5, 0.5);
    let opts = PropagationOptions {
        tol: 1e-11,
        ..PropagationOptions::magnus4()
    };
    let u = |a: f64, b: f64| propagate(&fam, a, b, &opts).unwrap().unitary;
    let whole = u(0.0, 1.0);
    let split = linalg::mul(&u(0.4, 1.0), &u(0.0, 0.4));
    assert!(linalg::max_abs(&(&whole - &split)) <= 1e-10);
    assert!(linalg::unitarity_defect(&whole) <= 1e-10);
}

#[test]
fn midpoint_error_quarters_when_steps_double() {
    let fam = ramped(4, 0.5);
    let reference = propagate_fixed(&fam, 0.0, 1.0, 4096, Integrator::Magnus4).unwrap();
    let err = |n: usize| {
        linalg::max_abs(&(&propagate_fixed(&fam, 0.0, 1.0, n, Integrator::Midpoint).unwrap() - &reference))
    };
    let (e1, e2, e3) = (err(64), err(128), err(256));
    for r in [e1 / e2, e2 / e3] {
        assert!((r - 4.0).abs() < 0.2, "ratio {r}");
    }
}

#[test]
fn heisenberg_fixes_the_identity_for_ramped_families() {
    let fam = ramped(4, 0.5);
    let id = linalg::identity(fam.dim());
    let at = heisenberg(&fam, &id, 0.0, 1.0, &PropagationOptions::magnus4()).unwrap();
    assert!(linalg::max_abs(&(&at - &id)) <= 1e-12);
}

#[test]
fn commutator_scan_at_the_initial_time() {
    let fam = ramped(6, 1.0);
    let lat = fam.lattice().clone();
    let space = fam.space().clone();
    let n = |x: usize| fock::number_operator(&space, &[lat.mode(x, 0)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a_local = fock::random_hermitian_local(vec![1, 2], RandomKind::Even, &mut rng).unwrap();
    let a = fock::embed(&a_local, &space).unwrap();
    let x: SiteSet = [1, 2].into();
    let hop = fock::embed(
        &LocalOperator::build(vec![2, 3], |l| {
            let m = linalg::mul(&fock::creation(l, 0)?, &fock::annihilation(l, 1)?);
            Ok(&m + &linalg::adjoint(&m))
        })
        .unwrap(),
        &space,
    )
    .unwrap();
    let probes: Vec<(SiteSet, CMat)> = vec![([4].into(), n(4)), ([5].into(), n(5)), ([2, 3].into(), hop.clone())];
    let rows = lr_commutator_scan(&fam, &a, &x, &probes, 0.0, &[0.0], &PropagationOptions::default()).unwrap();
    assert_eq!(rows[0].commutator_norm, 0.0);
    assert_eq!(rows[1].commutator_norm, 0.0);
    let want = fock::op_norm(&linalg::commutator(&a, &hop));
    assert!(want > 0.1 && (rows[2].commutator_norm - want).abs() <= 1e-12);
    assert_eq!(rows[2].dist, 0);
    assert_eq!(rows[1].dist, 3);
}

fn build(side: usize) -> neass_core::Result<HamiltonianFamily> {
    let lat = Lattice::new(1, side, Geometry::Open, 1)?;
    let space = FockSpace::full(side)?;
    let mut fam = HamiltonianFamily::new(&lat, &space, 0.0, 1.0)?;
    fam.add_unperturbed("hop", &models::hopping(&lat, 1, c64::new(-1.0, 0.0))?, Schedule::constant(1.0))?;
    Ok(fam)
}

#[test]
fn volume_differences_vanish_at_the_initial_time() {
    let n0 = fock::number_operator(&FockSpace::full(1).unwrap(), &[0]).unwrap();
    let rep = volume_convergence(&build, &[vec![0]], &n0, &[3, 5, 7], 0.0, 0.0, &PropagationOptions::default())
        .unwrap();
    assert!(rep.rows.iter().all(|r| r.diff_norm <= 1e-14));
}

#[test]
fn observable_at_the_edge_feels_the_volume() {
    // On Λ_3 the site 1 is the edge; growing the box adds a neighbour at once.
    let n = fock::number_operator(&FockSpace::full(1).unwrap(), &[0]).unwrap();
    let opts = PropagationOptions::default();
    let edge = volume_convergence(&build, &[vec![1]], &n, &[3, 5], 0.0, 1.0, &opts).unwrap();
    assert!(edge.rows[0].diff_norm > 0.1, "{:?}", edge.rows);
    let bulk = volume_convergence(&build, &[vec![0]], &n, &[5, 7], 0.0, 1.0, &opts).unwrap();
    assert!(bulk.rows[0].diff_norm < edge.rows[0].diff_norm);
    assert!(bulk.rows[0].boundary_dist > edge.rows[0].boundary_dist);
}

#[test]
fn heisenberg_evolution_is_a_star_automorphism() {
    let fam = ramped(5, 0.5);
    let p = propagate(&fam, 0.0, 1.0, &PropagationOptions::magnus4()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..4 {
        let a = fock::embed(&fock::random_hermitian_local(vec![0, 1], RandomKind::Even, &mut rng).unwrap(), fam.space())
            .unwrap();
        let b = fock::embed(&fock::random_hermitian_local(vec![1, 3], RandomKind::Even, &mut rng).unwrap(), fam.space())
            .unwrap();
        let lhs = p.heisenberg(&linalg::mul(&a, &b));
        let rhs = linalg::mul(&p.heisenberg(&a), &p.heisenberg(&b));
        assert!(linalg::max_abs(&(&lhs - &rhs)) <= 1e-10);
        assert!((fock::op_norm(&p.heisenberg(&a)) - fock::op_norm(&a)).abs() <= 1e-10);
    }
}

#[test]
fn energy_is_conserved_for_static_hamiltonians() {
    let (lat, space, h) = chain(5);
    let mut fam = HamiltonianFamily::new(&lat, &space, 0.4, 0.3).unwrap();
    fam.add_unperturbed("h", &h, Schedule::constant(1.0)).unwrap();
    fam.add_perturbation("v", &models::onsite(&lat, |c| 0.3 * c[0] as f64).unwrap(), Schedule::constant(1.0))
        .unwrap();
    let hm = fam.hamiltonian(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let psi = linalg::random_hermitian(space.dim(), &mut rng);
    let psi: Vec<c64> = (0..space.dim()).map(|i| psi[(i, 0)]).collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let psi: Vec<c64> = psi.iter().map(|z| z / norm).collect();
    let e0 = linalg::expectation(&hm, &psi).re;
    for t in [0.3, 1.0, 2.5] {
        let ht = heisenberg(&fam, &hm, 0.0, t, &PropagationOptions::default()).unwrap();
        assert!((linalg::expectation(&ht, &psi).re - e0).abs() <= 1e-9);
    }
}

#[test]
fn deep_bulk_differences_are_tiny_at_short_times() {
    let n = fock::number_operator(&FockSpace::full(1).unwrap(), &[0]).unwrap();
    let rep = volume_convergence(&build, &[vec![0]], &n, &[9, 11], 0.0, 0.05, &PropagationOptions::default()).unwrap();
    assert!(rep.rows[0].diff_norm <= 1e-8, "{:?}", rep.rows);
}
