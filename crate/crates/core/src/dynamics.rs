//! Time-dependent Hamiltonians `H^ε(t) = H_0(t) + ε(V(t) + H_1(t))` on a
//! fixed Fock space, their propagators for `i dU/dt = η^{-1} H^ε(t) U`, and
//! Lieb-Robinson / volume-convergence diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, FockSpace, LocalOperator};
use crate::interactions::{interaction_norm, FFunction, Interaction, LipschitzPotential, WeightProfile};
use crate::lattice::{Lattice, SiteSet};
use crate::linalg::{self, c64, CMat, SparseMat};
use crate::quasilocality::least_squares_slope;

/// `f(τ) = ψ(τ)/(ψ(τ) + ψ(1−τ))` with `ψ(τ) = e^{−1/τ}`; every derivative
/// vanishes at both ends.
pub fn smooth_switch(tau: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else if tau >= 1.0 {
        1.0
    } else {
        let (p, q) = ((-1.0 / tau).exp(), (-1.0 / (1.0 - tau)).exp());
        p / (p + q)
    }
}

pub fn smooth_switch_derivative(tau: f64) -> f64 {
    if tau <= 0.0 || tau >= 1.0 {
        return 0.0;
    }
    let (p, q) = ((-1.0 / tau).exp(), (-1.0 / (1.0 - tau)).exp());
    let (dp, dq) = (p / (tau * tau), q / ((1.0 - tau) * (1.0 - tau)));
    (dp * q + p * dq) / (p + q).powi(2)
}

/// Scalar time profile multiplying a channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant { value: f64 },
    /// `from + (to − from) f((t − start)/(end − start))` with the smooth switch `f`.
    SmoothRamp { from: f64, to: f64, start: f64, end: f64 },
    Linear { offset: f64, slope: f64 },
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { value }
    }

    pub fn ramp(from: f64, to: f64, start: f64, end: f64) -> Self {
        Schedule::SmoothRamp { from, to, start, end }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::SmoothRamp { start, end, .. } if !(end > start) => {
                Err(Error::domain(format!("ramp needs end > start, got [{start}, {end}]")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Schedule::Constant { value } => value,
            Schedule::SmoothRamp { from, to, start, end } => {
                from + (to - from) * smooth_switch((t - start) / (end - start))
            }
            Schedule::Linear { offset, slope } => offset + slope * t,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Schedule::Constant { .. } => 0.0,
            Schedule::SmoothRamp { from, to, start, end } => {
                (to - from) * smooth_switch_derivative((t - start) / (end - start)) / (end - start)
            }
            Schedule::Linear { slope, .. } => slope,
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            Schedule::Constant { .. } => true,
            Schedule::SmoothRamp { from, to, .. } => from == to,
            Schedule::Linear { slope, .. } => *slope == 0.0,
        }
    }
}

/// A fixed operator with a scalar time profile.
#[derive(Clone, Debug)]
pub struct Channel {
    pub label: String,
    pub matrix: CMat,
    pub sparse: SparseMat,
    pub schedule: Schedule,
}

/// `H^ε(t) = Σ_c s_c(t) H_c + ε Σ_p s_p(t) P_p` on one Fock space, generating
/// dynamics through `η^{-1} H^ε(t)`.
#[derive(Clone, Debug)]
pub struct HamiltonianFamily {
    lattice: Lattice,
    space: FockSpace,
    unperturbed: Vec<Channel>,
    perturbation: Vec<Channel>,
    pub epsilon: f64,
    pub eta: f64,
}

impl HamiltonianFamily {
    pub fn new(lattice: &Lattice, space: &FockSpace, epsilon: f64, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) || !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::domain(format!(
                "need ε ∈ [0, 1] and η ∈ (0, 1], got ε = {epsilon}, η = {eta}"
            )));
        }
        if space.n_modes() != lattice.n_modes() {
            return Err(Error::domain("Fock space does not match the lattice"));
        }
        Ok(HamiltonianFamily {
            lattice: lattice.clone(),
            space: space.clone(),
            unperturbed: Vec::new(),
            perturbation: Vec::new(),
            epsilon,
            eta,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    fn channel(&self, label: &str, phi: &Interaction, schedule: Schedule) -> Result<Channel> {
        schedule.validate()?;
        if phi.lattice() != &self.lattice {
            return Err(Error::domain(format!("channel '{label}' lives on a different lattice")));
        }
        if !phi.is_hermitian(1e-12) {
            let m = phi.assemble(&self.space)?;
            return Err(Error::NotHermitian {
                defect: linalg::hermiticity_defect(&m),
            });
        }
        let matrix = phi.assemble(&self.space)?;
        Ok(Channel {
            label: label.to_string(),
            sparse: SparseMat::from_dense(&matrix),
            matrix,
            schedule,
        })
    }

    /// Adds `s(t) Φ` to `H_0`.
    pub fn add_unperturbed(&mut self, label: &str, phi: &Interaction, schedule: Schedule) -> Result<&mut Self> {
        let c = self.channel(label, phi, schedule)?;
        self.unperturbed.push(c);
        Ok(self)
    }

    /// Adds `s(t) Φ` to the perturbation `V + H_1` (multiplied by ε).
    pub fn add_perturbation(&mut self, label: &str, phi: &Interaction, schedule: Schedule) -> Result<&mut Self> {
        let c = self.channel(label, phi, schedule)?;
        self.perturbation.push(c);
        Ok(self)
    }

    /// Adds the potential `s(t) V_v` to the perturbation.
    pub fn add_potential(&mut self, label: &str, v: &LipschitzPotential, schedule: Schedule) -> Result<&mut Self> {
        let phi = v.interaction(&self.lattice)?;
        self.add_perturbation(label, &phi, schedule)
    }

    pub fn with_parameters(&self, epsilon: f64, eta: f64) -> Result<Self> {
        let mut f = HamiltonianFamily::new(&self.lattice, &self.space, epsilon, eta)?;
        f.unperturbed = self.unperturbed.clone();
        f.perturbation = self.perturbation.clone();
        Ok(f)
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.unperturbed.iter().chain(&self.perturbation)
    }

    pub fn is_static(&self) -> bool {
        self.channels().all(|c| c.schedule.is_static())
    }

    fn sum(channels: &[Channel], dim: usize, coeff: impl Fn(&Schedule) -> f64) -> CMat {
        let mut m = linalg::zeros(dim);
        for c in channels {
            let s = coeff(&c.schedule);
            if s != 0.0 {
                linalg::add_assign_scaled(&mut m, c64::new(s, 0.0), &c.matrix);
            }
        }
        m
    }

    pub fn h0(&self, t: f64) -> CMat {
        Self::sum(&self.unperturbed, self.dim(), |s| s.value(t))
    }

    pub fn h0_dot(&self, t: f64) -> CMat {
        Self::sum(&self.unperturbed, self.dim(), |s| s.derivative(t))
    }

    /// `V(t) + H_1(t)`, without the factor ε.
    pub fn perturbation(&self, t: f64) -> CMat {
        Self::sum(&self.perturbation, self.dim(), |s| s.value(t))
    }

    /// `H^ε(t)`.
    pub fn hamiltonian(&self, t: f64) -> CMat {
        let mut h = self.h0(t);
        if self.epsilon != 0.0 {
            linalg::add_assign_scaled(&mut h, c64::new(self.epsilon, 0.0), &self.perturbation(t));
        }
        h
    }

    /// `y += H^ε(t) x` through the sparse channels.
    pub fn apply(&self, t: f64, x: &[c64], y: &mut [c64]) {
        self.apply_scaled(t, 1.0, x, y)
    }

    /// `y += c H^ε(t) x`.
    pub fn apply_scaled(&self, t: f64, scale: f64, x: &[c64], y: &mut [c64]) {
        for c in &self.unperturbed {
            let s = scale * c.schedule.value(t);
            if s != 0.0 {
                c.sparse.apply_add(c64::new(s, 0.0), x, y);
            }
        }
        if self.epsilon != 0.0 {
            for c in &self.perturbation {
                let s = scale * self.epsilon * c.schedule.value(t);
                if s != 0.0 {
                    c.sparse.apply_add(c64::new(s, 0.0), x, y);
                }
            }
        }
    }
}

/// Exponential integrators built from frozen Hamiltonians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `exp(−i dt H(t + dt/2)/η)`, second order.
    Midpoint,
    /// Commutator-free fourth-order Magnus scheme with two exponentials per
    /// step at the Gauss-Legendre nodes.
    Magnus4,
}

impl Integrator {
    pub fn order(self) -> i32 {
        match self {
            Integrator::Midpoint => 2,
            Integrator::Magnus4 => 4,
        }
    }

    /// Stages of the step `[t, t + dt]` in the order they act; each stage is
    /// `exp(−i dt Σ_i c_i H(t_i)/η)` given as `(t_i, c_i)` pairs.
    fn stages(self, t: f64, dt: f64) -> Vec<[(f64, f64); 2]> {
        match self {
            Integrator::Midpoint => vec![[(t + 0.5 * dt, 1.0), (t, 0.0)]],
            Integrator::Magnus4 => {
                let r = 3f64.sqrt();
                let (t1, t2) = (t + (0.5 - r / 6.0) * dt, t + (0.5 + r / 6.0) * dt);
                let (a1, a2) = ((3.0 - 2.0 * r) / 12.0, (3.0 + 2.0 * r) / 12.0);
                vec![[(t1, a2), (t2, a1)], [(t1, a1), (t2, a2)]]
            }
        }
    }
}

/// Step control for the exponential integrators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationOptions {
    pub integrator: Integrator,
    /// Initial steps per unit of rescaled time `(t − t0)/η`.
    pub steps_per_unit: f64,
    pub min_steps: usize,
    /// Accepted max-abs disagreement between `N` and `2N` steps.
    pub tol: f64,
    pub max_doublings: u32,
    /// Above this dimension vectors are propagated with Lanczos instead of
    /// dense per-step eigendecompositions.
    pub dense_limit: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            integrator: Integrator::Midpoint,
            steps_per_unit: 200.0,
            min_steps: 4,
            tol: 1e-9,
            max_doublings: 8,
            dense_limit: 64,
        }
    }
}

impl PropagationOptions {
    pub fn with_steps(steps: usize) -> Self {
        PropagationOptions {
            steps_per_unit: 0.0,
            min_steps: steps.max(1),
            ..Default::default()
        }
    }

    /// Fourth-order stepping, starting from 20 steps per unit rescaled time.
    pub fn magnus4() -> Self {
        PropagationOptions {
            integrator: Integrator::Magnus4,
            steps_per_unit: 20.0,
            ..Default::default()
        }
    }

    fn initial_steps(&self, t0: f64, t: f64, eta: f64) -> usize {
        ((self.steps_per_unit * (t - t0).abs() / eta).ceil() as usize).max(self.min_steps).max(1)
    }
}

/// One step-doubling comparison: `‖X_{2N} − X_N‖_max` at `N = steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub steps: usize,
    pub defect: f64,
}

#[derive(Clone, Debug)]
pub struct Propagator {
    pub unitary: CMat,
    pub t0: f64,
    pub t: f64,
    pub steps: usize,
    pub log: Vec<StepRecord>,
}

impl Propagator {
    /// `U* A U`.
    pub fn heisenberg(&self, a: &CMat) -> CMat {
        linalg::mul3(&linalg::adjoint(&self.unitary), a, &self.unitary)
    }

    pub fn unitarity_defect(&self) -> f64 {
        linalg::unitarity_defect(&self.unitary)
    }
}

fn stage_hamiltonian(fam: &HamiltonianFamily, stage: &[(f64, f64); 2]) -> Result<CMat> {
    let mut h = linalg::zeros(fam.dim());
    for &(t, c) in stage {
        if c != 0.0 {
            linalg::add_assign_scaled(&mut h, c64::new(c, 0.0), &fam.hamiltonian(t));
        }
    }
    checked(h)
}

/// Product of `steps` integrator steps from `t0` to `t`.
pub fn propagate_fixed(fam: &HamiltonianFamily, t0: f64, t: f64, steps: usize, integrator: Integrator) -> Result<CMat> {
    let steps = steps.max(1);
    let dim = fam.dim();
    if t == t0 {
        return Ok(linalg::identity(dim));
    }
    if fam.is_static() {
        return Ok(linalg::expm_i_hermitian(&checked(fam.hamiltonian(t0))?, (t - t0) / fam.eta));
    }
    let dt = (t - t0) / steps as f64;
    let mut u = linalg::identity(dim);
    for k in 0..steps {
        for stage in integrator.stages(t0 + k as f64 * dt, dt) {
            let h = stage_hamiltonian(fam, &stage)?;
            u = linalg::mul(&linalg::expm_i_hermitian(&h, dt / fam.eta), &u);
        }
    }
    Ok(u)
}

fn checked(h: CMat) -> Result<CMat> {
    let defect = linalg::hermiticity_defect(&h);
    if defect > 1e-10 * linalg::max_abs(&h).max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    Ok(h)
}

fn not_converged(what: &str, opts: &PropagationOptions, log: &[StepRecord]) -> Error {
    Error::Convergence(format!(
        "{what} did not reach tolerance {:.1e} after {} doublings (last defect {:.3e})",
        opts.tol,
        opts.max_doublings,
        log.last().map(|r| r.defect).unwrap_or(f64::NAN)
    ))
}

/// Solves `i dU/dt = η^{-1} H^ε(t) U`, doubling the step count until two
/// successive results agree to `opts.tol`.
pub fn propagate(fam: &HamiltonianFamily, t0: f64, t: f64, opts: &PropagationOptions) -> Result<Propagator> {
    let mut steps = opts.initial_steps(t0, t, fam.eta);
    if fam.is_static() || t == t0 {
        return Ok(Propagator {
            unitary: propagate_fixed(fam, t0, t, steps, opts.integrator)?,
            t0,
            t,
            steps: 1,
            log: Vec::new(),
        });
    }
    let mut log = Vec::new();
    let mut coarse = propagate_fixed(fam, t0, t, steps, opts.integrator)?;
    for _ in 0..=opts.max_doublings {
        let fine = propagate_fixed(fam, t0, t, 2 * steps, opts.integrator)?;
        let defect = linalg::max_abs(&(&fine - &coarse));
        log.push(StepRecord { steps, defect });
        steps *= 2;
        if defect <= opts.tol {
            return Ok(Propagator {
                unitary: fine,
                t0,
                t,
                steps,
                log,
            });
        }
        coarse = fine;
    }
    Err(not_converged("propagator", opts, &log))
}

fn evolve_fixed(fam: &HamiltonianFamily, psi: &[c64], t0: f64, t: f64, steps: usize, opts: &PropagationOptions) -> Result<Vec<c64>> {
    let steps = steps.max(1);
    let dt = (t - t0) / steps as f64;
    let dense = fam.dim() <= opts.dense_limit;
    let mut v = psi.to_vec();
    for k in 0..steps {
        for stage in opts.integrator.stages(t0 + k as f64 * dt, dt) {
            if dense {
                let e = linalg::eigh(&stage_hamiltonian(fam, &stage)?);
                v = e.apply_fn_vec(&v, |x| c64::cis(-x * dt / fam.eta));
            } else {
                let apply = |x: &[c64], y: &mut [c64]| {
                    for &(ts, c) in &stage {
                        if c != 0.0 {
                            fam.apply_scaled(ts, c, x, y);
                        }
                    }
                };
                v = linalg::expm_krylov(&apply, &v, dt / fam.eta, 1e-13, 40);
            }
        }
    }
    Ok(v)
}

/// `U(t, t0) ψ` with the same step-doubling control as [`propagate`].
pub fn evolve_state(
    fam: &HamiltonianFamily,
    psi: &[c64],
    t0: f64,
    t: f64,
    opts: &PropagationOptions,
) -> Result<(Vec<c64>, Vec<StepRecord>)> {
    if psi.len() != fam.dim() {
        return Err(Error::domain("state dimension does not match the family"));
    }
    if t == t0 {
        return Ok((psi.to_vec(), Vec::new()));
    }
    if fam.is_static() {
        let e = linalg::eigh(&checked(fam.hamiltonian(t0))?);
        let tau = (t - t0) / fam.eta;
        return Ok((e.apply_fn_vec(psi, |x| c64::cis(-x * tau)), Vec::new()));
    }
    let mut steps = opts.initial_steps(t0, t, fam.eta);
    let mut log = Vec::new();
    let mut coarse = evolve_fixed(fam, psi, t0, t, steps, opts)?;
    for _ in 0..=opts.max_doublings {
        let fine = evolve_fixed(fam, psi, t0, t, 2 * steps, opts)?;
        let defect = fine
            .iter()
            .zip(&coarse)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        log.push(StepRecord { steps, defect });
        steps *= 2;
        if defect <= opts.tol {
            return Ok((fine, log));
        }
        coarse = fine;
    }
    Err(not_converged("state evolution", opts, &log))
}

/// `U(t, t0)* A U(t, t0)`.
pub fn heisenberg(fam: &HamiltonianFamily, a: &CMat, t0: f64, t: f64, opts: &PropagationOptions) -> Result<CMat> {
    Ok(propagate(fam, t0, t, opts)?.heisenberg(a))
}

/// One row of a Lieb-Robinson scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrRow {
    pub t: f64,
    pub dist: usize,
    pub commutator_norm: f64,
}

/// `‖[U_{t,t0}(A), B_y]‖` over a time grid and a list of probes `B_y`.
pub fn lr_commutator_scan(
    fam: &HamiltonianFamily,
    a: &CMat,
    x: &SiteSet,
    probes: &[(SiteSet, CMat)],
    t0: f64,
    ts: &[f64],
    opts: &PropagationOptions,
) -> Result<Vec<LrRow>> {
    let lat = fam.lattice();
    let dists: Vec<usize> = probes
        .iter()
        .map(|(y, _)| lat.set_distance(x, y).ok_or_else(|| Error::domain("empty support")))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut u = linalg::identity(fam.dim());
    let mut prev = t0;
    for &t in ts {
        if t < prev {
            return Err(Error::domain("time grid must be non-decreasing and start at or after t0"));
        }
        if t > prev {
            u = linalg::mul(&propagate(fam, prev, t, opts)?.unitary, &u);
            prev = t;
        }
        let at = linalg::mul3(&linalg::adjoint(&u), a, &u);
        for ((_, b), &d) in probes.iter().zip(&dists) {
            rows.push(LrRow {
                t,
                dist: d,
                commutator_norm: commutator_norm(&at, b),
            });
        }
    }
    Ok(rows)
}

// `i[A, B]` is Hermitian for Hermitian arguments, so its norm is a spectral radius.
fn commutator_norm(a: &CMat, b: &CMat) -> f64 {
    let c = linalg::scale(&linalg::commutator(a, b), linalg::I);
    if linalg::hermiticity_defect(&c) < 1e-12 {
        let ev = linalg::eigh_values(&linalg::hermitian_part(&c));
        ev.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        linalg::op_norm(&c)
    }
}

/// Elementwise maximum of scans over the same grid (e.g. over number sectors).
pub fn merge_scans(scans: &[Vec<LrRow>]) -> Result<Vec<LrRow>> {
    let Some(first) = scans.first() else {
        return Ok(Vec::new());
    };
    let mut out = first.clone();
    for s in &scans[1..] {
        if s.len() != out.len() {
            return Err(Error::domain("scans have different grids"));
        }
        for (o, r) in out.iter_mut().zip(s) {
            if o.t != r.t || o.dist != r.dist {
                return Err(Error::domain("scans have different grids"));
            }
            o.commutator_norm = o.commutator_norm.max(r.commutator_norm);
        }
    }
    Ok(out)
}

/// Front velocity in rescaled time `s = (t − t0)/η`: least-squares slope of
/// distance against the first time each distance reaches `threshold`
/// (linear interpolation between grid points). `None` with fewer than two
/// crossings.
pub fn fit_cone_velocity(rows: &[LrRow], threshold: f64, t0: f64, eta: f64) -> Option<f64> {
    let mut dists: Vec<usize> = rows.iter().map(|r| r.dist).collect();
    dists.sort_unstable();
    dists.dedup();
    let mut pts = Vec::new();
    for d in dists.into_iter().filter(|d| *d > 0) {
        let mut series: Vec<&LrRow> = rows.iter().filter(|r| r.dist == d).collect();
        series.sort_by(|a, b| a.t.total_cmp(&b.t));
        for w in series.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.commutator_norm < threshold && b.commutator_norm >= threshold {
                let frac = (threshold - a.commutator_norm) / (b.commutator_norm - a.commutator_norm);
                let tc = a.t + frac * (b.t - a.t);
                pts.push(((tc - t0) / eta, d as f64));
                break;
            }
        }
    }
    least_squares_slope(&pts)
}

/// `v_a = 2 a^{-1} C_{exp(−a·)} ‖Φ‖_{exp(−a·), 0}`, the convolution constant
/// taken on `conv_box`.
pub fn lr_velocity(phi: &Interaction, a: f64, conv_box: &Lattice) -> f64 {
    let zeta = WeightProfile::Exponential { a };
    let c = FFunction::new(zeta.clone(), conv_box.dim()).convolution_constant(conv_box);
    2.0 / a * c * interaction_norm(phi, &zeta, 0)
}

/// Outside-the-cone monotonicity: at each time, the norms at distances
/// beyond `v·(t − t0)/η` decrease strictly with distance. Norms at or below
/// `floor` are round-off and are left out. Returns the largest number of such
/// points found at any time together with the verdict.
pub fn cone_exterior_monotone(rows: &[LrRow], v: f64, t0: f64, eta: f64, floor: f64) -> (usize, bool) {
    let mut times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut longest = 0;
    let mut ok = true;
    for t in times {
        let edge = v * (t - t0) / eta;
        let mut pts: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.t == t && r.dist as f64 > edge && r.commutator_norm > floor)
            .map(|r| (r.dist, r.commutator_norm))
            .collect();
        pts.sort_by_key(|p| p.0);
        pts.dedup_by_key(|p| p.0);
        if pts.len() >= 2 {
            ok &= pts.windows(2).all(|w| w[1].1 < w[0].1);
            longest = longest.max(pts.len());
        }
    }
    (longest, ok)
}

/// One volume pair of a convergence table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub l: usize,
    pub diff_norm: f64,
    pub boundary_dist: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// First difference over last difference (∞ if the last vanishes).
    pub decay_factor: f64,
    /// Differences strictly decrease and their log-log slope against the
    /// boundary distance steepens along the window.
    pub superpolynomial: bool,
}

/// `‖(U^{Λ_l} − U^{Λ_k})(A)‖` for consecutive sides. `build(side)` returns the
/// family on `Λ_side` (full Fock space) and the support of `A`; `a_local`
/// is `A` on the full local space of the support's modes.
pub fn volume_convergence(
    build: &dyn Fn(usize) -> Result<HamiltonianFamily>,
    support: &[Vec<i64>],
    a_local: &CMat,
    sides: &[usize],
    t0: f64,
    t: f64,
    opts: &PropagationOptions,
) -> Result<ConvergenceReport> {
    let mut evolved: Vec<(HamiltonianFamily, CMat, SiteSet)> = Vec::new();
    for &side in sides {
        let fam = build(side)?;
        if !fam.space().is_full() {
            return Err(Error::domain("volume comparison needs full Fock spaces"));
        }
        let lat = fam.lattice().clone();
        let set: SiteSet = support
            .iter()
            .map(|c| lat.index_of(c).ok_or_else(|| Error::domain(format!("site {c:?} outside Λ of side {side}"))))
            .collect::<Result<_>>()?;
        let op = LocalOperator::new(fock::site_modes(&lat, &set), a_local.clone())?;
        let a = fock::embed(&op, fam.space())?;
        let at = heisenberg(&fam, &a, t0, t, opts)?;
        evolved.push((fam, at, set));
    }
    let mut rows = Vec::new();
    for w in evolved.windows(2) {
        let (fk, ak, set_k) = (&w[0].0, &w[0].1, &w[0].2);
        let (fl, al) = (&w[1].0, &w[1].1);
        let (lk, ll) = (fk.lattice(), fl.lattice());
        // Sites of Λ_k inside Λ_l, in the order of Λ_k.
        let modes: Vec<usize> = lk
            .sites()
            .map(|x| {
                ll.index_of(lk.coords(x))
                    .ok_or_else(|| Error::domain("volumes are not nested"))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flat_map(|y| (0..ll.spin()).map(move |i| ll.mode(y, i)))
            .collect();
        if modes.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::domain("nested volume is not order-preserving"));
        }
        // The evolution is even; odd entries of `ak` are round-off.
        let lifted = fock::embed(&LocalOperator::new(modes, ak.clone())?.even_part(), fl.space())?;
        rows.push(ConvergenceRow {
            k: lk.side(),
            l: ll.side(),
            diff_norm: linalg::op_norm(&(al - &lifted)),
            boundary_dist: lk.boundary_distance(set_k, lk.radius()),
        });
    }
    let decay_factor = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) if l.diff_norm > 0.0 => f.diff_norm / l.diff_norm,
        (Some(f), Some(_)) if f.diff_norm > 0.0 => f64::INFINITY,
        _ => 1.0,
    };
    let decreasing = rows.windows(2).all(|w| w[1].diff_norm < w[0].diff_norm);
    let slopes: Vec<f64> = rows
        .windows(2)
        .filter(|w| w[0].diff_norm > 0.0 && w[1].diff_norm > 0.0 && w[1].boundary_dist > w[0].boundary_dist)
        .map(|w| {
            (w[1].diff_norm.ln() - w[0].diff_norm.ln())
                / ((w[1].boundary_dist as f64).ln() - (w[0].boundary_dist.max(1) as f64).ln())
        })
        .collect();
    let steepening = slopes.windows(2).all(|s| s[1] < s[0]);
    Ok(ConvergenceReport {
        rows,
        decay_factor,
        superpolynomial: decreasing && steepening && !slopes.is_empty(),
    })
}
