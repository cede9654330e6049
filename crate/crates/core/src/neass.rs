//! Super-adiabatic dressing of the instantaneous ground state.
//!
//! The generator `εS_n = Σ_j ε^j A_j` is built order by order. Powers are
//! counted with a bookkeeping parameter `λ` that scales ε and η together
//! (`ε → λε`, `η → λη`), so the order-`j` coefficient is `B_j = ε^j A_j`, a
//! homogeneous polynomial of degree `j` in `(ε, η)`; `A_j` itself is a
//! polynomial of degree `j` in `θ = η/ε`. Working with `B_j` keeps `ε = 0`
//! (pure adiabatic corrections) well defined.
//!
//! With `β = e^{iB}`, `B = Σ_j B_j`, the transformed generator is
//!
//! ```text
//! G(B) = e^{−iB}(H_0 + εV)e^{iB} + η Σ_m (−i)^m/(m+1)! ad_B^m(Ḃ) + η I(Ḣ_0),
//! ```
//!
//! `R̃_j` is the order-`j` coefficient of `G(B_1 + … + B_{j−1})`, and
//! `B_j = I(R̃_j)`, so the order-`j` coefficient `i L(B_j) + R̃_j = J(R̃_j)` of
//! the next generator is block diagonal with respect to the ground state.

use serde::Serialize;

use crate::dynamics::{evolve_state, HamiltonianFamily, PropagationOptions, StepRecord};
use crate::error::{Error, Result};
use crate::fock::{self, GroundState};
use crate::liouvillian::{SpectralFrame, WeightFunction};
use crate::linalg::{self, c64, CMat, I, ONE};

pub const MAX_ORDER: usize = 6;

/// Truncated power series `Σ_{j ≤ order} λ^j X_j` of operators.
#[derive(Clone, Debug)]
pub struct OperatorSeries {
    coeffs: Vec<CMat>,
}

impl OperatorSeries {
    pub fn zero(dim: usize, order: usize) -> Self {
        OperatorSeries {
            coeffs: vec![linalg::zeros(dim); order + 1],
        }
    }

    pub fn constant(x: &CMat, order: usize) -> Self {
        let mut s = Self::zero(x.nrows(), order);
        s.coeffs[0] = x.clone();
        s
    }

    pub fn from_coeffs(coeffs: Vec<CMat>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::domain("a series needs at least one coefficient"));
        }
        let n = coeffs[0].nrows();
        if coeffs.iter().any(|c| c.nrows() != n || c.ncols() != n) {
            return Err(Error::domain("series coefficients differ in shape"));
        }
        Ok(OperatorSeries { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn coeff(&self, j: usize) -> &CMat {
        &self.coeffs[j]
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    pub fn set(&mut self, j: usize, x: CMat) {
        self.coeffs[j] = x;
    }

    pub fn add(&self, other: &OperatorSeries) -> OperatorSeries {
        let order = self.order().min(other.order());
        OperatorSeries {
            coeffs: (0..=order).map(|j| &self.coeffs[j] + &other.coeffs[j]).collect(),
        }
    }

    pub fn scale(&self, s: c64) -> OperatorSeries {
        OperatorSeries {
            coeffs: self.coeffs.iter().map(|c| linalg::scale(c, s)).collect(),
        }
    }

    /// Multiplies by `λ`, dropping the top coefficient.
    pub fn shift(&self) -> OperatorSeries {
        let mut coeffs = vec![linalg::zeros(self.dim())];
        coeffs.extend(self.coeffs[..self.order()].iter().cloned());
        OperatorSeries { coeffs }
    }

    fn cauchy(&self, other: &OperatorSeries, f: impl Fn(&CMat, &CMat) -> CMat) -> OperatorSeries {
        let order = self.order().min(other.order());
        let mut out = Self::zero(self.dim(), order);
        for i in 0..=order {
            if linalg::max_abs(&self.coeffs[i]) == 0.0 {
                continue;
            }
            for j in 0..=(order - i) {
                if linalg::max_abs(&other.coeffs[j]) == 0.0 {
                    continue;
                }
                out.coeffs[i + j] += f(&self.coeffs[i], &other.coeffs[j]);
            }
        }
        out
    }

    /// Truncated product.
    pub fn mul(&self, other: &OperatorSeries) -> OperatorSeries {
        self.cauchy(other, linalg::mul)
    }

    /// Truncated commutator.
    pub fn commutator(&self, other: &OperatorSeries) -> OperatorSeries {
        self.cauchy(other, linalg::commutator)
    }

    /// `Σ_j λ^j X_j` at a numerical `λ`.
    pub fn evaluate(&self, lambda: f64) -> CMat {
        let mut out = linalg::zeros(self.dim());
        for (j, c) in self.coeffs.iter().enumerate() {
            linalg::add_assign_scaled(&mut out, c64::new(lambda.powi(j as i32), 0.0), c);
        }
        out
    }
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::domain(format!("order {order} exceeds the supported maximum {MAX_ORDER}")));
    }
    Ok(())
}

/// `Σ_m c_m ad_S^m(X)` truncated at `order`, for a generator `S` without
/// constant term.
fn ad_series(s: &OperatorSeries, x: &OperatorSeries, order: usize, c: impl Fn(usize) -> c64) -> Result<OperatorSeries> {
    check_order(order)?;
    if linalg::max_abs(s.coeff(0)) != 0.0 {
        return Err(Error::domain("the generator series must vanish at order 0"));
    }
    let trunc = |y: &OperatorSeries| OperatorSeries {
        coeffs: (0..=order)
            .map(|j| y.coeffs.get(j).cloned().unwrap_or_else(|| linalg::zeros(y.dim())))
            .collect(),
    };
    let s = trunc(s);
    let mut term = trunc(x);
    let mut out = term.scale(c(0));
    for m in 1..=order {
        term = s.commutator(&term);
        out = out.add(&term.scale(c(m)));
    }
    Ok(out)
}

/// `e^{−iS} X e^{iS} = Σ_m (−i)^m/m! ad_S^m(X)` truncated at `order`.
pub fn conjugation_series(s: &OperatorSeries, x: &OperatorSeries, order: usize) -> Result<OperatorSeries> {
    ad_series(s, x, order, |m| {
        (-I).powi(m as i32) / (1..=m).map(|k| k as f64).product::<f64>()
    })
}

/// `−i e^{−iS} ∂_t e^{iS} = Σ_m (−i)^m/(m+1)! ad_S^m(Ṡ)` truncated at `order`.
pub fn derivative_series(s: &OperatorSeries, s_dot: &OperatorSeries, order: usize) -> Result<OperatorSeries> {
    ad_series(s, s_dot, order, |m| {
        (-I).powi(m as i32) / (1..=m + 1).map(|k| k as f64).product::<f64>()
    })
}

/// `A_1 = I(V + θ I(Ḣ_0))` in the eigenbasis of `frame`.
pub fn build_a1(frame: &SpectralFrame, v: &CMat, h0_dot: &CMat, w: &WeightFunction, theta: f64) -> CMat {
    let ih = frame.inverse_liouvillian(h0_dot, w);
    let arg = linalg::axpy(v, c64::new(theta, 0.0), &ih);
    frame.inverse_liouvillian(&arg, w)
}

/// What to do when the frozen-time gap falls below the weight's `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Reject with the measured gap.
    Require,
    /// Proceed and report the margin; for systems gapped only in the bulk.
    Report,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BundleOptions {
    pub gap_policy: GapPolicy,
    /// Step for the central differences of the construction in `t`.
    pub h_t: f64,
}

impl Default for BundleOptions {
    fn default() -> Self {
        BundleOptions {
            gap_policy: GapPolicy::Require,
            h_t: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NeassBundle {
    pub order: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub t: f64,
    /// `B_j = ε^j A_j`, `j = 1..=n`.
    pub b: Vec<CMat>,
    pub r_tilde: Vec<CMat>,
    /// `B = εS_n = Σ_j B_j`.
    pub generator: CMat,
    /// `e^{iB}`.
    pub dressing: CMat,
    pub ground: GroundState,
    /// `e^{iB} ψ_0`.
    pub dressed: Vec<c64>,
    /// Frozen gap minus the weight's `g`.
    pub gap_margin: f64,
    /// `‖G_j(B_1..B_n) − (iL(B_j) + R̃_j)‖_max` per order.
    pub split_residuals: Vec<f64>,
    /// `‖G_j − J(R̃_j)‖_max` per order, controlled by the weight's leakage.
    pub block_residuals: Vec<f64>,
    pub leakage: f64,
}

/// Numbers worth exporting from a bundle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BundleSummary {
    pub order: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub theta: Option<f64>,
    pub t: f64,
    pub a_norms: Vec<f64>,
    pub gap: f64,
    pub gap_margin: f64,
    pub split_residuals: Vec<f64>,
    pub block_residuals: Vec<f64>,
    pub hermiticity_defect: f64,
    pub dressing_unitarity_defect: f64,
    pub leakage: f64,
}

impl NeassBundle {
    pub fn theta(&self) -> Option<f64> {
        (self.epsilon > 0.0).then(|| self.eta / self.epsilon)
    }

    /// `A_j = B_j / ε^j`; `None` at `ε = 0`.
    pub fn a(&self, j: usize) -> Option<CMat> {
        (self.epsilon > 0.0 && j >= 1 && j <= self.order)
            .then(|| linalg::scale_re(&self.b[j - 1], self.epsilon.powi(-(j as i32))))
    }

    /// `Π_n` as a density matrix.
    pub fn density(&self) -> CMat {
        linalg::projector(&self.dressed)
    }

    pub fn expect(&self, a: &CMat) -> f64 {
        linalg::expectation(a, &self.dressed).re
    }

    pub fn summary(&self) -> BundleSummary {
        let a_norms = (1..=self.order)
            .map(|j| match self.a(j) {
                Some(a) => linalg::op_norm(&a),
                None => linalg::op_norm(&self.b[j - 1]),
            })
            .collect();
        BundleSummary {
            order: self.order,
            epsilon: self.epsilon,
            eta: self.eta,
            theta: self.theta(),
            t: self.t,
            a_norms,
            gap: self.ground.gap,
            gap_margin: self.gap_margin,
            split_residuals: self.split_residuals.clone(),
            block_residuals: self.block_residuals.clone(),
            hermiticity_defect: linalg::hermiticity_defect(&self.generator),
            dressing_unitarity_defect: linalg::unitarity_defect(&self.dressing),
            leakage: self.leakage,
        }
    }
}

struct Frozen {
    frame: SpectralFrame,
    h0: CMat,
    v: CMat,
    i_h0_dot: CMat,
}

fn frozen(fam: &HamiltonianFamily, t: f64, w: &WeightFunction, policy: GapPolicy) -> Result<Frozen> {
    let h0 = fam.h0(t);
    let frame = SpectralFrame::new(&h0)?;
    let gap = frame.gap();
    if policy == GapPolicy::Require && gap < w.gap() {
        return Err(Error::GapTooSmall { gap, required: w.gap() });
    }
    let i_h0_dot = frame.inverse_liouvillian(&fam.h0_dot(t), w);
    Ok(Frozen {
        v: linalg::scale_re(&fam.perturbation(t), fam.epsilon),
        frame,
        h0,
        i_h0_dot,
    })
}

/// Transformed generator `G(B)` as a series through `order`, given `Ḃ`.
fn generator(fam: &HamiltonianFamily, fr: &Frozen, b: &OperatorSeries, b_dot: &OperatorSeries, order: usize) -> Result<OperatorSeries> {
    let dim = fam.dim();
    // H_0 + λ εV
    let mut h = OperatorSeries::constant(&fr.h0, order);
    if order >= 1 {
        h.set(1, fr.v.clone());
    }
    let mut g = conjugation_series(b, &h, order)?;
    if order >= 1 {
        // λη Σ (−i)^m/(m+1)! ad_B^m(Ḃ)   +   λη I(Ḣ_0)
        let d = derivative_series(b, b_dot, order)?.shift().scale(c64::new(fam.eta, 0.0));
        g = g.add(&d);
        let mut extra = OperatorSeries::zero(dim, order);
        extra.set(1, linalg::scale_re(&fr.i_h0_dot, fam.eta));
        g = g.add(&extra);
    }
    Ok(g)
}

fn series_of(dim: usize, order: usize, b: &[CMat]) -> OperatorSeries {
    let mut s = OperatorSeries::zero(dim, order);
    for (j, x) in b.iter().enumerate().take(order) {
        s.set(j + 1, x.clone());
    }
    s
}

/// `B_1..B_n` at time `t`, recursing for the time derivatives.
fn build_b(fam: &HamiltonianFamily, t: f64, n: usize, w: &WeightFunction, opts: &BundleOptions) -> Result<(Vec<CMat>, Vec<CMat>, Vec<CMat>, Frozen)> {
    let fr = frozen(fam, t, w, opts.gap_policy)?;
    let dim = fam.dim();
    let b_dot: Vec<CMat> = if n >= 2 {
        let h = opts.h_t;
        let at = |s: f64| -> Result<Vec<CMat>> { Ok(build_b(fam, s, n - 1, w, opts)?.0) };
        let (p1, m1, p2, m2) = (at(t + h)?, at(t - h)?, at(t + 0.5 * h)?, at(t - 0.5 * h)?);
        (0..n - 1)
            .map(|i| {
                let d1 = linalg::scale_re(&(&p1[i] - &m1[i]), 0.5 / h);
                let d2 = linalg::scale_re(&(&p2[i] - &m2[i]), 1.0 / h);
                let d = linalg::scale_re(&linalg::axpy(&linalg::scale_re(&d2, 4.0), c64::new(-1.0, 0.0), &d1), 1.0 / 3.0);
                // Ḃ is Hermitian; the anti-Hermitian part is differencing noise.
                linalg::hermitian_part(&d)
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut b: Vec<CMat> = Vec::with_capacity(n);
    let mut r_tilde = Vec::with_capacity(n);
    for j in 1..=n {
        let g = generator(fam, &fr, &series_of(dim, j, &b), &series_of(dim, j, &b_dot), j)?;
        let r = g.coeff(j).clone();
        b.push(fr.frame.inverse_liouvillian(&r, w));
        r_tilde.push(r);
    }
    Ok((b, r_tilde, b_dot, fr))
}

/// The order-`n` bundle at time `t` for the family's `(ε, η)`.
pub fn build_bundle(fam: &HamiltonianFamily, n: usize, t: f64, w: &WeightFunction, opts: &BundleOptions) -> Result<NeassBundle> {
    if n == 0 {
        return Err(Error::domain("order must be at least 1"));
    }
    check_order(n)?;
    let (b, r_tilde, b_dot, fr) = build_b(fam, t, n, w, opts)?;
    let dim = fam.dim();

    // Matrix-level check of the split, reusing the recursion's own Ḃ.
    let full = generator(fam, &fr, &series_of(dim, n, &b), &series_of(dim, n, &b_dot), n)?;
    let mut split_residuals = Vec::with_capacity(n);
    let mut block_residuals = Vec::with_capacity(n);
    for j in 1..=n {
        let expected = linalg::axpy(&r_tilde[j - 1], I, &linalg::commutator(&fr.h0, &b[j - 1]));
        split_residuals.push(linalg::max_abs(&(full.coeff(j) - &expected)));
        let block = fr.frame.j_map(&r_tilde[j - 1], w);
        block_residuals.push(linalg::max_abs(&(full.coeff(j) - &block)));
    }

    let mut generator_total = linalg::zeros(dim);
    for x in &b {
        generator_total += x;
    }
    let generator_total = linalg::hermitian_part(&generator_total);
    let dressing = linalg::expm_i_hermitian(&generator_total, -1.0);
    let ground = fock::ground_state_from(&fr.frame.eig, &fr.h0, None)?;
    let dressed = linalg::matvec(&dressing, &ground.vector);
    Ok(NeassBundle {
        order: n,
        epsilon: fam.epsilon,
        eta: fam.eta,
        t,
        gap_margin: ground.gap - w.gap(),
        b,
        r_tilde,
        generator: generator_total,
        dressing,
        ground,
        dressed,
        split_residuals,
        block_residuals,
        leakage: w.leakage(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectReport {
    /// `|Π_n(t0)(U_{t,t0}(A)) − Π_n(t)(A)|` per observable.
    pub defects: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub start: BundleSummary,
    pub end: BundleSummary,
}

/// Adiabatic defects of several observables between `t0` and `t`.
pub fn adiabatic_defects(
    fam: &HamiltonianFamily,
    observables: &[CMat],
    n: usize,
    t0: f64,
    t: f64,
    w: &WeightFunction,
    bundle_opts: &BundleOptions,
    prop_opts: &PropagationOptions,
) -> Result<DefectReport> {
    let start = build_bundle(fam, n, t0, w, bundle_opts)?;
    let end = if t == t0 { start.clone() } else { build_bundle(fam, n, t, w, bundle_opts)? };
    let (psi, steps) = evolve_state(fam, &start.dressed, t0, t, prop_opts)?;
    let defects = observables
        .iter()
        .map(|a| (linalg::expectation(a, &psi).re - end.expect(a)).abs())
        .collect();
    Ok(DefectReport {
        defects,
        steps,
        start: start.summary(),
        end: end.summary(),
    })
}

/// Single-observable form of [`adiabatic_defects`].
#[allow(clippy::too_many_arguments)]
pub fn adiabatic_defect(
    fam: &HamiltonianFamily,
    a: &CMat,
    n: usize,
    t0: f64,
    t: f64,
    w: &WeightFunction,
    bundle_opts: &BundleOptions,
    prop_opts: &PropagationOptions,
) -> Result<f64> {
    Ok(adiabatic_defects(fam, std::slice::from_ref(a), n, t0, t, w, bundle_opts, prop_opts)?.defects[0])
}

/// `‖e^{iB} − 1‖`, the distance of the dressing from the identity.
pub fn dressing_distance(bundle: &NeassBundle) -> f64 {
    linalg::op_norm(&linalg::axpy(&bundle.dressing, -ONE, &linalg::identity(bundle.dressing.nrows())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn conjugation_series_matches_exact_conjugation() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let s1 = linalg::random_hermitian(6, &mut rng);
        let s2 = linalg::random_hermitian(6, &mut rng);
        let x = linalg::random_hermitian(6, &mut rng);
        let mut s = OperatorSeries::zero(6, 4);
        s.set(1, s1.clone());
        s.set(2, s2.clone());
        let series = conjugation_series(&s, &OperatorSeries::constant(&x, 4), 4).unwrap();
        // Order-1 coefficient is −i[S_1, X].
        let want = linalg::scale(&linalg::commutator(&s1, &x), -I);
        assert!(linalg::max_abs(&(series.coeff(1) - &want)) < 1e-12);
        let err = |lam: f64| {
            let sl = s.evaluate(lam);
            let u = linalg::expm_i_hermitian(&sl, -1.0);
            let exact = linalg::mul3(&linalg::adjoint(&u), &x, &u);
            linalg::max_abs(&(&exact - &series.evaluate(lam)))
        };
        // Fifth-order remainder: halving λ shrinks the error by about 32.
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 25.0 && ratio < 40.0, "{ratio}");
    }

    #[test]
    fn order_cap() {
        let s = OperatorSeries::zero(2, 7);
        assert!(conjugation_series(&s, &OperatorSeries::constant(&linalg::identity(2), 7), 7).is_err());
    }
}
