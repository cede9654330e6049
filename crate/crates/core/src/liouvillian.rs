//! The Liouvillian `L_H = [H, ·]`, the band-limited weight function `w_g`,
//! and the maps
//!
//! ```text
//! J(A) = ∫ ds w(s) e^{isL}(A),     I(A) = ∫ ds w(s) ∫_0^s du e^{iuL}(A),
//! ```
//!
//! with `e^{isL}(A) = e^{isH} A e^{-isH}`. In the eigenbasis of `H` both act
//! elementwise: `J(A)_mn = √(2π) ŵ(E_m − E_n) A_mn` and `I(A)_mn = W(E_m − E_n) A_mn`
//! with `W(E) = ∫ w(s) (e^{isE} − 1)/(iE) ds = i (1 − √(2π) ŵ(E)) / E`.
//! Since `ŵ_g` vanishes outside `[−g, g]`, `W(E) = i/E` there and `L∘I = i(1 − J)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, Eigh, I, ZERO};

/// Parameters of the weight function; `s_max` is in units of `1/g`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightParams {
    pub gap: f64,
    pub n_terms: usize,
    pub s_max_factor: f64,
    pub grid_points: usize,
}

impl WeightParams {
    pub fn new(gap: f64) -> Self {
        WeightParams {
            gap,
            n_terms: 15,
            s_max_factor: 400.0,
            grid_points: 1 << 16,
        }
    }
}

/// Number of Chebyshev nodes used to tabulate `W` on `[−g, g]`.
const CHEB_NODES: usize = 1024;
/// Leakage above which the weight function is refused.
const LEAKAGE_LIMIT: f64 = 1e-3;

/// `w_g(s) = g c ∏_n sinc²(a_n g s)` with `Σ 2a_n = 1`, sampled and certified.
#[derive(Clone, Debug)]
pub struct WeightFunction {
    params: WeightParams,
    a: Vec<f64>,
    c: f64,
    s: Vec<f64>,
    w: Vec<f64>,
    ds: f64,
    leakage: f64,
    integral: f64,
    cheb: Vec<f64>,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

impl WeightFunction {
    pub fn build(params: WeightParams) -> Result<Self> {
        let WeightParams {
            gap: g,
            n_terms,
            s_max_factor,
            grid_points,
        } = params;
        if !(g > 0.0) || n_terms < 2 || grid_points < 16 || !(s_max_factor > 0.0) {
            return Err(Error::domain(
                "weight function needs g > 0, n_terms ≥ 2, s_max > 0 and at least 16 grid points",
            ));
        }
        let raw: Vec<f64> = (1..=n_terms)
            .map(|n| 1.0 / (n as f64 * ((n + 1) as f64).ln().powi(2)))
            .collect();
        let total: f64 = raw.iter().sum();
        let a: Vec<f64> = raw.iter().map(|x| x / (2.0 * total)).collect();
        let s_max = s_max_factor / g;
        let ds = 2.0 * s_max / (grid_points - 1) as f64;
        if PI / ds <= 2.0 * g {
            return Err(Error::Uncertified {
                leakage: f64::NAN,
                bound: LEAKAGE_LIMIT,
                suggestion: format!(
                    "grid spacing cannot resolve frequencies above the gap; use more than {} grid points",
                    (4.0 * s_max * g / PI).ceil() as usize + 1
                ),
            });
        }
        let half = (grid_points - 1) as f64 / 2.0;
        let s: Vec<f64> = (0..grid_points).map(|i| (i as f64 - half) * ds).collect();
        let mut wf = WeightFunction {
            params: params.clone(),
            a,
            c: 1.0,
            s,
            w: Vec::new(),
            ds,
            leakage: 0.0,
            integral: 0.0,
            cheb: Vec::new(),
        };
        let unnormalized: Vec<f64> = wf.s.iter().map(|&x| wf.value(x)).collect();
        // Trapezoid on a band-limited integrand is exact up to the tail.
        let integral: f64 = unnormalized.iter().sum::<f64>() * ds;
        wf.c = 1.0 / integral;
        wf.w = unnormalized.iter().map(|x| x * wf.c).collect();
        wf.integral = wf.w.iter().sum::<f64>() * ds;
        wf.leakage = wf.measure_leakage();
        if wf.leakage > LEAKAGE_LIMIT {
            return Err(Error::Uncertified {
                leakage: wf.leakage,
                bound: LEAKAGE_LIMIT,
                suggestion: format!(
                    "increase s_max (currently {s_max_factor}/g) or n_terms (currently {n_terms})"
                ),
            });
        }
        wf.cheb = wf.chebyshev_table();
        Ok(wf)
    }

    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    pub fn gap(&self) -> f64 {
        self.params.gap
    }

    pub fn s_max(&self) -> f64 {
        self.params.s_max_factor / self.params.gap
    }

    /// Band-limit parameters `a_n` of the unscaled `w` (`Σ 2a_n = 1`).
    pub fn factors(&self) -> &[f64] {
        &self.a
    }

    /// `w_g(s)`, exactly even.
    pub fn value(&self, s: f64) -> f64 {
        let g = self.params.gap;
        let x = s.abs() * g;
        g * self.c * self.a.iter().map(|an| sinc(an * x).powi(2)).product::<f64>()
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.s, &self.w)
    }

    pub fn spacing(&self) -> f64 {
        self.ds
    }

    /// Trapezoid integral of the samples.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// `max_{|k| > g} |ŵ(k)| / ŵ(0)` on the discrete Fourier grid.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// `sup_s |s|^n w(s)` on the grid.
    pub fn moment_sup(&self, n: i32) -> f64 {
        self.s
            .iter()
            .zip(&self.w)
            .map(|(s, w)| s.abs().powi(n) * w)
            .fold(0.0, f64::max)
    }

    /// `(k, |ŵ(k)|)` on the non-negative discrete Fourier grid.
    pub fn spectrum(&self) -> Vec<(f64, f64)> {
        let n = self.w.len();
        let mut buf: Vec<c64> = self.w.iter().map(|&x| c64::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let dk = 2.0 * PI / (n as f64 * self.ds);
        let norm = self.ds / (2.0 * PI).sqrt();
        (0..=n / 2).map(|j| (j as f64 * dk, buf[j].norm() * norm)).collect()
    }

    fn measure_leakage(&self) -> f64 {
        let g = self.params.gap;
        let spec = self.spectrum();
        let w0 = spec[0].1;
        spec.iter()
            .filter(|(k, _)| *k > g)
            .map(|(_, v)| v / w0)
            .fold(0.0, f64::max)
    }

    /// `√(2π) ŵ(k) = ∫ w(s) cos(ks) ds` by trapezoid on the samples.
    pub fn fourier(&self, k: f64) -> f64 {
        self.s
            .iter()
            .zip(&self.w)
            .map(|(s, w)| w * (k * s).cos())
            .sum::<f64>()
            * self.ds
    }

    /// `G(E) = (1 − √(2π) ŵ(E))/E = ∫ w(s) 2 sin²(sE/2) ds / E`, free of cancellation.
    pub fn g_direct(&self, e: f64) -> f64 {
        if e == 0.0 {
            return 0.0;
        }
        self.s
            .iter()
            .zip(&self.w)
            .map(|(s, w)| 2.0 * w * (0.5 * s * e).sin().powi(2))
            .sum::<f64>()
            * self.ds
            / e
    }

    fn chebyshev_table(&self) -> Vec<f64> {
        let n = CHEB_NODES;
        let g = self.params.gap;
        let vals: Vec<f64> = (0..n)
            .map(|k| self.g_direct(g * (PI * (k as f64 + 0.5) / n as f64).cos()))
            .collect();
        (0..n)
            .map(|j| {
                let s: f64 = (0..n)
                    .map(|k| vals[k] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                s * if j == 0 { 1.0 } else { 2.0 } / n as f64
            })
            .collect()
    }

    /// Clenshaw evaluation of the Chebyshev table of `G` on `[−g, g]`.
    fn g_interp(&self, e: f64) -> f64 {
        let x = e / self.params.gap;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.cheb.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.cheb[0]
    }

    /// Kernel of `I`: `W(E) = i (1 − √(2π) ŵ(E)) / E`, `W(0) = 0`.
    pub fn kernel_i(&self, e: f64) -> c64 {
        if e == 0.0 {
            ZERO
        } else if e.abs() >= self.params.gap {
            I / e
        } else {
            // G is odd; evaluating on |E| keeps W(−E) = conj W(E) exact.
            I * (e.signum() * self.g_interp(e.abs()))
        }
    }

    /// Kernel of `J`: `√(2π) ŵ(E)`.
    pub fn kernel_j(&self, e: f64) -> f64 {
        if e.abs() >= self.params.gap {
            0.0
        } else {
            1.0 - e.abs() * self.g_interp(e.abs())
        }
    }

    /// Ratio `w(s_max)/w(0)`, a proxy for the truncation of the `s`-integral.
    pub fn tail_ratio(&self) -> f64 {
        self.value(self.s_max()) / self.value(0.0)
    }
}

/// `L_H(A) = [H, A]`.
pub fn liouvillian(h: &CMat, a: &CMat) -> CMat {
    linalg::commutator(h, a)
}

/// Eigendecomposition of a frozen Hamiltonian with the spectral maps attached.
#[derive(Clone, Debug)]
pub struct SpectralFrame {
    pub eig: Eigh,
}

impl SpectralFrame {
    pub fn new(h: &CMat) -> Result<Self> {
        let defect = linalg::hermiticity_defect(h);
        if defect > 1e-10 * linalg::max_abs(h).max(1.0) {
            return Err(Error::NotHermitian { defect });
        }
        Ok(SpectralFrame { eig: linalg::eigh(h) })
    }

    pub fn gap(&self) -> f64 {
        if self.eig.dim() > 1 {
            self.eig.values[1] - self.eig.values[0]
        } else {
            f64::INFINITY
        }
    }

    pub fn ground_vector(&self) -> Vec<c64> {
        self.eig.vector(0)
    }

    pub fn inverse_liouvillian(&self, a: &CMat, w: &WeightFunction) -> CMat {
        self.eig.apply_kernel(a, |e| w.kernel_i(e))
    }

    pub fn j_map(&self, a: &CMat, w: &WeightFunction) -> CMat {
        self.eig.apply_kernel(a, |e| c64::new(w.kernel_j(e), 0.0))
    }
}

/// `I(A)` via the eigenbasis of `H`.
pub fn inverse_liouvillian_spectral(h: &CMat, a: &CMat, w: &WeightFunction) -> Result<CMat> {
    Ok(SpectralFrame::new(h)?.inverse_liouvillian(a, w))
}

/// `J(A)` via the eigenbasis of `H`.
pub fn j_map(h: &CMat, a: &CMat, w: &WeightFunction) -> Result<CMat> {
    Ok(SpectralFrame::new(h)?.j_map(a, w))
}

/// Options for the nested quadrature of `I`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureOptions {
    /// Gauss-Legendre nodes per outer panel.
    pub s_points: usize,
    /// Gauss-Legendre nodes per inner sub-interval.
    pub u_points: usize,
    /// Outer panel width is `min(max_panel, phase / max|E|)`.
    pub max_panel: f64,
    pub phase: f64,
    /// Reported error if the tail estimate exceeds this.
    pub tail_tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            s_points: 16,
            u_points: 4,
            max_panel: 0.5,
            phase: 4.0,
            tail_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureReport {
    pub outer_nodes: usize,
    pub distinct_gaps: usize,
    /// Bound on the truncated part `∫_{|s|>s_max} w(s)|s| ds`.
    pub tail_estimate: f64,
}

/// `I(A)` by nested Gauss-Legendre quadrature of `e^{iuH} A e^{-iuH}`.
///
/// The propagated matrix elements are `e^{iu(E_m − E_n)} A_mn` in the
/// eigenbasis; for every distinct energy difference (binned at 1e-9) the
/// inner integral `∫_0^s e^{iuE} du` is accumulated node by node along a
/// composite outer rule on `[−s_max, s_max]`.
pub fn inverse_liouvillian_quadrature(
    h: &CMat,
    a: &CMat,
    w: &WeightFunction,
    opts: &QuadratureOptions,
) -> Result<(CMat, QuadratureReport)> {
    let frame = SpectralFrame::new(h)?;
    let e = &frame.eig.values;
    let spread = e.last().unwrap() - e.first().unwrap();
    let panel = opts.max_panel.min(opts.phase / spread.max(1e-12));
    let s_max = w.s_max();
    let n_panels = (s_max / panel).ceil() as usize;
    let h_panel = s_max / n_panels as f64;
    let outer = GaussLegendre::new(
        NonZeroUsize::new(opts.s_points).ok_or_else(|| Error::domain("s_points must be positive"))?,
    );
    let inner = GaussLegendre::new(
        NonZeroUsize::new(opts.u_points).ok_or_else(|| Error::domain("u_points must be positive"))?,
    );
    let inner_rule: Vec<(f64, f64)> = inner.iter().map(|(x, q)| (*x, *q)).collect();
    // Outer nodes on [0, s_max]; the negative half is the mirror image.
    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(n_panels * opts.s_points);
    for p in 0..n_panels {
        let (lo, hi) = (p as f64 * h_panel, (p + 1) as f64 * h_panel);
        for (x, q) in outer.iter() {
            let s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
            nodes.push((s, 0.5 * (hi - lo) * q * w.value(s)));
        }
    }
    nodes.sort_by(|x, y| x.0.total_cmp(&y.0));

    let kernel = |en: f64| -> c64 {
        let mut total = ZERO;
        for sign in [1.0, -1.0] {
            let mut f = ZERO;
            let mut prev = 0.0;
            for &(s, weight) in &nodes {
                let (lo, hi) = (sign * prev, sign * s);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for &(x, q) in &inner_rule {
                    f += c64::cis((mid + half * x) * en) * (half * q);
                }
                total += f * weight;
                prev = s;
            }
        }
        total
    };

    let mut cache: HashMap<i64, c64> = HashMap::new();
    let n = e.len();
    let mut t = frame.eig.to_eigenbasis(a);
    for j in 0..n {
        for i in 0..n {
            let en = e[i] - e[j];
            let key = (en / 1e-9).round() as i64;
            let k = *cache.entry(key).or_insert_with(|| kernel(key as f64 * 1e-9));
            t[(i, j)] *= k;
        }
    }
    let tail_estimate = tail_bound(w);
    let report = QuadratureReport {
        outer_nodes: 2 * nodes.len(),
        distinct_gaps: cache.len(),
        tail_estimate,
    };
    if tail_estimate > opts.tail_tolerance {
        return Err(Error::Convergence(format!(
            "quadrature tail estimate {tail_estimate:.3e} exceeds {:.1e}",
            opts.tail_tolerance
        )));
    }
    Ok((frame.eig.from_eigenbasis(&t), report))
}

/// `2 ∫_{s_max}^∞ s w(s) ds` bounded with the `∏ (a_n g s)^{-2}` envelope.
fn tail_bound(w: &WeightFunction) -> f64 {
    let g = w.gap();
    let s_max = w.s_max();
    // For s ≥ s_max, w(s) ≤ w_env(s) = g c ∏ min(1, (a_n g s)^{-2}); the
    // envelope decays at least like s^{-2m} with m factors active.
    let active = w.factors().iter().filter(|an| *an * g * s_max >= 1.0).count() as i32;
    let env = w.value(0.0)
        * w.factors()
            .iter()
            .map(|an| (1.0f64).min((an * g * s_max).powi(-2)))
            .product::<f64>();
    if active >= 2 {
        // ∫_{S}^∞ s (S/s)^{2m} ds = S² / (2m − 2)
        2.0 * env * s_max * s_max / (2 * active - 2) as f64
    } else {
        f64::INFINITY
    }
}

/// `|ρ_0([L(I(A)) − iA, B])|` for the unique ground state of `H`; requires gap ≥ g.
pub fn invliou_identity_residual(h: &CMat, a: &CMat, b: &CMat, w: &WeightFunction) -> Result<f64> {
    let frame = SpectralFrame::new(h)?;
    invliou_identity_residual_in(&frame, h, a, b, w)
}

pub fn invliou_identity_residual_in(
    frame: &SpectralFrame,
    h: &CMat,
    a: &CMat,
    b: &CMat,
    w: &WeightFunction,
) -> Result<f64> {
    let gap = frame.gap();
    if gap < w.gap() {
        return Err(Error::GapTooSmall {
            gap,
            required: w.gap(),
        });
    }
    let ia = frame.inverse_liouvillian(a, w);
    let x = linalg::axpy(&liouvillian(h, &ia), -I, a);
    let psi = frame.ground_vector();
    Ok(linalg::expectation(&linalg::commutator(&x, b), &psi).norm())
}

/// Central difference with one Richardson step: `(4 D(h/2) − D(h)) / 3`.
pub fn richardson_derivative(f: &dyn Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    let d = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

/// Matrix version of [`richardson_derivative`].
pub fn richardson_derivative_mat(f: &dyn Fn(f64) -> Result<CMat>, t: f64, h: f64) -> Result<CMat> {
    let d = |h: f64| -> Result<CMat> {
        let p = f(t + h)?;
        let m = f(t - h)?;
        Ok(linalg::scale_re(&(&p - &m), 0.5 / h))
    };
    let d1 = d(h)?;
    let d2 = d(0.5 * h)?;
    Ok(linalg::scale_re(&linalg::axpy(&linalg::scale_re(&d2, 4.0), c64::new(-1.0, 0.0), &d1), 1.0 / 3.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub finite_difference: f64,
    pub formula: f64,
}

impl DerivativeCheck {
    pub fn difference(&self) -> f64 {
        (self.finite_difference - self.formula).abs()
    }
}

/// Compares `d/dt ρ_0(t)(A)` by finite differences with
/// `i ∫ dv w(v) ∫_0^v du ρ_0(L_{Ḣ_0} e^{iuL}(A))`, evaluated spectrally as
/// `i Σ_m [Ḣ_{0m} A_{m0} W(E_m − E_0) − A_{0m} Ḣ_{m0} W(E_0 − E_m)]`.
pub fn gs_derivative_check(
    h0: &dyn Fn(f64) -> Result<CMat>,
    h0_dot: &dyn Fn(f64) -> Result<CMat>,
    t: f64,
    h_t: f64,
    a: &CMat,
    w: &WeightFunction,
) -> Result<DerivativeCheck> {
    let expect = |s: f64| -> Result<f64> {
        let frame = SpectralFrame::new(&h0(s)?)?;
        Ok(linalg::expectation(a, &frame.ground_vector()).re)
    };
    // Propagate errors from the closure by evaluating eagerly.
    let pts = [t - h_t, t + h_t, t - 0.5 * h_t, t + 0.5 * h_t];
    let mut vals = [0.0; 4];
    for (v, s) in vals.iter_mut().zip(pts) {
        *v = expect(s)?;
    }
    let d1 = (vals[1] - vals[0]) / (2.0 * h_t);
    let d2 = (vals[3] - vals[2]) / h_t;
    let finite_difference = (4.0 * d2 - d1) / 3.0;

    let frame = SpectralFrame::new(&h0(t)?)?;
    let hd = frame.eig.to_eigenbasis(&h0_dot(t)?);
    let at = frame.eig.to_eigenbasis(a);
    let e = &frame.eig.values;
    let mut acc = ZERO;
    for m in 0..e.len() {
        acc += hd[(0, m)] * at[(m, 0)] * w.kernel_i(e[m] - e[0])
            - at[(0, m)] * hd[(m, 0)] * w.kernel_i(e[0] - e[m]);
    }
    let formula = (I * acc).re;
    Ok(DerivativeCheck {
        finite_difference,
        formula,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weight() -> WeightFunction {
        WeightFunction::build(WeightParams::new(1.0)).unwrap()
    }

    #[test]
    fn kernel_symmetries() {
        let w = weight();
        assert_eq!(w.kernel_i(0.0), ZERO);
        for e in [0.013, 0.2, 0.5, 0.99, 1.0, 1.7, 3.0] {
            let (p, m) = (w.kernel_i(e), w.kernel_i(-e));
            assert!((p - m.conj()).norm() < 1e-14, "{e}");
        }
        assert!((w.kernel_i(2.0) - I / 2.0).norm() < 1e-15);
        assert!((w.kernel_j(0.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn chebyshev_table_matches_direct_quadrature() {
        let w = weight();
        for e in [-0.97, -0.61, -0.3, -0.05, 0.001, 0.07, 0.333, 0.5, 0.8, 0.999] {
            let d = w.g_direct(e);
            assert!((w.g_interp(e) - d).abs() < 1e-12, "{e}: {} vs {d}", w.g_interp(e));
        }
        // Continuity into the analytic region.
        assert!((w.g_direct(1.0) - 1.0).abs() < 1e-10);
        assert!((w.g_direct(1.3) - 1.0 / 1.3).abs() < 1e-10);
    }

    #[test]
    fn two_level_reference_fixes_sign() {
        // Spectral and quadrature kernels agree on a two-level system.
        let w = weight();
        let h = linalg::diag(&[0.0, 1.5]);
        let x = CMat::from_fn(2, 2, |i, j| if i != j { linalg::ONE } else { ZERO });
        let spec = inverse_liouvillian_spectral(&h, &x, &w).unwrap();
        let (quad, _) =
            inverse_liouvillian_quadrature(&h, &x, &w, &QuadratureOptions::default()).unwrap();
        assert!(linalg::max_abs(&(&spec - &quad)) < 1e-9);
        // I(σx)_{01} = W(−1.5) = −i/1.5.
        assert!((spec[(0, 1)] - (-I / 1.5)).norm() < 1e-14);
    }

    #[test]
    fn richardson_is_fourth_order() {
        let f = |x: f64| x.sin();
        let d = richardson_derivative(&f, 0.3, 1e-2);
        assert!((d - 0.3f64.cos()).abs() < 1e-9);
    }
}
