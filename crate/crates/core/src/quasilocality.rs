//! Conditional expectations onto sub-boxes, f-norms, localization profiles
//! and the shell decomposition of an operator around a set.
//!
//! The conditional expectation onto the modes `S` is the normalized partial
//! trace over the remaining modes, taken in the ordering where `S` comes
//! first (so the even operator restricted to `S` carries no string through
//! the rest), and re-embedded as `B ⊗ 1`.

use crate::error::{Error, Result};
use crate::fock::{self, mask, reorder_sign, scatter, FockSpace, LocalOperator};
use crate::lattice::{Lattice, SiteSet};
use crate::linalg::{self, CMat, ZERO};

/// Bounded, non-increasing, positive profile `f(k)`, optionally raised to a power.
#[derive(Clone, Debug, PartialEq)]
pub enum DecayFunction {
    /// `e^{-a k}`
    Exponential { a: f64 },
    /// `e^{-a k^γ}`
    StretchedExponential { a: f64, gamma: f64 },
    /// `(1 + k)^{-p}`
    Power { p: f64 },
    /// Sampled values at `k = 0, 1, ...`, held constant beyond the table.
    Table(Vec<f64>),
    /// `base(k)^exponent`
    Powered { base: Box<DecayFunction>, exponent: f64 },
}

impl Default for DecayFunction {
    fn default() -> Self {
        DecayFunction::StretchedExponential { a: 1.0, gamma: 0.9 }
    }
}

impl DecayFunction {
    pub fn value(&self, k: f64) -> f64 {
        match self {
            DecayFunction::Exponential { a } => (-a * k).exp(),
            DecayFunction::StretchedExponential { a, gamma } => (-a * k.powf(*gamma)).exp(),
            DecayFunction::Power { p } => (1.0 + k).powf(-p),
            DecayFunction::Table(t) => {
                let i = (k.max(0.0).floor() as usize).min(t.len() - 1);
                t[i]
            }
            DecayFunction::Powered { base, exponent } => base.value(k).powf(*exponent),
        }
    }

    /// `j`-th member `f^{1/(5R²)^j}` of the dominating sequence: for
    /// `α, β ∈ [1/R, R]`, `f_j^α / f_{j+1}^β → 0`.
    pub fn sequence_member(&self, j: u32, r: f64) -> DecayFunction {
        DecayFunction::Powered {
            base: Box::new(self.clone()),
            exponent: (5.0 * r * r).powi(-(j as i32)),
        }
    }

    /// Checks boundedness, monotonicity, positivity and `f(k_max) < f(0)/100`.
    pub fn certify(&self, k_max: usize) -> Result<()> {
        let v: Vec<f64> = (0..=k_max).map(|k| self.value(k as f64)).collect();
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::domain("decay function must be finite and positive"));
        }
        if v.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::domain("decay function must be non-increasing"));
        }
        if v[k_max] >= v[0] / 100.0 {
            return Err(Error::domain(format!(
                "decay to zero not certified on 0..={k_max}: f(k_max)/f(0) = {:.3e}",
                v[k_max] / v[0]
            )));
        }
        Ok(())
    }
}

fn check_even(a: &CMat, space: &FockSpace) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)] != ZERO && (space.state(i) ^ space.state(j)).count_ones() % 2 == 1 {
                return Err(Error::Parity(
                    "conditional expectation is defined on even operators only".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Normalized partial trace of `a` onto the modes `modes`, as a local operator.
pub fn partial_trace(a: &CMat, space: &FockSpace, modes: &[usize]) -> Result<LocalOperator> {
    if !space.is_full() {
        return Err(Error::domain("conditional expectation needs the full Fock space"));
    }
    check_even(a, space)?;
    let n = space.n_modes();
    let smask = mask(modes);
    let rest: Vec<usize> = (0..n).filter(|m| smask >> m & 1 == 0).collect();
    let d = 1usize << modes.len();
    let n_rest = 1usize << rest.len();
    let mut b = linalg::zeros(d);
    let local_bits: Vec<u64> = (0..d).map(|i| scatter(i, modes)).collect();
    for r in 0..n_rest {
        let rb = scatter(r, &rest);
        for j in 0..d {
            let col = (rb | local_bits[j]) as usize;
            let sc = reorder_sign(col as u64, smask);
            for i in 0..d {
                let row = (rb | local_bits[i]) as usize;
                let v = a[(row, col)];
                if v != ZERO {
                    b[(i, j)] += v * (sc * reorder_sign(row as u64, smask));
                }
            }
        }
    }
    let norm = 1.0 / n_rest as f64;
    for j in 0..d {
        for i in 0..d {
            b[(i, j)] *= norm;
        }
    }
    LocalOperator::new(modes.to_vec(), b)
}

/// `E_S(a)` for the modes `modes`, embedded back into `space`.
pub fn conditional_expectation_modes(a: &CMat, space: &FockSpace, modes: &[usize]) -> Result<CMat> {
    fock::embed(&partial_trace(a, space, modes)?, space)
}

/// `E_X(a)` for a site set `X`.
pub fn conditional_expectation_sites(
    a: &CMat,
    space: &FockSpace,
    lat: &Lattice,
    set: &SiteSet,
) -> Result<CMat> {
    conditional_expectation_modes(a, space, &fock::site_modes(lat, set))
}

/// `E_{Λ_M}(a)`.
pub fn conditional_expectation(a: &CMat, space: &FockSpace, lat: &Lattice, m: usize) -> Result<CMat> {
    if m > lat.radius() {
        return Err(Error::domain(format!(
            "box radius {m} exceeds the lattice radius {}",
            lat.radius()
        )));
    }
    conditional_expectation_sites(a, space, lat, &lat.box_sites(m))
}

/// `‖(1 − E_{Λ_k})(a)‖`.
pub fn tail_norm(a: &CMat, space: &FockSpace, lat: &Lattice, k: usize) -> Result<f64> {
    if lat.box_sites(k).len() == lat.n_sites() {
        return Ok(0.0);
    }
    let e = conditional_expectation_sites(a, space, lat, &lat.box_sites(k))?;
    Ok(linalg::op_norm(&(a - &e)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FNorm {
    pub value: f64,
    pub op_norm: f64,
    /// Maximizing `k` of the tail ratio, if any tail is nonzero.
    pub argmax: Option<usize>,
}

/// `‖a‖ + max_{k ≤ k_max} ‖(1 − E_{Λ_k})(a)‖ / f(k)`.
pub fn f_norm(
    a: &CMat,
    space: &FockSpace,
    lat: &Lattice,
    f: &DecayFunction,
    k_max: usize,
) -> Result<FNorm> {
    let op = linalg::op_norm(a);
    let mut best = 0.0;
    let mut argmax = None;
    for k in 0..=k_max {
        let t = tail_norm(a, space, lat, k)?;
        let ratio = t / f.value(k as f64);
        if ratio > best {
            best = ratio;
            argmax = Some(k);
        }
    }
    Ok(FNorm {
        value: op + best,
        op_norm: op,
        argmax,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationProfile {
    pub ks: Vec<usize>,
    pub values: Vec<f64>,
    /// Least-squares slope of `ln value` against `k` (nonzero values only).
    pub slope_linear: Option<f64>,
    /// Least-squares slope of `ln value` against `k^γ`.
    pub slope_stretched: Option<f64>,
    pub gamma: f64,
}

impl LocalizationProfile {
    /// Envelope `c·f(k)` with `c = ‖a‖_f − ‖a‖`, which dominates the profile.
    pub fn envelope(&self, f: &DecayFunction, f_norm: &FNorm) -> Vec<f64> {
        let c = f_norm.value - f_norm.op_norm;
        self.ks.iter().map(|&k| c * f.value(k as f64)).collect()
    }

    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// The sequence `‖(1 − E_{Λ_k})(a)‖` with decay fits.
pub fn localization_profile(
    a: &CMat,
    space: &FockSpace,
    lat: &Lattice,
    ks: &[usize],
    gamma: f64,
) -> Result<LocalizationProfile> {
    let values = ks
        .iter()
        .map(|&k| tail_norm(a, space, lat, k))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v > 1e-300)
        .map(|(&k, &v)| (k as f64, v.ln()))
        .collect();
    let slope_linear = least_squares_slope(&pts);
    let stretched: Vec<(f64, f64)> = pts.iter().map(|&(k, y)| (k.powf(gamma), y)).collect();
    Ok(LocalizationProfile {
        ks: ks.to_vec(),
        values,
        slope_linear,
        slope_stretched: least_squares_slope(&stretched),
        gamma,
    })
}

/// Ordinary least-squares slope; `None` for fewer than two distinct abscissae.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Shells `A^{(0)} = E_{X_0}(a)`, `A^{(j)} = (E_{X_j} − E_{X_{j−1}})(a)` with
/// `X_j = fatten(X, radius0 + j·step)`, ending when `X_j` covers the box.
pub fn cone_decomposition(
    a: &CMat,
    space: &FockSpace,
    lat: &Lattice,
    set: &SiteSet,
    radius0: f64,
    step: f64,
) -> Result<Vec<CMat>> {
    if step <= 0.0 {
        return Err(Error::domain("shell step must be positive"));
    }
    let all = lat.all_sites();
    let mut shells = Vec::new();
    let mut prev: Option<CMat> = None;
    let mut j = 0usize;
    loop {
        let region = lat.fatten(set, radius0 + j as f64 * step)?;
        let full = region == all;
        let e = if full {
            a.clone()
        } else {
            conditional_expectation_sites(a, space, lat, &region)?
        };
        shells.push(match &prev {
            None => e.clone(),
            Some(p) => &e - p,
        });
        if full {
            return Ok(shells);
        }
        prev = Some(e);
        j += 1;
    }
}
