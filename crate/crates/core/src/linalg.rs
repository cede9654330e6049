//! Dense complex linear algebra on top of `faer`, plus a small row-sparse
//! matrix and a Lanczos exponential for vector propagation.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par, Side};

pub use faer::c64;

/// Dense complex matrix used for every operator in the crate.
pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn zeros(n: usize) -> CMat {
    Mat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn diag(values: &[f64]) -> CMat {
    Mat::from_fn(values.len(), values.len(), |i, j| {
        if i == j {
            c64::new(values[i], 0.0)
        } else {
            ZERO
        }
    })
}

pub fn mul(a: &CMat, b: &CMat) -> CMat {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a.as_ref(), b.as_ref(), ONE, Par::Seq);
    out
}

/// `a * b * c`, ordered to keep intermediates square.
pub fn mul3(a: &CMat, b: &CMat, c: &CMat) -> CMat {
    mul(&mul(a, b), c)
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn scale(a: &CMat, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn scale_re(a: &CMat, s: f64) -> CMat {
    scale(a, c64::new(s, 0.0))
}

/// `a + s * b` without allocating a temporary for `s * b`.
pub fn axpy(a: &CMat, s: c64, b: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + s * b[(i, j)])
}

pub fn add_assign_scaled(acc: &mut CMat, s: c64, b: &CMat) {
    for j in 0..acc.ncols() {
        for i in 0..acc.nrows() {
            acc[(i, j)] += s * b[(i, j)];
        }
    }
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    let mut out = mul(a, b);
    matmul(out.as_mut(), Accum::Add, b.as_ref(), a.as_ref(), -ONE, Par::Seq);
    out
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    let mut out = mul(a, b);
    matmul(out.as_mut(), Accum::Add, b.as_ref(), a.as_ref(), ONE, Par::Seq);
    out
}

pub fn trace(a: &CMat) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// `tr(a b)` in O(n²).
pub fn trace_product(a: &CMat, b: &CMat) -> c64 {
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm_l2()
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if max_abs(a) == 0.0 {
        return 0.0;
    }
    if is_hermitian(a, 0.0) {
        let ev = eigh_values(a);
        return ev.first().unwrap().abs().max(ev.last().unwrap().abs());
    }
    a.singular_values()
        .map(|s| s[0])
        .unwrap_or_else(|_| {
            // Fall back to the Hermitian route on A*A.
            let ev = eigh_values(&mul(&adjoint(a), a));
            ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
        })
}

/// Max over entries of |a - a*|.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows().saturating_sub(1)) {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    a.nrows() == a.ncols() && hermiticity_defect(a) <= tol
}

pub fn hermitian_part(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// `Some(c)` if `a = c·1` exactly.
pub fn scalar_multiple_of_identity(a: &CMat) -> Option<c64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return None;
    }
    let c = a[(0, 0)];
    for j in 0..n {
        for i in 0..n {
            let want = if i == j { c } else { ZERO };
            if a[(i, j)] != want {
                return None;
            }
        }
    }
    Some(c)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Eigh {
    pub fn new(h: &CMat) -> Self {
        let h = hermitian_part(h);
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .expect("Hermitian eigendecomposition failed");
        let values = (0..h.nrows()).map(|i| evd.S()[i].re).collect();
        Eigh {
            values,
            vectors: evd.U().to_owned(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `U* a U`.
    pub fn to_eigenbasis(&self, a: &CMat) -> CMat {
        mul(&mul(&adjoint(&self.vectors), a), &self.vectors)
    }

    /// `U a U*`.
    pub fn from_eigenbasis(&self, a: &CMat) -> CMat {
        mul(&mul(&self.vectors, a), &adjoint(&self.vectors))
    }

    /// `f(H) = U diag(f(E)) U*`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> c64) -> CMat {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        mul(&scaled, &adjoint(&self.vectors))
    }

    /// Elementwise kernel in the eigenbasis: `U (K ∘ U* a U) U*` with
    /// `K_mn = kernel(E_m - E_n)`.
    pub fn apply_kernel(&self, a: &CMat, kernel: impl Fn(f64) -> c64) -> CMat {
        // Multiples of the identity commute with every basis change.
        if let Some(c) = scalar_multiple_of_identity(a) {
            return scale(&identity(a.nrows()), c * kernel(0.0));
        }
        let mut t = self.to_eigenbasis(a);
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                t[(i, j)] *= kernel(self.values[i] - self.values[j]);
            }
        }
        self.from_eigenbasis(&t)
    }

    /// `f(H) v` without forming `f(H)`.
    pub fn apply_fn_vec(&self, v: &[c64], f: impl Fn(f64) -> c64) -> Vec<c64> {
        let n = self.dim();
        let coeffs: Vec<c64> = (0..n)
            .map(|k| {
                let col = self.vectors.col_as_slice(k);
                f(self.values[k]) * dot(col, v)
            })
            .collect();
        let mut out = vec![ZERO; n];
        for (k, c) in coeffs.iter().enumerate() {
            for (o, u) in out.iter_mut().zip(self.vectors.col_as_slice(k)) {
                *o += c * u;
            }
        }
        out
    }

    pub fn vector(&self, k: usize) -> Vec<c64> {
        self.vectors.col_as_slice(k).to_vec()
    }
}

pub fn eigh(h: &CMat) -> Eigh {
    Eigh::new(h)
}

pub fn eigh_values(h: &CMat) -> Vec<f64> {
    let h = hermitian_part(h);
    let mut v: Vec<f64> = h
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigenvalue solve failed");
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// `exp(-i tau H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &CMat, tau: f64) -> CMat {
    eigh(h).apply_fn(|e| c64::cis(-tau * e))
}

pub fn matvec(a: &CMat, v: &[c64]) -> Vec<c64> {
    let n = a.nrows();
    let mut out = vec![ZERO; n];
    for (j, &vj) in v.iter().enumerate() {
        if vj == ZERO {
            continue;
        }
        let col = a.col_as_slice(j);
        for i in 0..n {
            out[i] += col[i] * vj;
        }
    }
    out
}

pub fn dot(u: &[c64], v: &[c64]) -> c64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm2(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `⟨ψ|A|ψ⟩`.
pub fn expectation(a: &CMat, psi: &[c64]) -> c64 {
    dot(psi, &matvec(a, psi))
}

/// `|ψ⟩⟨ψ|`.
pub fn projector(psi: &[c64]) -> CMat {
    Mat::from_fn(psi.len(), psi.len(), |i, j| psi[i] * psi[j].conj())
}

pub fn unitarity_defect(u: &CMat) -> f64 {
    let p = mul(&adjoint(u), u);
    max_abs(&(&p - &identity(u.nrows())))
}

/// Row-compressed complex matrix, used for Hamiltonians on large sectors.
#[derive(Clone, Debug)]
pub struct SparseMat {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<c64>,
}

impl SparseMat {
    pub fn from_dense(a: &CMat) -> Self {
        let n = a.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != ZERO {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseMat {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y += s * A x`.
    pub fn apply_add(&self, s: c64, x: &[c64], y: &mut [c64]) {
        for i in 0..self.n {
            let mut acc = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] += s * acc;
        }
    }

    pub fn to_dense(&self) -> CMat {
        let mut a = zeros(self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                a[(i, self.cols[k])] += self.vals[k];
            }
        }
        a
    }
}

/// `exp(-i tau H) v` by Lanczos with full reorthogonalisation and
/// sub-stepping, where `apply(x, y)` writes `H x` into `y`.
///
/// The local error estimate is the standard `β_m |[exp(-iτT_m)]_{m,1}|`
/// bound; sub-steps are halved until it falls below `tol`.
pub fn expm_krylov(
    apply: &dyn Fn(&[c64], &mut [c64]),
    v: &[c64],
    tau: f64,
    tol: f64,
    max_dim: usize,
) -> Vec<c64> {
    let mut state = v.to_vec();
    let mut remaining = tau;
    let mut step = tau;
    while remaining.abs() > 0.0 {
        if step.abs() > remaining.abs() {
            step = remaining;
        }
        match krylov_step(apply, &state, step, tol, max_dim) {
            Some(next) => {
                state = next;
                remaining -= step;
            }
            None => step *= 0.5,
        }
    }
    state
}

fn krylov_step(
    apply: &dyn Fn(&[c64], &mut [c64]),
    v: &[c64],
    tau: f64,
    tol: f64,
    max_dim: usize,
) -> Option<Vec<c64>> {
    let n = v.len();
    let beta0 = norm2(v);
    if beta0 == 0.0 {
        return Some(v.to_vec());
    }
    let m_max = max_dim.min(n).max(1);
    let mut basis: Vec<Vec<c64>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![ZERO; n];
    loop {
        let m = basis.len();
        w.iter_mut().for_each(|x| *x = ZERO);
        apply(&basis[m - 1], &mut w);
        let a = dot(&basis[m - 1], &w).re;
        alpha.push(a);
        // Full reorthogonalisation (twice is enough).
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = norm2(&w);
        // Exponential of the tridiagonal projection.
        let t = tridiag(&alpha, &beta);
        let e = eigh(&t);
        let col: Vec<c64> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|k| e.vectors[(i, k)] * c64::cis(-tau * e.values[k]) * e.vectors[(0, k)].conj())
                    .sum()
            })
            .collect();
        let err = b * col[m - 1].norm() * beta0;
        let exhausted = b <= 1e-14 * beta0.max(1.0);
        if err <= tol || exhausted || m == n {
            let mut out = vec![ZERO; n];
            for (k, q) in basis.iter().enumerate() {
                let c = col[k] * beta0;
                for (oi, qi) in out.iter_mut().zip(q) {
                    *oi += c * qi;
                }
            }
            return Some(out);
        }
        if m >= m_max {
            return None;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
}

fn tridiag(alpha: &[f64], beta: &[f64]) -> CMat {
    let m = alpha.len();
    Mat::from_fn(m, m, |i, j| {
        if i == j {
            c64::new(alpha[i], 0.0)
        } else if i + 1 == j {
            c64::new(beta[i], 0.0)
        } else if j + 1 == i {
            c64::new(beta[j], 0.0)
        } else {
            ZERO
        }
    })
}

/// Hermitian random matrix with Gaussian-like entries, for tests.
pub fn random_hermitian<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let a = Mat::from_fn(n, n, |_, _| {
        c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    hermitian_part(&a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn commutator_of_pauli_matrices() {
        let x = Mat::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO });
        let y = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => -I,
            (1, 0) => I,
            _ => ZERO,
        });
        let z = diag(&[1.0, -1.0]);
        let c = commutator(&x, &y);
        assert!(max_abs(&(&c - &scale(&z, c64::new(0.0, 2.0)))) < 1e-15);
        assert!((op_norm(&x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian(12, &mut rng);
        let e = eigh(&h);
        let back = e.apply_fn(|x| c64::new(x, 0.0));
        assert!(max_abs(&(&back - &h)) < 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn op_norm_non_hermitian() {
        // [[0, 2], [0, 0]] has norm 2.
        let a = Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { c64::new(2.0, 0.0) } else { ZERO });
        assert!((op_norm(&a) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn krylov_matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_hermitian(60, &mut rng);
        let sp = SparseMat::from_dense(&h);
        let v: Vec<c64> = (0..60).map(|i| c64::new((i as f64).sin(), 0.3)).collect();
        let apply = |x: &[c64], y: &mut [c64]| sp.apply_add(ONE, x, y);
        let got = expm_krylov(&apply, &v, 3.7, 1e-13, 30);
        let want = matvec(&expm_i_hermitian(&h, 3.7), &v);
        let err: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn sparse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(9, &mut rng);
        assert!(max_abs(&(&SparseMat::from_dense(&h).to_dense() - &h)) == 0.0);
    }
}
