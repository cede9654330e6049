//! Fermionic Fock spaces in the occupation basis.
//!
//! Basis state `b` is a bitstring with bit `j` set when mode `j` is
//! occupied; `|b⟩ = ∏_{j ascending} a*_j |0⟩`, so
//! `a*_j |b⟩ = (-1)^{#occupied modes below j} |b + e_j⟩`.
//! A space is either the full `2^n`-dimensional space or a fixed particle
//! number sector (bitstrings sorted ascending, looked up by binary search).

use faer::Mat;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, SiteSet, MODE_CAP};
use crate::linalg::{self, c64, CMat, SparseMat, ONE, ZERO};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockSpace {
    n_modes: usize,
    particles: Option<usize>,
    states: Vec<u64>,
}

impl FockSpace {
    pub fn full(n_modes: usize) -> Result<Self> {
        if n_modes > MODE_CAP {
            return Err(Error::domain(format!(
                "{n_modes} modes exceed the full-space cap of {MODE_CAP}"
            )));
        }
        Ok(FockSpace {
            n_modes,
            particles: None,
            states: (0..1u64 << n_modes).collect(),
        })
    }

    pub fn sector(n_modes: usize, particles: usize) -> Result<Self> {
        if n_modes > 24 {
            return Err(Error::domain(format!("{n_modes} modes exceed the sector cap of 24")));
        }
        if particles > n_modes {
            return Err(Error::domain(format!(
                "{particles} particles do not fit in {n_modes} modes"
            )));
        }
        let states = (0..1u64 << n_modes)
            .filter(|b| b.count_ones() as usize == particles)
            .collect();
        Ok(FockSpace {
            n_modes,
            particles: Some(particles),
            states,
        })
    }

    /// Full space or sector for all modes of a lattice.
    pub fn for_lattice(lat: &Lattice, particles: Option<usize>) -> Result<Self> {
        match particles {
            None => Self::full(lat.n_modes()),
            Some(n) => Self::sector(lat.n_modes(), n),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn is_full(&self) -> bool {
        self.particles.is_none()
    }

    pub fn particles(&self) -> Option<usize> {
        self.particles
    }

    pub fn state(&self, i: usize) -> u64 {
        self.states[i]
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn index_of(&self, b: u64) -> Option<usize> {
        match self.particles {
            None => ((b >> self.n_modes) == 0).then_some(b as usize),
            Some(_) => self.states.binary_search(&b).ok(),
        }
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.n_modes {
            Ok(())
        } else {
            Err(Error::domain(format!("mode {mode} out of range ({} modes)", self.n_modes)))
        }
    }
}

/// `a*_j |b⟩ = sign |b'⟩`, or `None` if mode `j` is occupied.
pub fn create_bits(b: u64, j: usize) -> Option<(u64, f64)> {
    if b >> j & 1 == 1 {
        return None;
    }
    Some((b | 1 << j, jw_sign(b, j)))
}

/// `a_j |b⟩ = sign |b'⟩`, or `None` if mode `j` is empty.
pub fn annihilate_bits(b: u64, j: usize) -> Option<(u64, f64)> {
    if b >> j & 1 == 0 {
        return None;
    }
    Some((b & !(1 << j), jw_sign(b, j)))
}

fn jw_sign(b: u64, j: usize) -> f64 {
    if (b & ((1u64 << j) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
}

/// Matrix of the product `ops[0] ops[1] ... ops[k-1]` (rightmost acts first).
/// In a sector basis the product must conserve particle number.
pub fn monomial(space: &FockSpace, ops: &[Ladder]) -> Result<CMat> {
    let mut net = 0i64;
    for op in ops {
        let (Ladder::Create(j) | Ladder::Annihilate(j)) = *op;
        space.check_mode(j)?;
        net += if matches!(op, Ladder::Create(_)) { 1 } else { -1 };
    }
    if !space.is_full() && net != 0 {
        return Err(Error::NumberConservation(
            "ladder monomial changes the particle number of a sector space".into(),
        ));
    }
    let mut m = linalg::zeros(space.dim());
    'col: for (col, &b) in space.states().iter().enumerate() {
        let mut state = b;
        let mut sign = 1.0;
        for op in ops.iter().rev() {
            let step = match *op {
                Ladder::Create(j) => create_bits(state, j),
                Ladder::Annihilate(j) => annihilate_bits(state, j),
            };
            match step {
                Some((s, sg)) => {
                    state = s;
                    sign *= sg;
                }
                None => continue 'col,
            }
        }
        if let Some(row) = space.index_of(state) {
            m[(row, col)] += c64::new(sign, 0.0);
        }
    }
    Ok(m)
}

/// `a*_j` on the full space.
pub fn creation(space: &FockSpace, mode: usize) -> Result<CMat> {
    monomial(space, &[Ladder::Create(mode)])
}

/// `a_j` on the full space.
pub fn annihilation(space: &FockSpace, mode: usize) -> Result<CMat> {
    monomial(space, &[Ladder::Annihilate(mode)])
}

/// `a*_p a_q`.
pub fn hopping(space: &FockSpace, p: usize, q: usize) -> Result<CMat> {
    monomial(space, &[Ladder::Create(p), Ladder::Annihilate(q)])
}

/// `Σ_{j ∈ modes} n_j`.
pub fn number_operator(space: &FockSpace, modes: &[usize]) -> Result<CMat> {
    for &j in modes {
        space.check_mode(j)?;
    }
    let d: Vec<f64> = space
        .states()
        .iter()
        .map(|&b| modes.iter().filter(|&&j| b >> j & 1 == 1).count() as f64)
        .collect();
    Ok(linalg::diag(&d))
}

/// `N_X = Σ_{x ∈ X} Σ_i n_{x,i}`.
pub fn site_number(space: &FockSpace, lat: &Lattice, set: &SiteSet) -> Result<CMat> {
    let modes: Vec<usize> = set
        .iter()
        .flat_map(|&x| (0..lat.spin()).map(move |i| lat.mode(x, i)))
        .collect();
    number_operator(space, &modes)
}

/// `(-1)^N`.
pub fn parity_operator(space: &FockSpace) -> CMat {
    let d: Vec<f64> = space
        .states()
        .iter()
        .map(|b| if b.count_ones() % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    linalg::diag(&d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

/// Parity of a matrix given in the full occupation basis of `states`.
fn parity_of(states: &[u64], m: &CMat, tol: f64) -> Parity {
    let (mut even, mut odd) = (false, false);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)].norm() > tol {
                if (states[i] ^ states[j]).count_ones() % 2 == 0 {
                    even = true;
                } else {
                    odd = true;
                }
            }
        }
    }
    match (even, odd) {
        (_, false) => Parity::Even,
        (false, true) => Parity::Odd,
        (true, true) => Parity::Mixed,
    }
}

/// An operator on the modes `modes` (ascending global indices), stored on
/// the local Fock space of those modes with local mode `k` ↔ `modes[k]`.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    modes: Vec<usize>,
    matrix: CMat,
}

impl LocalOperator {
    pub fn new(modes: Vec<usize>, matrix: CMat) -> Result<Self> {
        if modes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("local modes must be strictly ascending"));
        }
        if modes.len() > MODE_CAP {
            return Err(Error::domain("local operator support exceeds the mode cap"));
        }
        let d = 1usize << modes.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::domain(format!(
                "local matrix must be {d}x{d} for {} modes",
                modes.len()
            )));
        }
        Ok(LocalOperator { modes, matrix })
    }

    /// Builds the local matrix with a closure receiving the local full space.
    pub fn build(
        modes: Vec<usize>,
        f: impl FnOnce(&FockSpace) -> Result<CMat>,
    ) -> Result<Self> {
        let local = FockSpace::full(modes.len())?;
        let m = f(&local)?;
        Self::new(modes, m)
    }

    /// All modes of the given sites.
    pub fn on_sites(
        lat: &Lattice,
        set: &SiteSet,
        f: impl FnOnce(&FockSpace) -> Result<CMat>,
    ) -> Result<Self> {
        Self::build(site_modes(lat, set), f)
    }

    pub fn identity(modes: Vec<usize>) -> Self {
        let d = 1usize << modes.len();
        LocalOperator {
            modes,
            matrix: linalg::identity(d),
        }
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn parity(&self) -> Parity {
        let states: Vec<u64> = (0..self.matrix.nrows() as u64).collect();
        parity_of(&states, &self.matrix, 0.0)
    }

    /// The even part `(A + PAP)/2`, `P` the local parity: odd entries zeroed.
    pub fn even_part(&self) -> LocalOperator {
        let m = Mat::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, j| {
            if ((i ^ j) as u64).count_ones() % 2 == 0 {
                self.matrix[(i, j)]
            } else {
                ZERO
            }
        });
        LocalOperator {
            modes: self.modes.clone(),
            matrix: m,
        }
    }

    pub fn is_number_conserving(&self) -> bool {
        let m = &self.matrix;
        (0..m.ncols()).all(|j| {
            (0..m.nrows())
                .all(|i| m[(i, j)] == ZERO || (i as u64).count_ones() == (j as u64).count_ones())
        })
    }

    pub fn norm(&self) -> f64 {
        linalg::op_norm(&self.matrix)
    }

    /// Local index of mode `global`, if it is in the support.
    pub fn local_mode(&self, global: usize) -> Option<usize> {
        self.modes.binary_search(&global).ok()
    }

    /// Re-expresses the operator on a larger ascending mode list.
    pub fn extend_to(&self, modes: &[usize]) -> Result<LocalOperator> {
        let space = FockSpace::full(modes.len())?;
        let positions: Vec<usize> = self
            .modes
            .iter()
            .map(|m| {
                modes
                    .binary_search(m)
                    .map_err(|_| Error::domain("target modes do not contain the support"))
            })
            .collect::<Result<_>>()?;
        let shifted = LocalOperator {
            modes: positions,
            matrix: self.matrix.clone(),
        };
        LocalOperator::new(modes.to_vec(), embed(&shifted, &space)?)
    }
}

/// Modes of a site set, ascending.
pub fn site_modes(lat: &Lattice, set: &SiteSet) -> Vec<usize> {
    set.iter()
        .flat_map(|&x| (0..lat.spin()).map(move |i| lat.mode(x, i)))
        .collect()
}

/// Sign relating the global occupation basis to the ordering in which the
/// `support` modes (bit mask) come first: `(-1)^{#(i ∉ S occupied, j ∈ S occupied, i < j)}`.
pub(crate) fn reorder_sign(b: u64, support_mask: u64) -> f64 {
    let rest = b & !support_mask;
    let mut s = b & support_mask;
    let mut count = 0u32;
    while s != 0 {
        let j = s.trailing_zeros();
        count += (rest & ((1u64 << j) - 1)).count_ones();
        s &= s - 1;
    }
    if count % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Gathers the support bits of `b` into a local index.
pub(crate) fn gather(b: u64, modes: &[usize]) -> usize {
    modes
        .iter()
        .enumerate()
        .fold(0usize, |acc, (k, &m)| acc | (((b >> m) & 1) as usize) << k)
}

/// Scatters a local index onto the support modes.
pub(crate) fn scatter(local: usize, modes: &[usize]) -> u64 {
    modes
        .iter()
        .enumerate()
        .fold(0u64, |acc, (k, &m)| acc | (((local >> k) & 1) as u64) << m)
}

pub(crate) fn mask(modes: &[usize]) -> u64 {
    modes.iter().fold(0u64, |acc, &m| acc | 1 << m)
}

fn embed_entries(
    op: &LocalOperator,
    space: &FockSpace,
    mut emit: impl FnMut(usize, usize, c64),
) -> Result<()> {
    match op.parity() {
        Parity::Even => {}
        p => {
            return Err(Error::Parity(format!(
                "only even operators can be embedded (got {p:?})"
            )))
        }
    }
    if let Some(&m) = op.modes.last() {
        space.check_mode(m)?;
    }
    if !space.is_full() && !op.is_number_conserving() {
        return Err(Error::NumberConservation(
            "embedding into a sector requires a number-conserving operator".into(),
        ));
    }
    let smask = mask(&op.modes);
    let d = op.matrix.nrows();
    // Column-wise nonzero pattern of the local matrix.
    let nz: Vec<Vec<(usize, c64)>> = (0..d)
        .map(|s| {
            (0..d)
                .filter_map(|r| {
                    let v = op.matrix[(r, s)];
                    (v != ZERO).then_some((r, v))
                })
                .collect()
        })
        .collect();
    for (col, &b) in space.states().iter().enumerate() {
        let s = gather(b, &op.modes);
        if nz[s].is_empty() {
            continue;
        }
        let rest = b & !smask;
        let sb = reorder_sign(b, smask);
        for &(r, v) in &nz[s] {
            let b2 = rest | scatter(r, &op.modes);
            let row = space
                .index_of(b2)
                .expect("number-conserving image stays in the sector");
            emit(row, col, v * (sb * reorder_sign(b2, smask)));
        }
    }
    Ok(())
}

/// `op ⊗ 1` on `space`, for even operators (number-conserving in sectors).
pub fn embed(op: &LocalOperator, space: &FockSpace) -> Result<CMat> {
    let mut m = linalg::zeros(space.dim());
    embed_entries(op, space, |r, c, v| m[(r, c)] += v)?;
    Ok(m)
}

/// Sparse version of [`embed`].
pub fn embed_sparse(op: &LocalOperator, space: &FockSpace) -> Result<SparseMat> {
    Ok(SparseMat::from_dense(&embed(op, space)?))
}

/// Adds `scale · embed(op)` to `acc`.
pub fn embed_add(acc: &mut CMat, scale: c64, op: &LocalOperator, space: &FockSpace) -> Result<()> {
    embed_entries(op, space, |r, c, v| acc[(r, c)] += scale * v)
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    linalg::op_norm(a)
}

/// Lowest eigenpair of a Hermitian operator together with the gap.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub vector: Vec<c64>,
    pub gap: f64,
    pub unique: bool,
}

impl GroundState {
    pub fn density(&self) -> DensityState {
        DensityState::pure(&self.vector)
    }

    pub fn expect(&self, a: &CMat) -> c64 {
        linalg::expectation(a, &self.vector)
    }
}

/// Ground state of `h` with uniqueness decided by `gap > degeneracy_tol`
/// (default `1e-8·‖H‖` when `None`).
pub fn ground_state(h: &CMat, degeneracy_tol: Option<f64>) -> Result<GroundState> {
    let eig = linalg::eigh(h);
    ground_state_from(&eig, h, degeneracy_tol)
}

pub fn ground_state_from(eig: &linalg::Eigh, h: &CMat, degeneracy_tol: Option<f64>) -> Result<GroundState> {
    let scale = eig
        .values
        .first()
        .map(|e| e.abs())
        .unwrap_or(0.0)
        .max(eig.values.last().map(|e| e.abs()).unwrap_or(0.0));
    let defect = linalg::hermiticity_defect(h);
    if defect > 1e-10 * scale.max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    let tol = degeneracy_tol.unwrap_or(1e-8 * scale);
    let gap = if eig.dim() > 1 {
        eig.values[1] - eig.values[0]
    } else {
        f64::INFINITY
    };
    Ok(GroundState {
        energy: eig.values[0],
        vector: eig.vector(0),
        gap,
        unique: gap > tol,
    })
}

/// Density matrix of a state.
#[derive(Clone, Debug)]
pub struct DensityState {
    pub matrix: CMat,
}

impl DensityState {
    pub fn pure(psi: &[c64]) -> Self {
        let n = linalg::norm2(psi);
        let v: Vec<c64> = psi.iter().map(|x| x / n).collect();
        DensityState {
            matrix: linalg::projector(&v),
        }
    }

    /// `tr(ρ A)`.
    pub fn expect(&self, a: &CMat) -> c64 {
        linalg::trace_product(&self.matrix, a)
    }

    /// Checks trace one, Hermiticity and positivity within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let tr = linalg::trace(&self.matrix);
        (tr - ONE).norm() <= tol
            && linalg::is_hermitian(&self.matrix, tol)
            && linalg::eigh_values(&self.matrix).first().map_or(true, |&e| e >= -tol)
    }
}

/// Which blocks a random local operator may populate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomKind {
    Even,
    NumberConserving,
}

/// Random Hermitian local operator on `n_local` modes with entries in the
/// unit box, restricted to the requested symmetry blocks.
pub fn random_hermitian_local<R: Rng + ?Sized>(
    modes: Vec<usize>,
    kind: RandomKind,
    rng: &mut R,
) -> Result<LocalOperator> {
    let d = 1usize << modes.len();
    let raw = Mat::from_fn(d, d, |i, j| {
        let allowed = match kind {
            RandomKind::Even => (i ^ j).count_ones() % 2 == 0,
            RandomKind::NumberConserving => i.count_ones() == j.count_ones(),
        };
        let re = rng.random::<f64>() - 0.5;
        let im = rng.random::<f64>() - 0.5;
        if allowed {
            c64::new(re, im)
        } else {
            ZERO
        }
    });
    LocalOperator::new(modes, linalg::hermitian_part(&raw))
}
