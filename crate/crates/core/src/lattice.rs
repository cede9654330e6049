//! Finite boxes of Z^d with open or periodic metrics.
//!
//! A box of side `L` has coordinates `lo..=lo+L-1` in every direction with
//! `lo = -(L-1)/2` (integer division), so odd sides give the symmetric box
//! `{-k..k}^d` and even sides carry one extra site on the positive side.
//! Sites are numbered lexicographically (first coordinate most significant);
//! this order fixes the Jordan-Wigner string order downstream.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of fermionic modes `r·|Λ|`.
pub const MODE_CAP: usize = 16;

/// Sorted set of site indices into a [`Lattice`].
pub type SiteSet = BTreeSet<usize>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Open,
    Torus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    dim: usize,
    side: usize,
    lo: i64,
    geometry: Geometry,
    spin: usize,
    coords: Vec<Vec<i64>>,
}

impl Lattice {
    /// Box of side `side` in `dim` dimensions with `spin` internal modes per site.
    pub fn new(dim: usize, side: usize, geometry: Geometry, spin: usize) -> Result<Self> {
        Self::with_mode_cap(dim, side, geometry, spin, MODE_CAP)
    }

    /// The symmetric box `{-k..k}^d`.
    pub fn cube(dim: usize, radius: usize, geometry: Geometry, spin: usize) -> Result<Self> {
        Self::new(dim, 2 * radius + 1, geometry, spin)
    }

    pub fn with_mode_cap(
        dim: usize,
        side: usize,
        geometry: Geometry,
        spin: usize,
        mode_cap: usize,
    ) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::domain(format!("dimension {dim} not supported (1 or 2)")));
        }
        if side == 0 || spin == 0 {
            return Err(Error::domain("lattice side and spin must be positive"));
        }
        let n_sites = side.pow(dim as u32);
        if n_sites * spin > mode_cap {
            return Err(Error::domain(format!(
                "{} modes exceed the cap of {mode_cap}",
                n_sites * spin
            )));
        }
        let lo = -((side as i64 - 1) / 2);
        let coords = (0..n_sites)
            .map(|mut idx| {
                let mut c = vec![0i64; dim];
                for i in (0..dim).rev() {
                    c[i] = lo + (idx % side) as i64;
                    idx /= side;
                }
                c
            })
            .collect();
        Ok(Lattice {
            dim,
            side,
            lo,
            geometry,
            spin,
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn spin(&self) -> usize {
        self.spin
    }

    /// Largest `k` with `Λ_k` inside the box.
    pub fn radius(&self) -> usize {
        (-self.lo) as usize
    }

    pub fn n_sites(&self) -> usize {
        self.coords.len()
    }

    pub fn n_modes(&self) -> usize {
        self.n_sites() * self.spin
    }

    /// Global mode index of internal state `i` at site `x`.
    pub fn mode(&self, x: usize, i: usize) -> usize {
        x * self.spin + i
    }

    pub fn coords(&self, x: usize) -> &[i64] {
        &self.coords[x]
    }

    pub fn sites(&self) -> std::ops::Range<usize> {
        0..self.n_sites()
    }

    pub fn all_sites(&self) -> SiteSet {
        self.sites().collect()
    }

    /// Index of the site with the given coordinates, if inside the box.
    pub fn index_of(&self, c: &[i64]) -> Option<usize> {
        if c.len() != self.dim {
            return None;
        }
        let mut idx = 0usize;
        for &ci in c {
            let off = ci - self.lo;
            if off < 0 || off >= self.side as i64 {
                return None;
            }
            idx = idx * self.side + off as usize;
        }
        Some(idx)
    }

    fn check(&self, x: usize) -> Result<()> {
        if x < self.n_sites() {
            Ok(())
        } else {
            Err(Error::domain(format!("site {x} outside the box")))
        }
    }

    /// Host metric: ℓ1 for open boxes, per-coordinate wrap-around minimum for tori.
    pub fn metric(&self, x: usize, y: usize) -> Result<usize> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.dist(x, y))
    }

    /// Host metric without bounds checks.
    pub fn dist(&self, x: usize, y: usize) -> usize {
        let l = self.side as i64;
        self.coords[x]
            .iter()
            .zip(&self.coords[y])
            .map(|(a, b)| {
                let d = (a - b).abs();
                match self.geometry {
                    Geometry::Open => d,
                    Geometry::Torus => d.min(l - d),
                }
            })
            .sum::<i64>() as usize
    }

    /// ℓ1 distance of the coordinates, ignoring periodicity.
    pub fn l1(&self, x: usize, y: usize) -> usize {
        self.coords[x]
            .iter()
            .zip(&self.coords[y])
            .map(|(a, b)| (a - b).abs())
            .sum::<i64>() as usize
    }

    /// Diameter under the host metric (0 for the empty set and singletons).
    pub fn diam(&self, set: &SiteSet) -> usize {
        self.diam_by(set, |x, y| self.dist(x, y))
    }

    /// Diameter under the ℓ1 metric.
    pub fn diam_l1(&self, set: &SiteSet) -> usize {
        self.diam_by(set, |x, y| self.l1(x, y))
    }

    fn diam_by(&self, set: &SiteSet, d: impl Fn(usize, usize) -> usize) -> usize {
        let v: Vec<usize> = set.iter().copied().collect();
        let mut m = 0;
        for (i, &x) in v.iter().enumerate() {
            for &y in &v[i + 1..] {
                m = m.max(d(x, y));
            }
        }
        m
    }

    /// Host distance between two sets; `None` if either is empty.
    pub fn set_distance(&self, a: &SiteSet, b: &SiteSet) -> Option<usize> {
        a.iter()
            .flat_map(|&x| b.iter().map(move |&y| (x, y)))
            .map(|(x, y)| self.dist(x, y))
            .min()
    }

    /// `{z : dist(z, X) ≤ delta}` under the host metric.
    pub fn fatten(&self, set: &SiteSet, delta: f64) -> Result<SiteSet> {
        for &x in set {
            self.check(x)?;
        }
        Ok(self
            .sites()
            .filter(|&z| set.iter().any(|&x| self.dist(z, x) as f64 <= delta))
            .collect())
    }

    /// Whether site `x` lies in `Λ_m = {|x_i| ≤ m}`.
    pub fn in_box(&self, x: usize, m: usize) -> bool {
        self.coords[x].iter().all(|c| c.unsigned_abs() as usize <= m)
    }

    /// Sites of the box intersected with `Λ_m`.
    pub fn box_sites(&self, m: usize) -> SiteSet {
        self.sites().filter(|&x| self.in_box(x, m)).collect()
    }

    /// ℓ1 distance from `X` to the complement of `Λ_m` in Z^d; 0 if `X` leaves `Λ_m`.
    pub fn boundary_distance(&self, set: &SiteSet, m: usize) -> usize {
        set.iter()
            .map(|&x| {
                if !self.in_box(x, m) {
                    return 0;
                }
                self.coords[x]
                    .iter()
                    .map(|c| m + 1 - c.unsigned_abs() as usize)
                    .min()
                    .unwrap_or(0)
            })
            .min()
            .unwrap_or(0)
    }

    /// The site `x + step·e_axis`, wrapping on tori; `None` if it leaves an open box.
    pub fn shift(&self, x: usize, axis: usize, step: i64) -> Option<usize> {
        let mut c = self.coords[x].clone();
        c[axis] += step;
        if self.geometry == Geometry::Torus {
            let l = self.side as i64;
            c[axis] = (c[axis] - self.lo).rem_euclid(l) + self.lo;
        }
        self.index_of(&c)
    }

    /// Unordered site pairs `{x, x + range·e_i}` for every axis, without repeats.
    pub fn bonds(&self, range: usize) -> Vec<(usize, usize)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for axis in 0..self.dim {
            for x in self.sites() {
                if let Some(y) = self.shift(x, axis, range as i64) {
                    if x != y && seen.insert((x.min(y), x.max(y))) {
                        out.push((x, y));
                    }
                }
            }
        }
        out
    }
}
