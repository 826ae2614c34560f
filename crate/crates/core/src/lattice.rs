//! Discrete frequency lattice of a periodic box and zero-sum tuple enumeration.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::ops::{Add, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cutoff;
use crate::error::{Error, Result};

/// A physical frequency `ζ = (ξ, η)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FreqPoint {
    pub xi: f64,
    pub eta: f64,
}

impl FreqPoint {
    pub const ZERO: FreqPoint = FreqPoint { xi: 0.0, eta: 0.0 };

    pub const fn new(xi: f64, eta: f64) -> Self {
        Self { xi, eta }
    }

    pub fn norm(self) -> f64 {
        self.xi.hypot(self.eta)
    }

    /// Polar angle in `(-π, π]`.
    pub fn angle(self) -> f64 {
        self.eta.atan2(self.xi)
    }

    /// Dispersion relation `ξ³ + η³`.
    pub fn dispersion(self) -> f64 {
        self.xi.powi(3) + self.eta.powi(3)
    }

    /// `ξ + η`, the symbol of `∂x + ∂y` up to the factor `i`.
    pub fn diag(self) -> f64 {
        self.xi + self.eta
    }
}

impl Add for FreqPoint {
    type Output = FreqPoint;
    fn add(self, o: FreqPoint) -> FreqPoint {
        FreqPoint::new(self.xi + o.xi, self.eta + o.eta)
    }
}

impl Sub for FreqPoint {
    type Output = FreqPoint;
    fn sub(self, o: FreqPoint) -> FreqPoint {
        FreqPoint::new(self.xi - o.xi, self.eta - o.eta)
    }
}

impl Neg for FreqPoint {
    type Output = FreqPoint;
    fn neg(self) -> FreqPoint {
        FreqPoint::new(-self.xi, -self.eta)
    }
}

/// Integer wavenumber pair labelling a lattice mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode {
    pub kx: i64,
    pub ky: i64,
}

impl Mode {
    pub const fn new(kx: i64, ky: i64) -> Self {
        Self { kx, ky }
    }
}

impl Add for Mode {
    type Output = Mode;
    fn add(self, o: Mode) -> Mode {
        Mode::new(self.kx + o.kx, self.ky + o.ky)
    }
}

impl Neg for Mode {
    type Output = Mode;
    fn neg(self) -> Mode {
        Mode::new(-self.kx, -self.ky)
    }
}

/// Dual lattice of the periodic box `[0, box_length)²` with `modes` points per axis.
///
/// Wavenumbers along each axis run over `[-modes/2, modes/2)`; the physical
/// frequency of wavenumber `k` is `k * spacing` with `spacing = 2π / box_length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLattice {
    box_length: f64,
    modes: usize,
}

impl FrequencyLattice {
    pub fn new(box_length: f64, modes: usize) -> Result<Self> {
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidLattice(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        if modes < 4 || modes % 2 != 0 {
            return Err(Error::InvalidLattice(format!(
                "modes per axis must be even and at least 4, got {modes}"
            )));
        }
        Ok(Self { box_length, modes })
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    pub fn area(&self) -> f64 {
        self.box_length * self.box_length
    }

    /// Number of lattice points, `modes²`.
    pub fn len(&self) -> usize {
        self.modes * self.modes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest wavenumber magnitude on either axis, `modes / 2`.
    pub fn half(&self) -> i64 {
        (self.modes / 2) as i64
    }

    /// Signed wavenumber stored at FFT index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.modes as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT index holding wavenumber `k`, if `k` is in range.
    pub fn index(&self, k: i64) -> Option<usize> {
        let h = self.half();
        if k < -h || k >= h {
            return None;
        }
        let n = self.modes as i64;
        Some(k.rem_euclid(n) as usize)
    }

    pub fn contains(&self, m: Mode) -> bool {
        let h = self.half();
        (-h..h).contains(&m.kx) && (-h..h).contains(&m.ky)
    }

    /// Flat row-major offset `ix * modes + iy` of an in-range mode.
    pub fn offset(&self, m: Mode) -> Option<usize> {
        Some(self.index(m.kx)? * self.modes + self.index(m.ky)?)
    }

    /// Mode stored at flat offset `o`.
    pub fn mode_at(&self, o: usize) -> Mode {
        Mode::new(
            self.wavenumber(o / self.modes),
            self.wavenumber(o % self.modes),
        )
    }

    pub fn frequency(&self, k: i64) -> f64 {
        k as f64 * self.spacing()
    }

    pub fn point(&self, m: Mode) -> FreqPoint {
        FreqPoint::new(self.frequency(m.kx), self.frequency(m.ky))
    }

    /// Wavenumber whose frequency is `f`, if `f` lies on the lattice and in range.
    pub fn wavenumber_of(&self, f: f64) -> Option<i64> {
        let x = f / self.spacing();
        let k = x.round();
        if (x - k).abs() > 1e-9 * x.abs().max(1.0) {
            return None;
        }
        let k = k as i64;
        self.index(k).map(|_| k)
    }

    pub fn mode_of(&self, z: FreqPoint) -> Option<Mode> {
        Some(Mode::new(
            self.wavenumber_of(z.xi)?,
            self.wavenumber_of(z.eta)?,
        ))
    }

    /// All in-range modes in flat-offset order.
    pub fn all_modes(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.len()).map(|o| self.mode_at(o))
    }

    /// Modes where `psi_N(|ζ|) != 0` (or `chi(|ζ|) != 0` for the core `N = 0`).
    pub fn dyadic_shell(&self, n: u64) -> Result<Vec<Mode>> {
        check_dyadic(n)?;
        Ok(self
            .all_modes()
            .filter(|&m| cutoff::dyadic_weight(self.point(m).norm(), n) != 0.0)
            .collect())
    }

    /// Dyadic scales `2, 4, ...` whose shells reach the lattice, the companions
    /// of the core in the Littlewood-Paley partition of unity.
    pub fn shell_scales(&self) -> Vec<u64> {
        let rmax = self.spacing() * self.half() as f64 * std::f64::consts::SQRT_2;
        let mut out = Vec::new();
        let mut n = 2u64;
        while (n as f64) / 2.0 < rmax + 1.0 {
            out.push(n);
            n *= 2;
        }
        out
    }
}

/// Accepts `0` (the core) and powers of two.
pub fn check_dyadic(n: u64) -> Result<()> {
    if n == 0 || n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotDyadic(n as f64))
    }
}

/// Three frequencies summing to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroSumTriple(pub [FreqPoint; 3]);

impl ZeroSumTriple {
    /// Closes `(ζ1, ζ2)` with `ζ3 = -(ζ1 + ζ2)`.
    pub fn from_pair(z1: FreqPoint, z2: FreqPoint) -> Self {
        Self([z1, z2, -(z1 + z2)])
    }

    pub fn from_modes(lattice: &FrequencyLattice, m1: Mode, m2: Mode) -> Self {
        let m3 = -(m1 + m2);
        Self([lattice.point(m1), lattice.point(m2), lattice.point(m3)])
    }

    pub fn points(&self) -> &[FreqPoint; 3] {
        &self.0
    }

    pub fn negate(&self) -> Self {
        Self(self.0.map(|z| -z))
    }

    pub fn permuted(&self, p: [usize; 3]) -> Self {
        Self([self.0[p[0]], self.0[p[1]], self.0[p[2]]])
    }
}

/// Four frequencies summing to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroSumQuad(pub [FreqPoint; 4]);

impl ZeroSumQuad {
    pub fn from_three(z1: FreqPoint, z2: FreqPoint, z3: FreqPoint) -> Self {
        Self([z1, z2, z3, -(z1 + z2 + z3)])
    }

    /// The triple `(ζ1, ζ2, ζ3 + ζ4)`.
    pub fn collapse(&self) -> ZeroSumTriple {
        let [z1, z2, z3, z4] = self.0;
        ZeroSumTriple([z1, z2, z3 + z4])
    }
}

/// Where a slot of a zero-sum triple may take its frequency.
#[derive(Debug, Clone)]
pub enum Slot {
    /// Any in-range lattice mode.
    Lattice,
    /// A finite set of modes.
    Modes(Vec<Mode>),
    /// No restriction (only meaningful for the closing slot).
    Free,
}

/// Outcome of a triple enumeration: emitted triples plus the regime used.
#[derive(Debug, Clone)]
pub struct TripleSet {
    pub triples: Vec<[Mode; 3]>,
    /// `true` when every pair in the first two slots was visited.
    pub exhaustive: bool,
    /// Number of `(slot1, slot2)` pairs visited or drawn.
    pub visited: u64,
}

/// Enumerates zero-sum triples `(m1, m2, -(m1+m2))` with `m1` and `m2` drawn from the
/// first two slots and the closing mode required to lie in the third slot.
///
/// Exhaustive when `|slot1| * |slot2| <= budget`; otherwise `budget` pairs are drawn
/// uniformly (with replacement) from a ChaCha8 stream seeded by `seed`.
pub fn zero_sum_triples(
    lattice: &FrequencyLattice,
    slots: [&Slot; 3],
    budget: u64,
    seed: u64,
) -> Result<TripleSet> {
    if budget == 0 {
        return Err(Error::InvalidParameter("budget must be at least 1".into()));
    }
    let expand = |s: &Slot| -> Vec<Mode> {
        match s {
            Slot::Lattice | Slot::Free => lattice.all_modes().collect(),
            Slot::Modes(v) => v.clone(),
        }
    };
    let a = expand(slots[0]);
    let b = expand(slots[1]);
    let closing: Box<dyn Fn(Mode) -> bool> = match slots[2] {
        Slot::Free => Box::new(|_| true),
        Slot::Lattice => Box::new(|m| lattice.contains(m)),
        Slot::Modes(v) => {
            let set: HashSet<Mode> = v.iter().copied().collect();
            Box::new(move |m| set.contains(&m))
        }
    };
    if a.is_empty() || b.is_empty() {
        return Ok(TripleSet {
            triples: Vec::new(),
            exhaustive: true,
            visited: 0,
        });
    }
    let total = a.len() as u64 * b.len() as u64;
    let mut triples = Vec::new();
    if total <= budget {
        for &m1 in &a {
            for &m2 in &b {
                let m3 = -(m1 + m2);
                if closing(m3) {
                    triples.push([m1, m2, m3]);
                }
            }
        }
        return Ok(TripleSet {
            triples,
            exhaustive: true,
            visited: total,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget {
        let m1 = a[rng.gen_range(0..a.len())];
        let m2 = b[rng.gen_range(0..b.len())];
        let m3 = -(m1 + m2);
        if closing(m3) {
            triples.push([m1, m2, m3]);
        }
    }
    Ok(TripleSet {
        triples,
        exhaustive: false,
        visited: budget,
    })
}
