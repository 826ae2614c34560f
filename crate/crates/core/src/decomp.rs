//! Frequency localization: Littlewood-Paley pieces `P_N`, modulation pieces `Q_L`
//! on space-time spectra, angular sectors `R^A_j`, square tiles and the Whitney
//! classification of tile pairs with its almost-orthogonality counts.
//!
//! The tile geometry is scale free. Tiles of side `N1 / A` are addressed by integer
//! indices, and all minima of the interaction functionals over closed tiles are
//! computed exactly in 128-bit integer arithmetic on tile coordinates, so Whitney
//! membership never depends on sampling or rounding.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cutoff::{beta_support, dyadic_weight};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::{check_dyadic, FreqPoint, FrequencyLattice};
use crate::solver::Trajectory;

/// `P_N u`: multiplication by `psi_N(|ζ|)`, or by the core `chi(|ζ|)` for `N = 0`.
pub fn project_pn(u: &SpectralField, n: u64) -> Result<SpectralField> {
    check_dyadic(n)?;
    Ok(u.apply_symbol(|z| dyadic_weight(z.norm(), n)))
}

/// The Littlewood-Paley scales whose pieces sum to the identity on `lattice`:
/// the core followed by `2, 4, ...`.
pub fn pn_scales(lattice: &FrequencyLattice) -> Vec<u64> {
    let mut v = vec![0];
    v.extend(lattice.shell_scales());
    v
}

/// Discrete space-time Fourier transform of a uniformly sampled trajectory.
///
/// A window of `M` samples spaced `dt` determines each time frequency only modulo
/// `2π/dt`. For every spatial mode the representative is chosen in the band of
/// width `2π/dt` centred on the dispersion `ξ³+η³`, so modulations are measured
/// from the nearest sheet of the dispersion surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeSpectrum {
    lattice: FrequencyLattice,
    samples: usize,
    dt: f64,
    /// `data[o * samples + k]`: mode offset `o`, time frequency index `k`.
    data: Vec<Complex64>,
}

impl SpaceTimeSpectrum {
    /// Transforms the first `samples` states (all when `None`) of a trajectory.
    /// The window is treated as periodic in time.
    pub fn from_trajectory(tr: &Trajectory, samples: Option<usize>) -> Result<Self> {
        let m = samples.unwrap_or(tr.len());
        if m < 2 || m > tr.len() {
            return Err(Error::TrajectoryTooShort(format!(
                "{m} samples requested from {} states",
                tr.len()
            )));
        }
        let lattice = *tr.lattice();
        let dt = tr.sample_dt().abs();
        let len = lattice.len();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
        let rows: Vec<Vec<Complex64>> = (0..len)
            .into_par_iter()
            .map(|o| {
                let mut row: Vec<Complex64> =
                    tr.states[..m].iter().map(|s| s.coeffs()[o]).collect();
                // exp(-i τ t) kernel with τ ≥ 0 index order
                fft.process(&mut row);
                row.iter_mut().for_each(|v| *v /= m as f64);
                row
            })
            .collect();
        let data = rows.into_iter().flatten().collect();
        Ok(Self {
            lattice,
            samples: m,
            dt,
            data,
        })
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        &self.lattice
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Length of the time window `M dt`.
    pub fn window(&self) -> f64 {
        self.samples as f64 * self.dt
    }

    /// Spacing of the time-frequency grid, `2π / (M dt)`.
    pub fn tau_spacing(&self) -> f64 {
        2.0 * PI / self.window()
    }

    /// Lifted time frequency of bin `k` for the mode at offset `o`.
    pub fn tau(&self, o: usize, k: usize) -> f64 {
        let d = self.lattice.point(self.lattice.mode_at(o)).dispersion();
        let dtau = self.tau_spacing();
        let period = self.samples as f64 * dtau;
        let base = k as f64 * dtau;
        // shift by whole periods into [d - period/2, d + period/2)
        let shift = ((d - base) / period + 0.5).floor();
        base + shift * period
    }

    /// `|τ - ξ³ - η³|` for bin `k` of mode `o`.
    pub fn modulation(&self, o: usize, k: usize) -> f64 {
        let d = self.lattice.point(self.lattice.mode_at(o)).dispersion();
        (self.tau(o, k) - d).abs()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// `∫∫ |u|² dx dt` over the window.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.lattice.area() * self.window()
    }

    /// A modulation scale `L` is resolvable when the time-frequency grid places
    /// several points inside `[L/2, 2L]`, that is when the window is at least
    /// `4π/L` long (`2π` for the core).
    pub fn check_resolves(&self, l: u64) -> Result<()> {
        check_dyadic(l)?;
        let dtau = self.tau_spacing();
        let need = if l == 0 { 1.0 } else { l as f64 / 2.0 };
        if dtau > need {
            return Err(Error::TrajectoryTooShort(format!(
                "time-frequency spacing {dtau} cannot resolve modulation scale {l}; need a window of at least {}",
                2.0 * PI / need
            )));
        }
        Ok(())
    }

    /// `Q_L`: multiplication by `psi_L(|τ - ξ³ - η³|)` (the core `chi` for `L = 0`).
    pub fn project_ql(&self, l: u64) -> Result<Self> {
        self.check_resolves(l)?;
        let mut out = self.clone();
        let m = self.samples;
        for (i, v) in out.data.iter_mut().enumerate() {
            let (o, k) = (i / m, i % m);
            *v *= dyadic_weight(self.modulation(o, k), l);
        }
        Ok(out)
    }

    /// Modulation scales whose pieces sum to the identity on this spectrum.
    pub fn ql_scales(&self) -> Vec<u64> {
        let mut max: f64 = 0.0;
        for o in 0..self.lattice.len() {
            for k in 0..self.samples {
                max = max.max(self.modulation(o, k));
            }
        }
        let mut v = vec![0];
        let mut l = 2u64;
        while (l as f64) / 2.0 <= max + 1.0 {
            v.push(l);
            l *= 2;
        }
        v
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.lattice != other.lattice || self.samples != other.samples || self.dt != other.dt {
            return Err(Error::LatticeMismatch);
        }
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.lattice.area() * self.window()).sqrt()
    }
}

/// Angular sector `Θ^A_j`: two antipodal arcs of width `4π/A` centred at `jπ/A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SectorIndex {
    pub a: u64,
    pub j: u64,
}

fn check_sector_scale(a: u64) -> Result<()> {
    if a < 64 || !a.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "sector scale A = {a} must be a power of two, at least 64"
        )));
    }
    Ok(())
}

/// Sector weights `β^A_j(θ)` at angle `θ` for all `j` where they are positive.
///
/// `β^A_j(θ) = Σ_{i ≡ j (mod A)} β_i(Aθ/π)`, which is π-periodic in `θ` and sums to
/// one over `j ∈ [0, A)`.
pub fn sector_weights(theta: f64, a: u64) -> Result<Vec<(SectorIndex, f64)>> {
    check_sector_scale(a)?;
    let t = a as f64 * theta / PI;
    let mut out: Vec<(SectorIndex, f64)> = Vec::with_capacity(4);
    for (i, w) in beta_support(t) {
        let j = i.rem_euclid(a as i64) as u64;
        match out.iter_mut().find(|(s, _)| s.j == j) {
            Some(e) => e.1 += w,
            None => out.push((SectorIndex { a, j }, w)),
        }
    }
    out.sort_by_key(|(s, _)| s.j);
    Ok(out)
}

/// Sectors containing `ζ` with their weights.
pub fn sector_of(z: FreqPoint, a: u64) -> Result<Vec<(SectorIndex, f64)>> {
    if z.xi == 0.0 && z.eta == 0.0 {
        return Err(Error::ZeroAngle);
    }
    sector_weights(z.angle(), a)
}

/// `R^A_j u`: multiplication by `β^A_j(θ)`. The zero mode has no direction and is
/// assigned to sector zero so that the sectors still sum to the identity.
pub fn project_sector(u: &SpectralField, s: SectorIndex) -> Result<SpectralField> {
    check_sector_scale(s.a)?;
    Ok(u.apply_symbol(|z| {
        if z.xi == 0.0 && z.eta == 0.0 {
            return if s.j == 0 { 1.0 } else { 0.0 };
        }
        sector_of(z, s.a)
            .expect("non-zero frequency")
            .into_iter()
            .find(|(i, _)| i.j == s.j)
            .map_or(0.0, |(_, w)| w)
    }))
}

/// `H1(ζ1, ζ2) = |ξ1ξ2(ξ1+ξ2) + η1η2(η1+η2)|`.
pub fn h1(z1: FreqPoint, z2: FreqPoint) -> f64 {
    (z1.xi * z2.xi * (z1.xi + z2.xi) + z1.eta * z2.eta * (z1.eta + z2.eta)).abs()
}

/// `H2(ζ1, ζ2) = |ξ1η2 + ξ2η1 + 2(ξ1η1 + ξ2η2)|`.
pub fn h2(z1: FreqPoint, z2: FreqPoint) -> f64 {
    (z1.xi * z2.eta + z2.xi * z1.eta + 2.0 * (z1.xi * z1.eta + z2.xi * z2.eta)).abs()
}

/// `H3(ζ1, ζ2) = |ξ1η2 - ξ2η1|`.
pub fn h3(z1: FreqPoint, z2: FreqPoint) -> f64 {
    (z1.xi * z2.eta - z2.xi * z1.eta).abs()
}

/// Square tile `A⁻¹N1 · ([k1, k1+1) × [k2, k2+1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileIndex {
    pub kx: i64,
    pub ky: i64,
}

impl TileIndex {
    pub const fn new(kx: i64, ky: i64) -> Self {
        Self { kx, ky }
    }

    /// The tile of side twice as large containing this one.
    pub fn parent(self) -> Self {
        Self::new(self.kx.div_euclid(2), self.ky.div_euclid(2))
    }

    pub fn children(self) -> [Self; 4] {
        let (x, y) = (2 * self.kx, 2 * self.ky);
        [
            Self::new(x, y),
            Self::new(x + 1, y),
            Self::new(x, y + 1),
            Self::new(x + 1, y + 1),
        ]
    }

    fn closed_box(self) -> IBox {
        IBox {
            x: (self.kx, self.kx + 1),
            y: (self.ky, self.ky + 1),
        }
    }
}

/// Tile geometry at scale `A` relative to the frequency `N1`; the tile side is `N1/A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileGeometry {
    pub a: u64,
    pub n1: f64,
}

impl TileGeometry {
    pub fn new(a: u64, n1: f64) -> Result<Self> {
        if a < 2 || !a.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "tile scale A = {a} must be a power of two, at least 2"
            )));
        }
        if !(n1 > 0.0 && n1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reference frequency N1 = {n1} must be positive"
            )));
        }
        Ok(Self { a, n1 })
    }

    pub fn side(&self) -> f64 {
        self.n1 / self.a as f64
    }

    /// The unique tile containing `ζ` (half-open convention).
    pub fn tile_of(&self, z: FreqPoint) -> TileIndex {
        let s = self.side();
        TileIndex::new((z.xi / s).floor() as i64, (z.eta / s).floor() as i64)
    }

    /// Geometry of the parent scale `A/2`.
    pub fn coarser(&self) -> Result<Self> {
        Self::new(self.a / 2, self.n1)
    }

    pub fn finer(&self) -> Self {
        Self {
            a: self.a * 2,
            n1: self.n1,
        }
    }

    /// Whitney classification of a tile pair at this scale.
    pub fn classify(&self, k1: TileIndex, k2: TileIndex) -> WhitneyClass {
        let r = pair_ranges(k1.closed_box(), k2.closed_box());
        let a = self.a as i128;
        let s = self.side();
        WhitneyClass {
            h1_min: r.h1.min_abs() as f64 / 8.0 * s.powi(3),
            h2_min: r.h2.min_abs() as f64 * s * s,
            in_z1: r.h1.min_abs() >= 8 * a * a,
            in_z2: r.h2.min_abs() >= a,
        }
    }
}

/// Whitney membership of a tile pair with the certified minima that decide it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitneyClass {
    pub h1_min: f64,
    pub h2_min: f64,
    pub in_z1: bool,
    pub in_z2: bool,
}

impl WhitneyClass {
    pub fn in_z(&self) -> bool {
        self.in_z1 || self.in_z2
    }
}

/// Closed integer box in tile units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct IBox {
    x: (i64, i64),
    y: (i64, i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Range {
    lo: i128,
    hi: i128,
}

impl Range {
    fn min_abs(self) -> i128 {
        if self.lo <= 0 && self.hi >= 0 {
            0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    fn max_abs(self) -> i128 {
        self.lo.abs().max(self.hi.abs())
    }

    fn of(values: impl IntoIterator<Item = i128>) -> Self {
        let mut lo = i128::MAX;
        let mut hi = i128::MIN;
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Self { lo, hi }
    }
}

struct PairRanges {
    /// Range of the signed `H1` in doubled coordinates (eight times the tile-unit value).
    h1: Range,
    /// Range of the signed `H2` in tile units.
    h2: Range,
}

fn g(x: i128, y: i128) -> i128 {
    x * y * (x + y)
}

/// Exact range of `g(x, y) = xy(x+y)` over a closed rectangle with even corners.
/// The extremes lie at corners, at the edge critical points `y = -x/2`, `x = -y/2`,
/// or at the only interior critical point, the origin.
fn g_range(x: (i128, i128), y: (i128, i128)) -> Range {
    let mut cand = Vec::with_capacity(9);
    for &xv in &[x.0, x.1] {
        for &yv in &[y.0, y.1] {
            cand.push(g(xv, yv));
        }
        let yc = -xv / 2;
        if y.0 <= yc && yc <= y.1 {
            cand.push(g(xv, yc));
        }
    }
    for &yv in &[y.0, y.1] {
        let xc = -yv / 2;
        if x.0 <= xc && xc <= x.1 {
            cand.push(g(xc, yv));
        }
    }
    if x.0 <= 0 && 0 <= x.1 && y.0 <= 0 && 0 <= y.1 {
        cand.push(0);
    }
    Range::of(cand)
}

fn pair_ranges(b1: IBox, b2: IBox) -> PairRanges {
    let d = |v: (i64, i64)| (2 * v.0 as i128, 2 * v.1 as i128);
    let gx = g_range(d(b1.x), d(b2.x));
    let gy = g_range(d(b1.y), d(b2.y));
    let h1 = Range {
        lo: gx.lo + gy.lo,
        hi: gx.hi + gy.hi,
    };
    // H2 is affine in each of its four variables: extremes sit at the 16 corners.
    let mut c = Vec::with_capacity(16);
    for &x1 in &[b1.x.0, b1.x.1] {
        for &y1 in &[b1.y.0, b1.y.1] {
            for &x2 in &[b2.x.0, b2.x.1] {
                for &y2 in &[b2.y.0, b2.y.1] {
                    let (x1, y1, x2, y2) = (x1 as i128, y1 as i128, x2 as i128, y2 as i128);
                    c.push(x1 * y2 + x2 * y1 + 2 * (x1 * y1 + x2 * y2));
                }
            }
        }
    }
    PairRanges {
        h1,
        h2: Range::of(c),
    }
}

/// Admissible frequency boxes of the configuration
/// `|ξ1| ∼ |ξ2| ≫ |η1| ∼ |η2| ∼ |η3| ≫ |ξ3|`, in units of `N1`:
/// `ξ1 ∈ [1/2, 1]`, `ξ2 ∈ [-1, -1/2]` with `|ξ1 + ξ2| <= nu`, and
/// `η1, η2 ∈ [mu/2, mu]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseCase {
    pub mu: f64,
    pub nu: f64,
}

impl Default for TransverseCase {
    fn default() -> Self {
        Self {
            mu: 1.0 / 16.0,
            nu: 1.0 / 128.0,
        }
    }
}

impl TransverseCase {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.nu && self.nu < self.mu && self.mu < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "case boxes need 0 < nu < mu < 1/2, got mu = {}, nu = {}",
                self.mu, self.nu
            )));
        }
        Ok(())
    }

    /// Tile index range of admissible first tiles at scale `A`, as half-open ranges.
    pub fn first_tiles(&self, a: u64) -> ((i64, i64), (i64, i64)) {
        let a = a as f64;
        (
            ((0.5 * a).ceil() as i64, (a).floor() as i64),
            (
                (0.5 * self.mu * a).ceil() as i64,
                (self.mu * a).floor() as i64,
            ),
        )
    }

    pub fn contains_first(&self, k1: TileIndex, a: u64) -> bool {
        let ((x0, x1), (y0, y1)) = self.first_tiles(a);
        (x0..x1).contains(&k1.kx) && (y0..y1).contains(&k1.ky)
    }

    /// Half-open index ranges of partner tiles for a given first tile.
    pub fn partner_tiles(&self, k1: TileIndex, a: u64) -> ((i64, i64), (i64, i64)) {
        let af = a as f64;
        let nu = (self.nu * af).floor() as i64;
        let x0 = (-k1.kx - nu).max(-(af as i64));
        let x1 = (-k1.kx + nu + 1).min((-0.5 * af).floor() as i64 + 1);
        let y0 = (0.5 * self.mu * af).ceil() as i64;
        let y1 = (self.mu * af).floor() as i64;
        ((x0, x1.max(x0)), (y0, y1.max(y0)))
    }
}

/// Partner tiles `k2` in the boundary class `Z̃_A`: `(k1, k2) ∈ Z_A` while the
/// parent pair is not in `Z_{A/2}`.
///
/// The partner box is searched by quadtree descent. A square of partner tiles is
/// discarded when every parent pair inside it is already in `Z_{A/2}`, or when no
/// pair inside it can reach the `Z_A` thresholds; both tests use exact interval
/// ranges, so the count equals that of an exhaustive scan.
pub fn boundary_partners(k1: TileIndex, a: u64, range: ((i64, i64), (i64, i64))) -> Vec<TileIndex> {
    let ((x0, x1), (y0, y1)) = range;
    if x0 >= x1 || y0 >= y1 {
        return Vec::new();
    }
    let ai = a as i128;
    let parent1 = {
        let p = k1.parent();
        IBox {
            x: (2 * p.kx, 2 * p.kx + 2),
            y: (2 * p.ky, 2 * p.ky + 2),
        }
    };
    let own = k1.closed_box();
    let span = (x1 - x0).max(y1 - y0).max(2) as u64;
    let size = span.next_power_of_two() as i64 * 2;
    let sx = x0.div_euclid(2) * 2;
    let sy = y0.div_euclid(2) * 2;
    let mut out = Vec::new();
    let mut stack = vec![(sx, sy, size)];
    while let Some((rx, ry, s)) = stack.pop() {
        if rx >= x1 || ry >= y1 || rx + s <= x0 || ry + s <= y0 {
            continue;
        }
        let region = IBox {
            x: (rx, rx + s),
            y: (ry, ry + s),
        };
        let parents = pair_ranges(parent1, region);
        if parents.h1.min_abs() >= 16 * ai * ai || parents.h2.min_abs() >= 2 * ai {
            continue;
        }
        let reach = pair_ranges(own, region);
        if reach.h1.max_abs() < 8 * ai * ai && reach.h2.max_abs() < ai {
            continue;
        }
        if s > 2 {
            let h = s / 2;
            stack.extend([
                (rx, ry, h),
                (rx + h, ry, h),
                (rx, ry + h, h),
                (rx + h, ry + h, h),
            ]);
            continue;
        }
        for dx in 0..2 {
            for dy in 0..2 {
                let k2 = TileIndex::new(rx + dx, ry + dy);
                if !(x0..x1).contains(&k2.kx) || !(y0..y1).contains(&k2.ky) {
                    continue;
                }
                if in_boundary_class(k1, k2, a) {
                    out.push(k2);
                }
            }
        }
    }
    out.sort();
    out
}

/// `(k1, k2) ∈ Z_A` and `(parent k1, parent k2) ∉ Z_{A/2}`, by the exact test.
pub fn in_boundary_class(k1: TileIndex, k2: TileIndex, a: u64) -> bool {
    let ai = a as i128;
    let here = pair_ranges(k1.closed_box(), k2.closed_box());
    if !(here.h1.min_abs() >= 8 * ai * ai || here.h2.min_abs() >= ai) {
        return false;
    }
    let (p1, p2) = (k1.parent(), k2.parent());
    let up = pair_ranges(
        IBox {
            x: (2 * p1.kx, 2 * p1.kx + 2),
            y: (2 * p1.ky, 2 * p1.ky + 2),
        },
        IBox {
            x: (2 * p2.kx, 2 * p2.kx + 2),
            y: (2 * p2.ky, 2 * p2.ky + 2),
        },
    );
    !(up.h1.min_abs() >= 16 * ai * ai || up.h2.min_abs() >= 2 * ai)
}

/// `#{k2 : (k1, k2) ∈ Z̃_A}` within the admissible partner box of `case`.
pub fn orthogonality_count(k1: TileIndex, a: u64, case: &TransverseCase) -> Result<usize> {
    case.validate()?;
    if !a.is_power_of_two() || a < 4 {
        return Err(Error::InvalidParameter(format!(
            "scale A = {a} must be a power of two, at least 4"
        )));
    }
    Ok(boundary_partners(k1, a, case.partner_tiles(k1, a)).len())
}

/// One row of the decomposition statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompRow {
    pub a: u64,
    pub n1: f64,
    pub k1: TileIndex,
    pub k2: TileIndex,
    pub class: WhitneyClass,
}

impl DecompRow {
    pub const COLUMNS: [&'static str; 8] =
        ["A", "N1", "k1", "k2", "H1_min", "H2_min", "in_Z1", "in_Z2"];
}
