//! Multilinear frequency functionals
//!
//! ```text
//! Λk(M; u1, …, uk) = area · Σ_{ζ1+…+ζk = 0} M(ζ1, …, ζk) û1(ζ1) ⋯ ûk(ζk)
//! ```
//!
//! with the field convention `u(x) = Σ û(ζ) e^{iζ·x}`, so that `Λ2(1; u, u) = ∫u²`.
//! Zero-sum tuples are lattice exact: the last frequency is the negated sum of
//! the others and contributes only when it is a mode of its field's lattice.
//!
//! Besides a generic evaluator taking any symbol, this module provides table
//! driven kernels for the I-method functionals (modified and corrected mass,
//! `Λ3(M3)`, `Λ3(σ̃3)` and the collapsed `Λ4(X(σ̃3))`).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dealias_mask, exact_square, SpectralField};
use crate::lattice::{FreqPoint, FrequencyLattice, Mode, ZeroSumTriple};
use crate::solver::{self, Trajectory};
use crate::symbols::{
    gate_from_parts, m3_from_parts, multiplier_m, resonance_h3, sigma3_from_parts, SymbolParams,
};

/// Tolerance on the imaginary part of functionals that are real by symmetry,
/// relative to the sum of absolute values of the terms.
pub const REALITY_TOL: f64 = 1e-10;

/// Value of a multilinear sum with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub value: Complex64,
    /// Standard error of a sampled estimate; zero when exhaustive.
    pub std_error: f64,
    pub exhaustive: bool,
    /// Number of tuples visited.
    pub terms: u64,
    /// `area · Σ |M Π û|` over the visited tuples (scaled like `value` when sampled).
    pub abs_sum: f64,
}

impl LambdaEstimate {
    /// Real part, after checking that the imaginary part is a rounding residual.
    pub fn real(&self, what: &str) -> Result<f64> {
        check_residual(self.value.im, self.abs_sum, what)?;
        Ok(self.value.re)
    }

    /// Imaginary part, after checking that the real part is a rounding residual.
    pub fn imag(&self, what: &str) -> Result<f64> {
        check_residual(self.value.re, self.abs_sum, what)?;
        Ok(self.value.im)
    }
}

fn check_residual(residual: f64, scale: f64, what: &str) -> Result<()> {
    if residual.abs() > REALITY_TOL * scale + f64::MIN_POSITIVE {
        return Err(Error::Verification(format!(
            "{what}: residual component {residual:e} exceeds {REALITY_TOL:e} of term magnitude {scale:e}"
        )));
    }
    Ok(())
}

/// `Î u(ζ) = m(ζ) û(ζ)`.
pub fn apply_i(u: &SpectralField, p: &SymbolParams) -> SpectralField {
    u.apply_symbol(|z| multiplier_m(z, p))
}

/// Average of `m` over all permutations of its `k <= 4` arguments.
pub fn symmetrize<'a>(
    m: impl Fn(&[FreqPoint]) -> f64 + Sync + 'a,
    k: usize,
) -> impl Fn(&[FreqPoint]) -> f64 + Sync + 'a {
    assert!(
        (1..=4).contains(&k),
        "symmetrization is provided for k <= 4"
    );
    let perms = permutations(k);
    move |z: &[FreqPoint]| {
        let mut buf = [FreqPoint::ZERO; 4];
        let mut s = 0.0;
        for p in &perms {
            for (i, &j) in p.iter().enumerate() {
                buf[i] = z[j];
            }
            s += m(&buf[..k]);
        }
        s / perms.len() as f64
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Generic `Λk(M; u1, …, uk)` for `k ∈ {2, 3, 4}`.
///
/// The first `k-1` frequencies range over the supports of their fields and the
/// last is forced. When the number of such tuples is at most `budget` the sum is
/// exhaustive; otherwise it is estimated by sampling stratified on the first slot,
/// with a standard error.
pub fn lambda_k(
    m: impl Fn(&[FreqPoint]) -> f64 + Sync,
    fields: &[&SpectralField],
    budget: u64,
    seed: u64,
) -> Result<LambdaEstimate> {
    let k = fields.len();
    if !(2..=4).contains(&k) {
        return Err(Error::InvalidParameter(format!(
            "Λk is provided for k in 2..=4, got {k}"
        )));
    }
    if budget == 0 {
        return Err(Error::BudgetTooSmall {
            budget,
            required: 1,
        });
    }
    for f in &fields[1..] {
        fields[0].check_same_lattice(f)?;
    }
    let lattice = *fields[0].lattice();
    let area = lattice.area();
    let supports: Vec<Vec<(Mode, FreqPoint, Complex64)>> = fields[..k - 1]
        .iter()
        .map(|f| {
            f.support()
                .into_iter()
                .map(|(md, c)| (md, lattice.point(md), c))
                .collect()
        })
        .collect();
    let last = fields[k - 1];
    let total: u64 = supports.iter().map(|s| s.len() as u64).product();

    let term = |idx: &[usize]| -> Option<(Complex64, f64)> {
        let mut zs = [FreqPoint::ZERO; 4];
        let mut sum = Mode::new(0, 0);
        let mut prod = Complex64::new(1.0, 0.0);
        for (j, &i) in idx.iter().enumerate() {
            let (md, z, c) = supports[j][i];
            zs[j] = z;
            sum = sum + md;
            prod *= c;
        }
        let forced = -sum;
        if !lattice.contains(forced) {
            return None;
        }
        let c = last.coeff(forced);
        if c == Complex64::new(0.0, 0.0) {
            return None;
        }
        zs[k - 1] = lattice.point(forced);
        let t = prod * c * m(&zs[..k]);
        Some((t, t.norm()))
    };

    if total == 0 {
        return Ok(LambdaEstimate {
            value: Complex64::new(0.0, 0.0),
            std_error: 0.0,
            exhaustive: true,
            terms: 0,
            abs_sum: 0.0,
        });
    }

    if total <= budget {
        let n0 = supports[0].len();
        let rest: Vec<usize> = supports[1..].iter().map(|s| s.len()).collect();
        let rest_total: usize = rest.iter().product();
        let partial: Vec<(Complex64, f64)> = (0..n0)
            .into_par_iter()
            .map(|i0| {
                let mut acc = (Complex64::new(0.0, 0.0), 0.0);
                let mut idx = [0usize; 4];
                idx[0] = i0;
                for r in 0..rest_total {
                    let mut q = r;
                    for (j, &len) in rest.iter().enumerate() {
                        idx[j + 1] = q % len;
                        q /= len;
                    }
                    if let Some((t, a)) = term(&idx[..k - 1]) {
                        acc.0 += t;
                        acc.1 += a;
                    }
                }
                acc
            })
            .collect();
        let (v, a) = partial
            .iter()
            .fold((Complex64::new(0.0, 0.0), 0.0), |s, x| {
                (s.0 + x.0, s.1 + x.1)
            });
        return Ok(LambdaEstimate {
            value: v * area,
            std_error: 0.0,
            exhaustive: true,
            terms: total,
            abs_sum: a * area,
        });
    }

    // Stratified sampling: every first-slot mode is a stratum with an equal share of
    // the budget (at least two draws so the stratum variance is defined).
    let n0 = supports[0].len();
    let per = (budget / n0 as u64).max(2);
    let rest_total: u64 = total / n0 as u64;
    let rest: Vec<usize> = supports[1..].iter().map(|s| s.len()).collect();
    let strata: Vec<(Complex64, f64, f64)> = (0..n0)
        .into_par_iter()
        .map(|i0| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (i0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut idx = [0usize; 4];
            idx[0] = i0;
            let mut s = Complex64::new(0.0, 0.0);
            let mut s2 = 0.0;
            let mut a = 0.0;
            for _ in 0..per {
                for (j, &len) in rest.iter().enumerate() {
                    idx[j + 1] = rng.gen_range(0..len);
                }
                if let Some((t, ab)) = term(&idx[..k - 1]) {
                    s += t;
                    s2 += t.norm_sqr();
                    a += ab;
                }
            }
            let nf = per as f64;
            let mean = s / nf;
            let var = ((s2 / nf - mean.norm_sqr()) * nf / (nf - 1.0)).max(0.0);
            let w = rest_total as f64;
            (mean * w, var * w * w / nf, a / nf * w)
        })
        .collect();
    let mut value = Complex64::new(0.0, 0.0);
    let mut var = 0.0;
    let mut abs_sum = 0.0;
    for (v, s2, a) in strata {
        value += v;
        var += s2;
        abs_sum += a;
    }
    Ok(LambdaEstimate {
        value: value * area,
        std_error: var.sqrt() * area,
        exhaustive: false,
        terms: per * n0 as u64,
        abs_sum: abs_sum * area,
    })
}

/// `E⁰(u) = ‖Iu‖²`.
pub fn modified_mass(u: &SpectralField, p: &SymbolParams) -> f64 {
    u.iter_modes()
        .map(|(_, z, c)| multiplier_m(z, p).powi(2) * c.norm_sqr())
        .sum::<f64>()
        * u.lattice().area()
}

/// Per-mode data used by the table driven triple sums.
#[derive(Clone, Copy)]
struct Entry {
    z: FreqPoint,
    m: f64,
    r: f64,
    c: Complex64,
}

struct Table {
    lattice: FrequencyLattice,
    entries: Vec<Entry>,
}

impl Table {
    fn new(u: &SpectralField, p: &SymbolParams) -> Self {
        let lattice = *u.lattice();
        let entries = u
            .iter_modes()
            .map(|(_, z, c)| Entry {
                z,
                m: multiplier_m(z, p),
                r: z.norm(),
                c,
            })
            .collect();
        Self { lattice, entries }
    }

    fn support(&self) -> Vec<(Mode, Entry)> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.c != Complex64::new(0.0, 0.0))
            .map(|(o, e)| (self.lattice.mode_at(o), *e))
            .collect()
    }

    fn get(&self, m: Mode) -> Option<&Entry> {
        self.lattice.offset(m).map(|o| &self.entries[o])
    }
}

/// `area · Σ_{ζ1+ζ2+ζ3=0} f(e1, e2, e3) û1 û2 û3` over the supports of `u1`, `u2`,
/// with `ζ3` looked up in the table of `u3` (which may live on a larger lattice
/// with the same box). The reduction order is fixed, so results are bit
/// reproducible regardless of the thread count.
fn triple_sum(
    t1: &Table,
    t2: &Table,
    t3: &Table,
    f: impl Fn(&Entry, &Entry, &Entry) -> f64 + Sync,
) -> LambdaEstimate {
    let s1 = t1.support();
    let s2 = t2.support();
    let partial: Vec<(Complex64, f64, u64)> = s1
        .par_iter()
        .map(|(m1, e1)| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut abs = 0.0;
            let mut n = 0u64;
            for (m2, e2) in &s2 {
                let Some(e3) = t3.get(-(*m1 + *m2)) else {
                    continue;
                };
                if e3.c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let w = f(e1, e2, e3);
                n += 1;
                if w == 0.0 {
                    continue;
                }
                let t = e1.c * e2.c * e3.c * w;
                acc += t;
                abs += t.norm();
            }
            (acc, abs, n)
        })
        .collect();
    let area = t1.lattice.area();
    let (v, a, n) = partial
        .iter()
        .fold((Complex64::new(0.0, 0.0), 0.0, 0u64), |s, x| {
            (s.0 + x.0, s.1 + x.1, s.2 + x.2)
        });
    LambdaEstimate {
        value: v * area,
        std_error: 0.0,
        exhaustive: true,
        terms: n,
        abs_sum: a * area,
    }
}

fn triple(e1: &Entry, e2: &Entry, e3: &Entry) -> ZeroSumTriple {
    ZeroSumTriple([e1.z, e2.z, e3.z])
}

/// `Λ3(σ̃3; u, u, u)`, exhaustive over the support.
pub fn lambda3_sigma3(u: &SpectralField, p: &SymbolParams) -> LambdaEstimate {
    let t = Table::new(u, p);
    let p = *p;
    triple_sum(&t, &t, &t, move |a, b, c| {
        sigma3_from_parts(&triple(a, b, c), [a.m, b.m, c.m], [a.r, b.r, c.r], &p)
    })
}

/// `Λ3(σ̃3 · h3 / i; u, u, u) = Λ3(3 P σ̃3)`, the linear part of `dΛ3(σ̃3)/dt` divided by `i`.
pub fn lambda3_sigma3_h3(u: &SpectralField, p: &SymbolParams) -> LambdaEstimate {
    let t = Table::new(u, p);
    let p = *p;
    triple_sum(&t, &t, &t, move |a, b, c| {
        let tr = triple(a, b, c);
        3.0 * resonance_h3(&tr) * sigma3_from_parts(&tr, [a.m, b.m, c.m], [a.r, b.r, c.r], &p)
    })
}

/// `Λ3(M3; u, u, u)` by direct enumeration of triples.
pub fn lambda3_m3_direct(u: &SpectralField, p: &SymbolParams) -> LambdaEstimate {
    let t = Table::new(u, p);
    triple_sum(&t, &t, &t, |a, b, c| {
        m3_from_parts(&triple(a, b, c), [a.m, b.m, c.m])
    })
}

/// `Λ3(M3 · 1_{Ω_r}; u, u, u)`, the part of `Λ3(M3)` on the resonant set where the
/// correction symbol vanishes.
pub fn lambda3_m3_resonant(u: &SpectralField, p: &SymbolParams) -> LambdaEstimate {
    let t = Table::new(u, p);
    let p = *p;
    triple_sum(&t, &t, &t, move |a, b, c| {
        let tr = triple(a, b, c);
        if gate_from_parts(resonance_h3(&tr), [a.r, b.r, c.r], &p) {
            0.0
        } else {
            m3_from_parts(&tr, [a.m, b.m, c.m])
        }
    })
}

/// `Λ3(M3; u, u, u)` in `O(n² log n)`: the symbol is a sum of one-slot weights, so
/// by symmetry `Λ3(M3) = 3 · area · Σ_ζ m²(ζ)(ξ+η) û(ζ) (u²)^(-ζ)`.
pub fn lambda3_m3(u: &SpectralField, p: &SymbolParams) -> Complex64 {
    let w = exact_square(u);
    let area = u.lattice().area();
    let mut s = Complex64::new(0.0, 0.0);
    for (md, z, c) in u.iter_modes() {
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        s += multiplier_m(z, p).powi(2) * z.diag() * c * w.coeff(-md);
    }
    3.0 * area * s
}

/// `Λ4(X(σ̃3); u, u, u, u)` computed exactly through the collapse `ρ = ζ3 + ζ4`:
/// the symbol depends on `(ζ3, ζ4)` only through `ρ`, so the inner pair sum is the
/// spectral square of `u` and the quadrilinear sum becomes a triple sum.
pub fn lambda4_x_sigma3(u: &SpectralField, p: &SymbolParams) -> LambdaEstimate {
    let t = Table::new(u, p);
    let w = Table::new(&exact_square(u), p);
    let p = *p;
    triple_sum(&t, &t, &w, move |a, b, c| {
        sigma3_from_parts(&triple(a, b, c), [a.m, b.m, c.m], [a.r, b.r, c.r], &p) * c.z.diag()
    })
}

/// [`lambda4_x_sigma3`] for the dynamics truncated by the 2/3 rule: the collapsed
/// frequency `ρ = ζ3 + ζ4` is restricted to the band retained on the lattice of `u`.
pub fn lambda4_x_sigma3_band(u: &SpectralField, p: &SymbolParams) -> LambdaEstimate {
    let lattice = *u.lattice();
    let mask = dealias_mask(&lattice);
    let mut w = exact_square(u);
    let big = *w.lattice();
    for (o, c) in w.coeffs_mut().iter_mut().enumerate() {
        let keep = lattice.offset(big.mode_at(o)).is_some_and(|q| mask[q]);
        if !keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    let t = Table::new(u, p);
    let w = Table::new(&w, p);
    let p = *p;
    triple_sum(&t, &t, &w, move |a, b, c| {
        sigma3_from_parts(&triple(a, b, c), [a.m, b.m, c.m], [a.r, b.r, c.r], &p) * c.z.diag()
    })
}

/// `Ẽ¹(u) = E⁰(u) + Λ3(σ̃3)`, with the reality of the correction asserted.
pub fn corrected_mass(u: &SpectralField, p: &SymbolParams) -> Result<CorrectedMass> {
    let e0 = modified_mass(u, p);
    let l3 = lambda3_sigma3(u, p).real("Λ3(σ̃3)")?;
    Ok(CorrectedMass {
        e0,
        lambda3: l3,
        e1: e0 + l3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedMass {
    pub e0: f64,
    pub lambda3: f64,
    pub e1: f64,
}

/// `u_λ(x) = λ² u(λx)` on the box enlarged by `1/λ`. Mode indices are kept, so the
/// physical frequency of every coefficient is multiplied by `λ`; the map is exact.
pub fn rescale(u: &SpectralField, lambda: f64) -> Result<SpectralField> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rescale factor {lambda} outside (0, 1]"
        )));
    }
    let l = u.lattice();
    let target = FrequencyLattice::new(l.box_length() / lambda, l.modes())?;
    SpectralField::from_coeffs(
        target,
        u.coeffs().iter().map(|c| c * (lambda * lambda)).collect(),
    )
}

/// `λ² u(λ·)` sampled onto a prescribed lattice: each coefficient at frequency `ζ`
/// moves to the target mode at frequency `λζ`, which must be representable.
pub fn rescale_onto(
    u: &SpectralField,
    lambda: f64,
    target: FrequencyLattice,
) -> Result<SpectralField> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rescale factor {lambda} outside (0, 1]"
        )));
    }
    let mut out = SpectralField::zeros(target);
    for (md, c) in u.support() {
        let z = u.lattice().point(md);
        let moved = FreqPoint::new(lambda * z.xi, lambda * z.eta);
        let tm = target.mode_of(moved).ok_or_else(|| {
            Error::BandwidthOverflow(format!(
                "frequency ({}, {}) outside the target lattice",
                moved.xi, moved.eta
            ))
        })?;
        let back = target.point(tm);
        let tol = 1e-9 * target.spacing();
        if (back.xi - moved.xi).abs() > tol || (back.eta - moved.eta).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "frequency ({}, {}) is not representable on the target lattice",
                moved.xi, moved.eta
            )));
        }
        out.set(tm, c * (lambda * lambda))?;
    }
    Ok(out)
}

/// Time series of conserved and almost conserved quantities along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub e0: Vec<f64>,
    pub lambda3_sigma3: Vec<f64>,
    pub e1_tilde: Vec<f64>,
}

impl FunctionalSeries {
    pub const COLUMNS: [&'static str; 6] =
        ["t", "mass", "energy", "E0", "Lambda3_sigma3", "E1_tilde"];

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn rows(&self) -> Vec<[f64; 6]> {
        (0..self.len())
            .map(|i| {
                [
                    self.times[i],
                    self.mass[i],
                    self.energy[i],
                    self.e0[i],
                    self.lambda3_sigma3[i],
                    self.e1_tilde[i],
                ]
            })
            .collect()
    }

    /// `|Ẽ¹(T) - Ẽ¹(0)|`.
    pub fn e1_drift(&self) -> f64 {
        (self.e1_tilde[self.len() - 1] - self.e1_tilde[0]).abs()
    }

    pub fn mass_drift(&self) -> f64 {
        (self.mass[self.len() - 1] - self.mass[0]).abs()
    }
}

/// Evaluates the functional series at every recorded state (parallel over states).
pub fn track(trajectory: &Trajectory, p: &SymbolParams) -> Result<FunctionalSeries> {
    track_states(&trajectory.states, &trajectory.times, p)
}

/// As [`track`] on an arbitrary subset of states.
pub fn track_states(
    states: &[SpectralField],
    times: &[f64],
    p: &SymbolParams,
) -> Result<FunctionalSeries> {
    let rows: Vec<Result<(f64, f64, CorrectedMass)>> = states
        .iter()
        .map(|u| Ok((solver::mass(u), solver::energy(u), corrected_mass(u, p)?)))
        .collect();
    let mut s = FunctionalSeries {
        times: times.to_vec(),
        mass: Vec::with_capacity(rows.len()),
        energy: Vec::with_capacity(rows.len()),
        e0: Vec::with_capacity(rows.len()),
        lambda3_sigma3: Vec::with_capacity(rows.len()),
        e1_tilde: Vec::with_capacity(rows.len()),
    };
    for r in rows {
        let (m, e, c) = r?;
        s.mass.push(m);
        s.energy.push(e);
        s.e0.push(c.e0);
        s.lambda3_sigma3.push(c.lambda3);
        s.e1_tilde.push(c.e1);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init;
    use crate::symbols::{sigma3_tilde, symbol_m3};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn lat(n: usize) -> FrequencyLattice {
        FrequencyLattice::new(2.0 * PI, n).unwrap()
    }

    fn low_modes(k: i64) -> Vec<Mode> {
        let mut v = Vec::new();
        for kx in -k..=k {
            for ky in -k..=k {
                v.push(Mode::new(kx, ky));
            }
        }
        v
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn lambda2_of_one_is_mass() {
        let u = init::gaussian(lat(16), 0.8, [0.4, 0.6], 0.7);
        let l = lambda_k(|_| 1.0, &[&u, &u], u64::MAX, 0).unwrap();
        assert!(l.exhaustive);
        assert!(rel(l.value.re, u.mass()) < 1e-12);
        assert!(l.value.im.abs() < 1e-12);
    }

    #[test]
    fn lambda3_of_one_on_diagonal_support_vanishes() {
        let u = init::InitialData::Cosine {
            amplitude: 2.0,
            mode: [1, 1],
        }
        .build(lat(16))
        .unwrap();
        let l = lambda_k(|_| 1.0, &[&u, &u, &u], u64::MAX, 0).unwrap();
        assert_eq!(l.value, Complex64::new(0.0, 0.0));
        assert_eq!(l.terms, 4);
    }

    #[test]
    fn lambda3_of_one_is_cubic_integral() {
        let u = init::gaussian(lat(16), 0.8, [0.4, 0.6], 0.9);
        let l = lambda_k(|_| 1.0, &[&u, &u, &u], u64::MAX, 0).unwrap();
        assert!(rel(l.value.re, solver::cubic_integral(&u)) < 1e-11);
    }

    #[test]
    fn m3_functional_routes_agree() {
        let u = init::random_real_field(lat(24), &low_modes(7), 3);
        let p = SymbolParams::with_default_gamma(-0.3, 2.0).unwrap();
        let fast = lambda3_m3(&u, &p);
        let direct = lambda3_m3_direct(&u, &p);
        let generic = lambda_k(
            |z| symbol_m3(&ZeroSumTriple([z[0], z[1], z[2]]), &p),
            &[&u, &u, &u],
            u64::MAX,
            0,
        )
        .unwrap();
        assert!((fast - direct.value).norm() < 1e-10 * direct.abs_sum);
        assert!((generic.value - direct.value).norm() < 1e-10 * direct.abs_sum);
        // odd symbol: purely imaginary
        assert!(direct.imag("Λ3(M3)").is_ok());
        assert!(direct.value.im.abs() > 0.0);
    }

    #[test]
    fn m3_functional_vanishes_at_s_zero() {
        let u = init::random_real_field(lat(16), &low_modes(5), 9);
        let p = SymbolParams::with_default_gamma(0.0, 1.0).unwrap();
        assert_eq!(lambda3_m3_direct(&u, &p).value, Complex64::new(0.0, 0.0));
        assert!(lambda3_m3(&u, &p).norm() < 1e-10 * u.mass().powf(1.5));
    }

    #[test]
    fn sigma3_functional_matches_generic_and_is_real() {
        let u = init::random_real_field(lat(24), &low_modes(7), 4);
        let p = SymbolParams::new(-0.3, 2.0, 0.05).unwrap();
        let fast = lambda3_sigma3(&u, &p);
        let generic = lambda_k(
            |z| sigma3_tilde(&ZeroSumTriple([z[0], z[1], z[2]]), &p),
            &[&u, &u, &u],
            u64::MAX,
            0,
        )
        .unwrap();
        assert!((fast.value - generic.value).norm() < 1e-10 * fast.abs_sum);
        assert!(fast.real("Λ3(σ̃3)").is_ok());
        assert!(fast.value.re != 0.0);
    }

    #[test]
    fn collapsed_quartic_matches_brute_force() {
        let u = init::random_real_field(lat(16), &low_modes(3), 12);
        let p = SymbolParams::new(-0.4, 1.0, 0.05).unwrap();
        let fast = lambda4_x_sigma3(&u, &p);
        // ρ = ζ3 + ζ4 can leave the base lattice, so the brute-force sum runs on a
        // lattice large enough to hold every partial sum of the support.
        let big = lat(32);
        let ub = crate::field::resample(&u, big).unwrap();
        let brute = lambda_k(
            |z| {
                let rho = z[2] + z[3];
                sigma3_tilde(&ZeroSumTriple([z[0], z[1], rho]), &p) * rho.diag()
            },
            &[&ub, &ub, &ub, &ub],
            u64::MAX,
            0,
        )
        .unwrap();
        assert!(
            (fast.value - brute.value).norm() < 1e-10 * fast.abs_sum.max(1e-300),
            "{:?} {:?}",
            fast.value,
            brute.value
        );
        assert!(fast.imag("Λ4(X(σ̃3))").is_ok());
    }

    #[test]
    fn modified_mass_three_ways() {
        let u = init::random_real_field(lat(32), &low_modes(10), 5);
        let p = SymbolParams::with_default_gamma(-1.0 / 13.0, 2.0).unwrap();
        let a = modified_mass(&u, &p);
        let b = apply_i(&u, &p).mass();
        let c = lambda_k(
            |z| multiplier_m(z[0], &p) * multiplier_m(z[1], &p),
            &[&u, &u],
            u64::MAX,
            0,
        )
        .unwrap();
        assert!(rel(a, b) < 1e-10);
        assert!(rel(a, c.value.re) < 1e-10);
        assert!(a < u.mass());
    }

    #[test]
    fn apply_i_examples() {
        let l = lat(64);
        let p = SymbolParams::with_default_gamma(-0.25, 4.0).unwrap();
        let low = init::random_real_field(l, &low_modes(2), 1);
        assert_eq!(apply_i(&low, &p), low);
        let mut single = SpectralField::zeros(l);
        single
            .set_real_pair(Mode::new(8, 0), Complex64::new(1.0, 0.0))
            .unwrap();
        let iu = apply_i(&single, &p);
        assert!((iu.coeff(Mode::new(8, 0)).re - 2f64.powf(-0.25)).abs() < 1e-15);
        let p0 = SymbolParams::with_default_gamma(0.0, 4.0).unwrap();
        let u = init::random_real_field(l, &low_modes(20), 2);
        assert_eq!(apply_i(&u, &p0), u);
    }

    #[test]
    fn corrected_mass_examples() {
        let u = init::random_real_field(lat(32), &low_modes(4), 8);
        let p = SymbolParams::with_default_gamma(-0.2, 8.0).unwrap();
        let c = corrected_mass(&u, &p).unwrap();
        assert_eq!(c.lambda3, 0.0);
        assert_eq!(c.e1, c.e0);
        assert!(rel(c.e0, u.mass()) < 1e-14);
        let u = init::random_real_field(lat(32), &low_modes(10), 8);
        let p0 = SymbolParams::with_default_gamma(0.0, 1.0).unwrap();
        let c = corrected_mass(&u, &p0).unwrap();
        assert!(rel(c.e1, u.mass()) < 1e-14);
    }

    #[test]
    fn symmetrize_examples() {
        let z = [FreqPoint::new(1.5, 2.0), FreqPoint::new(-0.5, 3.0)];
        let s = symmetrize(|z: &[FreqPoint]| z[0].xi, 2);
        assert!((s(&z) - 0.5).abs() < 1e-15);
        let sym = symmetrize(|z: &[FreqPoint]| z[0].xi * z[1].eta + z[1].xi * z[0].eta, 2);
        assert!((sym(&z) - (1.5 * 3.0 - 0.5 * 2.0)).abs() < 1e-14);
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn symmetrization_leaves_functional_unchanged() {
        let p = SymbolParams::new(-0.3, 2.0, 0.1).unwrap();
        let m = |z: &[FreqPoint]| z[0].xi * multiplier_m(z[1], &p) + z[2].eta * z[2].eta;
        let l = lat(16);
        for seed in 0..20 {
            let u1 = init::random_real_field(l, &low_modes(4), seed);
            let a = lambda_k(m, &[&u1, &u1, &u1], u64::MAX, 0).unwrap();
            let b = lambda_k(symmetrize(m, 3), &[&u1, &u1, &u1], u64::MAX, 0).unwrap();
            assert!((a.value - b.value).norm() <= 1e-10 * a.abs_sum.max(a.value.norm()));
        }
    }

    #[test]
    fn sampled_estimate_brackets_exact() {
        let u = init::random_real_field(lat(16), &low_modes(5), 21);
        let m = |z: &[FreqPoint]| 1.0 + z[0].xi * z[1].eta;
        let exact = lambda_k(m, &[&u, &u, &u], u64::MAX, 0).unwrap();
        let est = lambda_k(m, &[&u, &u, &u], 5_000, 7).unwrap();
        let again = lambda_k(m, &[&u, &u, &u], 5_000, 7).unwrap();
        assert!(!est.exhaustive);
        assert_eq!(est, again);
        assert!((est.value - exact.value).norm() < 5.0 * est.std_error + 1e-12);
        assert!(lambda_k(m, &[&u, &u, &u], 0, 7).is_err());
    }

    #[test]
    fn rescale_examples() {
        let u = init::gaussian(lat(32), 0.7, [0.5, 0.5], 0.6);
        let same = rescale(&u, 1.0).unwrap();
        assert_eq!(same.coeffs(), u.coeffs());
        let half = rescale(&u, 0.5).unwrap();
        assert!(rel(half.mass(), 0.25 * u.mass()) < 1e-14);
        assert!(rescale(&u, 1.5).is_err());
        let q = rescale(&half, 0.5).unwrap();
        let direct = rescale(&u, 0.25).unwrap();
        assert!(q.l2_distance(&direct).unwrap() < 1e-10);
        assert_eq!(q.lattice(), direct.lattice());
    }

    #[test]
    fn rescale_onto_matches_physical_definition() {
        let l = lat(32);
        let u = init::random_real_field(l, &low_modes(4), 3);
        let big = FrequencyLattice::new(4.0 * PI, 64).unwrap();
        let r = rescale_onto(&u, 0.5, big).unwrap();
        let expect = SpectralField::from_fn(big, |x, y| {
            let mut v = 0.0;
            for (m, c) in u.support() {
                let z = l.point(m);
                v += (c * Complex64::from_polar(1.0, 0.5 * (z.xi * x + z.eta * y))).re;
            }
            0.25 * v
        });
        assert!(r.l2_distance(&expect).unwrap() < 1e-10 * expect.l2_norm());
        assert!(rel(r.mass(), 0.25 * u.mass()) < 1e-12);
        let coarse = lat(16);
        assert!(rescale_onto(
            &init::random_real_field(lat(64), &low_modes(20), 1),
            1.0,
            coarse
        )
        .is_err());
    }

    #[test]
    fn track_zero_and_free_flow() {
        let l = lat(16);
        let p = SymbolParams::with_default_gamma(-0.3, 2.0).unwrap();
        let cfg = solver::SolverConfig {
            dt: 0.01,
            record_every: 5,
            ..Default::default()
        };
        let tr = solver::solve(&SpectralField::zeros(l), 0.1, &cfg).unwrap();
        let s = track(&tr, &p).unwrap();
        assert!(s.rows().iter().all(|r| r[1..].iter().all(|v| *v == 0.0)));
        let u = init::random_real_field(l, &low_modes(5), 6).scaled(0.1);
        let cfg = solver::SolverConfig {
            nonlinear: false,
            ..cfg
        };
        let s = track(&solver::solve(&u, 0.1, &cfg).unwrap(), &p).unwrap();
        assert_eq!(s.len(), 3);
        for v in [&s.mass, &s.e0] {
            assert!(v.iter().all(|x| rel(*x, v[0]) < 1e-13));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn e0_bounded_by_mass(seed in 0u64..1000, s in -0.45f64..0.0, n in 1.0f64..8.0) {
            let u = init::random_real_field(lat(16), &low_modes(5), seed);
            let p = SymbolParams::with_default_gamma(s, n).unwrap();
            prop_assert!(modified_mass(&u, &p) <= u.mass() * (1.0 + 1e-14));
        }
    }
}
