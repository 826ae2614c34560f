//! Pointwise frequency symbols of the I-method: the multiplier `m`, the trilinear
//! symbol `M3`, the resonance function, the non-resonant gate, the correction
//! symbol and its quadrilinear extension.
//!
//! All symbols are real. The resonance function `h3 = i (ξ1³+η1³+ξ2³+η2³+ξ3³+η3³)`
//! equals `3i (ξ1ξ2ξ3 + η1η2η3)` on a zero-sum triple; [`resonance_h3`] returns the
//! real factor `P = ξ1ξ2ξ3 + η1η2η3` and callers carry the `3i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{FreqPoint, ZeroSumQuad, ZeroSumTriple};

/// The parameter triple `(s, N, γ0)` shared by every I-method symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolParams {
    /// Regularity index, `-1/2 < s <= 0`.
    pub s: f64,
    /// I-method threshold `N >= 1`.
    pub n: f64,
    /// Resonance threshold, `0 < γ0 < 1`.
    pub gamma0: f64,
}

impl SymbolParams {
    pub fn new(s: f64, n: f64, gamma0: f64) -> Result<Self> {
        let p = Self { s, n, gamma0 };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with the default resonance threshold `γ0 = N^{-1/2}`.
    ///
    /// At `N = 1` the default would be exactly 1; it is clamped just below.
    pub fn with_default_gamma(s: f64, n: f64) -> Result<Self> {
        let g = n.powf(-0.5).min(1.0 - f64::EPSILON);
        Self::new(s, n, g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > -0.5 && self.s <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "s = {} outside (-1/2, 0]",
                self.s
            )));
        }
        if !(self.n.is_finite() && self.n >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "N = {} must be >= 1",
                self.n
            )));
        }
        if !(self.gamma0 > 0.0 && self.gamma0 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma0 = {} outside (0, 1)",
                self.gamma0
            )));
        }
        Ok(())
    }
}

/// `m(r)` as a function of the radius `r = |ζ|`.
///
/// One on `r <= N`, `(r/N)^s` on `r >= 2N`, and on `(N, 2N)` the cubic Hermite
/// interpolant matching value and slope of both closed forms.
pub fn multiplier_radial(r: f64, p: &SymbolParams) -> f64 {
    if p.s == 0.0 || r <= p.n {
        return 1.0;
    }
    if r >= 2.0 * p.n {
        return (r / p.n).powf(p.s);
    }
    let t = r / p.n - 1.0;
    let y1 = 2f64.powf(p.s);
    // slope of (r/N)^s at r = 2N, per unit t (dt = dr / N)
    let d1 = p.s * 2f64.powf(p.s - 1.0);
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 + h01 * y1 + h11 * d1
}

/// The I-multiplier `m^s_N(ζ)`.
pub fn multiplier_m(z: FreqPoint, p: &SymbolParams) -> f64 {
    multiplier_radial(z.norm(), p)
}

/// `P = ξ1ξ2ξ3 + η1η2η3`; the resonance function is `h3 = 3iP`.
pub fn resonance_h3(t: &ZeroSumTriple) -> f64 {
    let [a, b, c] = t.0;
    a.xi * b.xi * c.xi + a.eta * b.eta * c.eta
}

/// `M3 = Σ_j m²(ζ_j)(ξ_j + η_j)`.
pub fn symbol_m3(t: &ZeroSumTriple, p: &SymbolParams) -> f64 {
    let m: [f64; 3] = t.0.map(|z| multiplier_m(z, p));
    m3_from_parts(t, m)
}

/// `M3` from precomputed multiplier values.
pub(crate) fn m3_from_parts(t: &ZeroSumTriple, m: [f64; 3]) -> f64 {
    if m == [1.0; 3] {
        // m ≡ 1 on the triple: the sum telescopes to zero
        return 0.0;
    }
    t.0.iter().zip(m).map(|(z, mj)| mj * mj * z.diag()).sum()
}

/// Membership of the non-resonant set: all frequencies at most `N`, or
/// `|P| >= γ0 |ζ1||ζ2||ζ3|`.
pub fn indicator_nonresonant(t: &ZeroSumTriple, p: &SymbolParams) -> bool {
    let r = t.0.map(|z| z.norm());
    gate_from_parts(resonance_h3(t), r, p)
}

pub(crate) fn gate_from_parts(res: f64, r: [f64; 3], p: &SymbolParams) -> bool {
    if r[0] <= p.n && r[1] <= p.n && r[2] <= p.n {
        return true;
    }
    res.abs() >= p.gamma0 * r[0] * r[1] * r[2]
}

/// The correction symbol `σ̃3 = -2 i M3 / (3 h3) 1_{Ω_nr}`, which is the real
/// number `-2 M3 / (9 P)` on the non-resonant set and zero elsewhere.
pub fn sigma3_tilde(t: &ZeroSumTriple, p: &SymbolParams) -> f64 {
    let m = t.0.map(|z| multiplier_m(z, p));
    let r = t.0.map(|z| z.norm());
    sigma3_from_parts(t, m, r, p)
}

pub(crate) fn sigma3_from_parts(
    t: &ZeroSumTriple,
    m: [f64; 3],
    r: [f64; 3],
    p: &SymbolParams,
) -> f64 {
    if m == [1.0; 3] {
        return 0.0;
    }
    let res = resonance_h3(t);
    if res == 0.0 || !gate_from_parts(res, r, p) {
        return 0.0;
    }
    -2.0 * m3_from_parts(t, m) / (9.0 * res)
}

/// `X(σ̃3)(ζ1..ζ4) = σ̃3(ζ1, ζ2, ζ3+ζ4) (ξ3+ξ4+η3+η4)`.
pub fn symbol_x_sigma3(q: &ZeroSumQuad, p: &SymbolParams) -> f64 {
    let weight = q.0[2].diag() + q.0[3].diag();
    if weight == 0.0 {
        return 0.0;
    }
    sigma3_tilde(&q.collapse(), p) * weight
}

/// `|M3| / (max_j m²(ζ_j) · min_j |ζ_j|)`, the quantity bounded by an absolute
/// constant in the pointwise `M3` estimate.
///
/// Returns `Ok(None)` for a zero minimum frequency with vanishing `M3`, and a
/// verification error if a zero minimum frequency carries a non-zero `M3`.
pub fn fti1_ratio(t: &ZeroSumTriple, p: &SymbolParams) -> Result<Option<f64>> {
    let m = t.0.map(|z| multiplier_m(z, p));
    let m3 = m3_from_parts(t, m);
    let rmin = t.0.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let mmax = m.iter().fold(0.0f64, |a, &b| a.max(b * b));
    if rmin == 0.0 {
        if m3 == 0.0 {
            return Ok(None);
        }
        return Err(Error::Verification(format!(
            "M3 = {m3:e} on a triple with a zero frequency: {:?}",
            t.0
        )));
    }
    Ok(Some(m3.abs() / (mmax * rmin)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];

    fn params(s: f64, n: f64) -> SymbolParams {
        SymbolParams::with_default_gamma(s, n).unwrap()
    }

    fn fp(x: f64, y: f64) -> FreqPoint {
        FreqPoint::new(x, y)
    }

    #[test]
    fn params_validation() {
        assert!(SymbolParams::new(-0.5, 4.0, 0.1).is_err());
        assert!(SymbolParams::new(0.1, 4.0, 0.1).is_err());
        assert!(SymbolParams::new(-0.1, 0.5, 0.1).is_err());
        assert!(SymbolParams::new(-0.1, 4.0, 0.0).is_err());
        assert!(SymbolParams::new(-0.1, 4.0, 1.0).is_err());
        let p = params(-1.0 / 13.0, 16.0);
        assert!((p.gamma0 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn multiplier_examples() {
        let p = params(-1.0 / 13.0, 16.0);
        assert_eq!(multiplier_m(fp(8.0, 0.0), &p), 1.0);
        let v = multiplier_m(fp(32.0, 0.0), &p);
        assert!((v - 2f64.powf(-1.0 / 13.0)).abs() < 1e-15);
        assert!((v - 0.9481).abs() < 1e-4);
        let p0 = params(0.0, 16.0);
        for r in [0.0, 3.0, 17.0, 100.0] {
            assert_eq!(multiplier_m(fp(r, 0.0), &p0), 1.0);
        }
    }

    #[test]
    fn multiplier_is_c1_at_the_joins() {
        let p = params(-0.4, 4.0);
        let h = 1e-7;
        for r in [p.n, 2.0 * p.n] {
            let left = (multiplier_radial(r, &p) - multiplier_radial(r - h, &p)) / h;
            let right = (multiplier_radial(r + h, &p) - multiplier_radial(r, &p)) / h;
            assert!(
                (left - right).abs() < 1e-5,
                "slope jump at {r}: {left} vs {right}"
            );
            let jump = multiplier_radial(r + 1e-12, &p) - multiplier_radial(r - 1e-12, &p);
            assert!(jump.abs() < 1e-10);
        }
    }

    #[test]
    fn multiplier_monotone_and_radial() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &s in &[-0.49, -0.25, -1.0 / 13.0] {
            let p = params(s, 8.0);
            for _ in 0..10_000 {
                let a = rng.gen_range(0.0..60.0);
                let b = rng.gen_range(0.0..60.0);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                assert!(multiplier_radial(lo, &p) >= multiplier_radial(hi, &p));
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let z = fp(a * th.cos(), a * th.sin());
                assert!((multiplier_m(z, &p) - multiplier_radial(a, &p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resonance_examples() {
        let t = ZeroSumTriple::from_pair(fp(1.0, 0.0), fp(1.0, 0.0));
        assert_eq!(resonance_h3(&t), -2.0);
        let cubes: f64 = t.0.iter().map(|z| z.dispersion()).sum();
        assert_eq!(cubes, -6.0);
        let t = ZeroSumTriple::from_pair(fp(1.0, 1.0), fp(1.0, 1.0));
        assert_eq!(resonance_h3(&t), -4.0);
        let t = ZeroSumTriple::from_pair(fp(1.0, 0.0), fp(0.0, 1.0));
        assert_eq!(resonance_h3(&t), 0.0);
    }

    #[test]
    fn m3_examples() {
        let p = params(-1.0 / 13.0, 16.0);
        let low = ZeroSumTriple::from_pair(fp(3.0, -5.0), fp(7.0, 2.0));
        assert_eq!(symbol_m3(&low, &p), 0.0);
        let p1 = params(-1.0 / 13.0, 1.0);
        let t = ZeroSumTriple([fp(4.0, 0.0), fp(-4.0, 0.0), fp(0.0, 0.0)]);
        assert_eq!(symbol_m3(&t, &p1), 0.0);
        let p0 = params(0.0, 1.0);
        let t = ZeroSumTriple::from_pair(fp(40.0, -3.0), fp(-2.0, 17.0));
        assert_eq!(symbol_m3(&t, &p0), 0.0);
    }

    #[test]
    fn indicator_examples() {
        let p = SymbolParams::new(-1.0 / 13.0, 16.0, 0.25).unwrap();
        let t = ZeroSumTriple::from_pair(fp(10.0, 3.0), fp(-4.0, 5.0));
        assert!(indicator_nonresonant(&t, &p));
        let t = ZeroSumTriple([fp(32.0, 0.0), fp(0.0, 32.0), fp(-32.0, -32.0)]);
        assert_eq!(resonance_h3(&t), 0.0);
        assert!(!indicator_nonresonant(&t, &p));
        assert_eq!(sigma3_tilde(&t, &p), 0.0);
        let p = SymbolParams::new(-1.0 / 13.0, 8.0, 2f64.powi(-35)).unwrap();
        let t = ZeroSumTriple([fp(32.0, 0.0), fp(-16.0, 0.0), fp(-16.0, 0.0)]);
        assert_eq!(resonance_h3(&t), 8192.0);
        assert!(indicator_nonresonant(&t, &p));
    }

    #[test]
    fn sigma_examples() {
        let p = params(-1.0 / 13.0, 16.0);
        let low = ZeroSumTriple::from_pair(fp(3.0, -5.0), fp(7.0, 2.0));
        assert_eq!(sigma3_tilde(&low, &p), 0.0);
        let p0 = params(0.0, 2.0);
        let t = ZeroSumTriple::from_pair(fp(40.0, -3.0), fp(-2.0, 17.0));
        assert_eq!(sigma3_tilde(&t, &p0), 0.0);
        let p = SymbolParams::new(-0.3, 2.0, 0.01).unwrap();
        let t = ZeroSumTriple::from_pair(fp(40.0, -3.0), fp(-2.0, 17.0));
        let expect = -2.0 * symbol_m3(&t, &p) / (9.0 * resonance_h3(&t));
        assert!(indicator_nonresonant(&t, &p));
        assert_eq!(sigma3_tilde(&t, &p), expect);
        assert!(expect != 0.0);
    }

    #[test]
    fn x_sigma_examples() {
        let p = params(-0.3, 2.0);
        let q = ZeroSumQuad([fp(40.0, 1.0), fp(-40.0, -1.0), fp(5.0, 3.0), fp(-5.0, -3.0)]);
        assert_eq!(symbol_x_sigma3(&q, &p), 0.0);
        let p = params(-0.3, 16.0);
        let q = ZeroSumQuad::from_three(fp(3.0, 1.0), fp(-2.0, 4.0), fp(1.0, -6.0));
        assert_eq!(symbol_x_sigma3(&q, &p), 0.0);
        let p0 = params(0.0, 1.0);
        let q = ZeroSumQuad::from_three(fp(30.0, 1.0), fp(-2.0, 40.0), fp(1.0, -6.0));
        assert_eq!(symbol_x_sigma3(&q, &p0), 0.0);
        let p = params(-0.3, 2.0);
        let q = ZeroSumQuad::from_three(fp(30.0, 1.0), fp(-2.0, 40.0), fp(1.0, -6.0));
        let direct = sigma3_tilde(&q.collapse(), &p) * (q.0[2].diag() + q.0[3].diag());
        assert_eq!(symbol_x_sigma3(&q, &p), direct);
    }

    #[test]
    fn fti1_examples() {
        let p = params(-1.0 / 13.0, 16.0);
        let low = ZeroSumTriple::from_pair(fp(3.0, -5.0), fp(7.0, 2.0));
        assert_eq!(fti1_ratio(&low, &p).unwrap(), Some(0.0));
        let zero = ZeroSumTriple::from_pair(fp(0.0, 0.0), fp(70.0, 2.0));
        assert_eq!(fti1_ratio(&zero, &p).unwrap(), None);
        let p0 = params(0.0, 16.0);
        let t = ZeroSumTriple::from_pair(fp(40.0, -3.0), fp(-2.0, 17.0));
        assert_eq!(fti1_ratio(&t, &p0).unwrap(), Some(0.0));
    }

    fn triple() -> impl Strategy<Value = ZeroSumTriple> {
        (
            -80.0f64..80.0,
            -80.0f64..80.0,
            -80.0f64..80.0,
            -80.0f64..80.0,
        )
            .prop_map(|(a, b, c, d)| ZeroSumTriple::from_pair(fp(a, b), fp(c, d)))
    }

    proptest! {
        #[test]
        fn cube_identity(t in triple()) {
            let cubes: f64 = t.0.iter().map(|z| z.dispersion()).sum();
            let p3 = 3.0 * resonance_h3(&t);
            let scale = t.0.iter().map(|z| z.xi.abs().powi(3) + z.eta.abs().powi(3)).sum::<f64>().max(1.0);
            prop_assert!((cubes - p3).abs() <= 1e-12 * scale);
        }

        #[test]
        fn m3_symmetry_and_oddness(t in triple(), s in -0.49f64..0.0) {
            let p = params(s, 4.0);
            let base = symbol_m3(&t, &p);
            let scale = base.abs().max(1.0) * 1e-12;
            for perm in PERMS {
                prop_assert!((symbol_m3(&t.permuted(perm), &p) - base).abs() <= scale);
            }
            prop_assert!((symbol_m3(&t.negate(), &p) + base).abs() <= scale);
        }

        #[test]
        fn sigma_symmetry_evenness_and_gate(t in triple(), s in -0.49f64..0.0, g in 0.001f64..0.9) {
            let p = SymbolParams::new(s, 4.0, g).unwrap();
            let base = sigma3_tilde(&t, &p);
            let scale = base.abs().max(1e-300) * 1e-9;
            for perm in PERMS {
                prop_assert!((sigma3_tilde(&t.permuted(perm), &p) - base).abs() <= scale);
            }
            prop_assert!((sigma3_tilde(&t.negate(), &p) - base).abs() <= scale);
            if base != 0.0 {
                prop_assert!(indicator_nonresonant(&t, &p));
            }
        }
    }
}
