//! Reproducible initial data: Gaussian bumps, solitary-wave-like humps and
//! band-limited random fields. Every constructor returns a real field whose
//! spectrum is confined to the 2/3-rule band of its lattice.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dealias_mask, SpectralField};
use crate::lattice::{FrequencyLattice, Mode};

/// Declarative description of initial data, used by run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    Gaussian {
        amplitude: f64,
        /// Centre as a fraction of the box, in `[0, 1)²`.
        center: [f64; 2],
        width: f64,
    },
    Solitary {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    DoubleSolitary {
        amplitudes: [f64; 2],
        centers: [[f64; 2]; 2],
        width: f64,
    },
    /// Random phases on the wavenumber band `k_min <= |k| <= k_max` with amplitude
    /// `|k|^(-decay)`, rescaled to the requested L² norm.
    BandLimited {
        k_min: f64,
        k_max: f64,
        decay: f64,
        l2_norm: f64,
        seed: u64,
    },
    /// `amplitude * cos(kx x + ky y)` in wavenumber units of the lattice.
    Cosine {
        amplitude: f64,
        mode: [i64; 2],
    },
}

impl InitialData {
    pub fn build(&self, lattice: FrequencyLattice) -> Result<SpectralField> {
        match *self {
            InitialData::Zero => Ok(SpectralField::zeros(lattice)),
            InitialData::Gaussian {
                amplitude,
                center,
                width,
            } => Ok(gaussian(lattice, amplitude, center, width)),
            InitialData::Solitary {
                amplitude,
                center,
                width,
            } => Ok(solitary(lattice, &[(amplitude, center)], width)),
            InitialData::DoubleSolitary {
                amplitudes,
                centers,
                width,
            } => Ok(solitary(
                lattice,
                &[(amplitudes[0], centers[0]), (amplitudes[1], centers[1])],
                width,
            )),
            InitialData::BandLimited {
                k_min,
                k_max,
                decay,
                l2_norm,
                seed,
            } => band_limited(lattice, k_min, k_max, decay, l2_norm, seed),
            InitialData::Cosine { amplitude, mode } => {
                let mut u = SpectralField::zeros(lattice);
                let m = Mode::new(mode[0], mode[1]);
                if m == Mode::new(0, 0) {
                    u.set(m, Complex64::new(amplitude, 0.0))?;
                } else {
                    u.set_real_pair(m, Complex64::new(0.5 * amplitude, 0.0))?;
                }
                Ok(u)
            }
        }
    }
}

/// Periodized distance component from `a` to `b` on a circle of length `len`.
fn wrap(a: f64, b: f64, len: f64) -> f64 {
    let d = (a - b).rem_euclid(len);
    if d > 0.5 * len {
        d - len
    } else {
        d
    }
}

fn truncate(mut u: SpectralField) -> SpectralField {
    let mask = dealias_mask(u.lattice());
    for (c, keep) in u.coeffs_mut().iter_mut().zip(mask) {
        if !keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    u.symmetrize_hermitian();
    u
}

/// `amplitude · exp(-|x - x0|² / (2 width²))` with periodic distance.
pub fn gaussian(
    lattice: FrequencyLattice,
    amplitude: f64,
    center: [f64; 2],
    width: f64,
) -> SpectralField {
    let len = lattice.box_length();
    let (cx, cy) = (center[0] * len, center[1] * len);
    truncate(SpectralField::from_fn(lattice, |x, y| {
        let dx = wrap(x, cx, len);
        let dy = wrap(y, cy, len);
        amplitude * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
    }))
}

/// Sum of radial `sech²` humps.
pub fn solitary(lattice: FrequencyLattice, humps: &[(f64, [f64; 2])], width: f64) -> SpectralField {
    let len = lattice.box_length();
    truncate(SpectralField::from_fn(lattice, |x, y| {
        humps
            .iter()
            .map(|(a, c)| {
                let dx = wrap(x, c[0] * len, len);
                let dy = wrap(y, c[1] * len, len);
                let r = (dx * dx + dy * dy).sqrt() / width;
                a / r.cosh().powi(2)
            })
            .sum()
    }))
}

/// Random real field on the wavenumber band `k_min <= |k| <= k_max` (in units of
/// the lattice spacing), spectral amplitude `|k|^(-decay)` with uniform random
/// phases, normalized to `‖u‖_{L²} = l2_norm`. Modes outside the 2/3-rule band
/// are dropped.
pub fn band_limited(
    lattice: FrequencyLattice,
    k_min: f64,
    k_max: f64,
    decay: f64,
    l2_norm: f64,
    seed: u64,
) -> Result<SpectralField> {
    if !(k_min >= 0.0 && k_max >= k_min) {
        return Err(Error::InvalidParameter(format!(
            "bad band [{k_min}, {k_max}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = SpectralField::zeros(lattice);
    let mask = dealias_mask(&lattice);
    // Walk the half-plane in a fixed order so the RNG stream is layout independent.
    let h = lattice.half();
    for kx in 0..h {
        for ky in -h + 1..h {
            if kx == 0 && ky < 0 {
                continue;
            }
            let m = Mode::new(kx, ky);
            let k = ((kx * kx + ky * ky) as f64).sqrt();
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            if k == 0.0 || k < k_min || k > k_max {
                continue;
            }
            let o = lattice.offset(m).expect("in range");
            if !mask[o] {
                continue;
            }
            let amp = k.powf(-decay);
            let c = if kx == 0 && ky == 0 {
                Complex64::new(amp, 0.0)
            } else {
                Complex64::from_polar(amp, phase)
            };
            u.set_real_pair(m, c)?;
        }
    }
    let norm = u.l2_norm();
    if norm == 0.0 {
        return Err(Error::InvalidParameter(
            "band contains no lattice modes".into(),
        ));
    }
    Ok(u.scaled(l2_norm / norm))
}

/// Seeded complex Gaussian coefficients on an arbitrary mode list, made real by
/// Hermitian pairing. Used by property tests that need generic real fields.
pub fn random_real_field(lattice: FrequencyLattice, modes: &[Mode], seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = SpectralField::zeros(lattice);
    for &m in modes {
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if lattice.contains(-m) {
            u.set_real_pair(m, c).expect("mode in range");
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_real_and_dealiased() {
        let l = FrequencyLattice::new(2.0 * PI, 32).unwrap();
        let u = gaussian(l, 1.0, [0.5, 0.5], 0.6);
        assert!(u.hermitian_defect() < 1e-15);
        assert!(u.bandwidth() <= 10);
        let phys = u.to_physical();
        let peak = phys.iter().cloned().fold(f64::MIN, f64::max);
        assert!((peak - 1.0).abs() < 1e-3);
    }

    #[test]
    fn band_limited_is_seeded_and_normalized() {
        let l = FrequencyLattice::new(2.0 * PI, 32).unwrap();
        let a = band_limited(l, 1.0, 8.0, 1.0, 0.7, 5).unwrap();
        let b = band_limited(l, 1.0, 8.0, 1.0, 0.7, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.l2_norm() - 0.7).abs() < 1e-12);
        assert!(a.hermitian_defect() < 1e-15);
        for (m, _) in a.support() {
            let k = ((m.kx * m.kx + m.ky * m.ky) as f64).sqrt();
            assert!((1.0..=8.0).contains(&k));
        }
        assert!(band_limited(l, 20.0, 21.0, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn cosine_data() {
        let l = FrequencyLattice::new(2.0 * PI, 16).unwrap();
        let u = InitialData::Cosine {
            amplitude: 2.0,
            mode: [1, 1],
        }
        .build(l)
        .unwrap();
        let expect = SpectralField::from_fn(l, |x, y| 2.0 * (x + y).cos());
        assert!(u.l2_distance(&expect).unwrap() < 1e-12);
    }
}
