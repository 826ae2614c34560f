//! Real fields on the periodic box, stored by their Fourier coefficients.
//!
//! Convention: with physical samples `u_j` on the uniform `modes x modes` grid,
//! the stored coefficient is `c_k = FFT(u)_k / modes²`, so that
//! `u(x) = Σ_k c_k e^{i ζ_k·x}` and Parseval reads `∫ u² = box_area · Σ_k |c_k|²`.
//! Coefficient arrays are row-major over FFT indices `(ix, iy)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::lattice::{FreqPoint, FrequencyLattice, Mode};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    lattice: FrequencyLattice,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(lattice: FrequencyLattice) -> Self {
        Self {
            lattice,
            coeffs: vec![ZERO; lattice.len()],
        }
    }

    pub fn from_coeffs(lattice: FrequencyLattice, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != lattice.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients, got {}",
                lattice.len(),
                coeffs.len()
            )));
        }
        Ok(Self { lattice, coeffs })
    }

    /// Transforms physical samples `u[ix * modes + iy] = u(ix h, iy h)`, `h = L / modes`.
    pub fn from_physical(lattice: FrequencyLattice, samples: &[f64]) -> Result<Self> {
        if samples.len() != lattice.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} samples, got {}",
                lattice.len(),
                samples.len()
            )));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Fft2::get(lattice.modes()).forward(&mut buf);
        let scale = 1.0 / lattice.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        Ok(Self {
            lattice,
            coeffs: buf,
        })
    }

    /// Samples a function of `(x, y)` on the physical grid.
    pub fn from_fn(lattice: FrequencyLattice, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = lattice.modes();
        let h = lattice.box_length() / n as f64;
        let samples: Vec<f64> = (0..n * n)
            .map(|o| f((o / n) as f64 * h, (o % n) as f64 * h))
            .collect();
        Self::from_physical(lattice, &samples).expect("grid size matches lattice")
    }

    /// Physical samples (real parts of the inverse transform).
    pub fn to_physical(&self) -> Vec<f64> {
        self.to_physical_complex()
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    pub fn to_physical_complex(&self) -> Vec<Complex64> {
        let mut buf = self.coeffs.clone();
        Fft2::get(self.lattice.modes()).inverse(&mut buf);
        buf
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of mode `m`, zero outside the lattice.
    pub fn coeff(&self, m: Mode) -> Complex64 {
        self.lattice.offset(m).map_or(ZERO, |o| self.coeffs[o])
    }

    pub fn set(&mut self, m: Mode, c: Complex64) -> Result<()> {
        let o = self
            .lattice
            .offset(m)
            .ok_or_else(|| Error::InvalidParameter(format!("mode {m:?} outside lattice")))?;
        self.coeffs[o] = c;
        Ok(())
    }

    /// Sets `c(m) = c` and `c(-m) = conj(c)`, keeping the field real.
    pub fn set_real_pair(&mut self, m: Mode, c: Complex64) -> Result<()> {
        self.set(m, c)?;
        let partner = if m == -m { c.re.into() } else { c.conj() };
        self.set(-m, partner)
    }

    /// Largest `|c(-ζ) - conj c(ζ)|` over the lattice, with the Nyquist row
    /// paired modularly as the FFT does.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.lattice.modes();
        let mut worst = 0.0f64;
        for ix in 0..n {
            for iy in 0..n {
                let jx = (n - ix) % n;
                let jy = (n - iy) % n;
                let d = (self.coeffs[jx * n + jy] - self.coeffs[ix * n + iy].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Replaces the coefficients with their Hermitian average, removing any
    /// imaginary part of the physical field.
    pub fn symmetrize_hermitian(&mut self) {
        let n = self.lattice.modes();
        let old = self.coeffs.clone();
        for ix in 0..n {
            for iy in 0..n {
                let jx = (n - ix) % n;
                let jy = (n - iy) % n;
                self.coeffs[ix * n + iy] = 0.5 * (old[ix * n + iy] + old[jx * n + jy].conj());
            }
        }
    }

    /// `∫ u²` by Parseval.
    pub fn mass(&self) -> f64 {
        self.lattice.area() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.mass().sqrt()
    }

    /// `‖u‖²_{H^s} = ∫ ⟨ζ⟩^{2s} |û|²`.
    pub fn hs_norm_sqr(&self, s: f64) -> f64 {
        let area = self.lattice.area();
        self.iter_modes()
            .map(|(_, z, c)| (1.0 + z.norm().powi(2)).powf(s) * c.norm_sqr())
            .sum::<f64>()
            * area
    }

    /// L² distance to another field on the same lattice.
    pub fn l2_distance(&self, other: &SpectralField) -> Result<f64> {
        self.check_same_lattice(other)?;
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.lattice.area()).sqrt())
    }

    pub fn check_same_lattice(&self, other: &SpectralField) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(())
    }

    /// `(mode, frequency, coefficient)` for every lattice point.
    pub fn iter_modes(&self) -> impl Iterator<Item = (Mode, FreqPoint, Complex64)> + '_ {
        self.coeffs.iter().enumerate().map(move |(o, &c)| {
            let m = self.lattice.mode_at(o);
            (m, self.lattice.point(m), c)
        })
    }

    /// Modes carrying a non-zero coefficient.
    pub fn support(&self) -> Vec<(Mode, Complex64)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != ZERO)
            .map(|(o, &c)| (self.lattice.mode_at(o), c))
            .collect()
    }

    /// Coefficient-wise multiplication by a real symbol of the frequency.
    pub fn apply_symbol(&self, f: impl Fn(FreqPoint) -> f64) -> SpectralField {
        let mut out = self.clone();
        for (o, c) in out.coeffs.iter_mut().enumerate() {
            let z = self.lattice.point(self.lattice.mode_at(o));
            *c *= f(z);
        }
        out
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.check_same_lattice(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(SpectralField {
            lattice: self.lattice,
            coeffs,
        })
    }

    /// Largest wavenumber magnitude (per axis) carrying a non-zero coefficient.
    pub fn bandwidth(&self) -> i64 {
        self.support()
            .iter()
            .map(|(m, _)| m.kx.abs().max(m.ky.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Largest `K` with `3K < modes`: modes with `|kx|, |ky| <= K` survive the 2/3 rule.
pub fn dealias_cutoff(modes: usize) -> i64 {
    ((modes - 1) / 3) as i64
}

/// Row-major mask of modes kept by the 2/3 rule.
pub fn dealias_mask(lattice: &FrequencyLattice) -> Vec<bool> {
    let k = dealias_cutoff(lattice.modes());
    (0..lattice.len())
        .map(|o| {
            let m = lattice.mode_at(o);
            m.kx.abs() <= k && m.ky.abs() <= k
        })
        .collect()
}

/// Exact (non-periodic) spectral square `w(ζ) = Σ_{ζ1+ζ2=ζ} c(ζ1) c(ζ2)`, evaluated
/// through a zero-padded transform of size `2 * modes` and returned on that padded
/// lattice (box length unchanged), so every sum of two in-range modes is present.
pub fn exact_square(u: &SpectralField) -> SpectralField {
    let n = u.lattice.modes();
    let big =
        FrequencyLattice::new(u.lattice.box_length(), 2 * n).expect("doubling a valid lattice");
    let mut buf = vec![ZERO; big.len()];
    for (o, &c) in u.coeffs.iter().enumerate() {
        if c != ZERO {
            let m = u.lattice.mode_at(o);
            buf[big.offset(m).expect("in range")] = c;
        }
    }
    let f = Fft2::get(2 * n);
    f.inverse(&mut buf);
    buf.iter_mut().for_each(|v| *v = *v * *v);
    f.forward(&mut buf);
    let scale = 1.0 / big.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    SpectralField {
        lattice: big,
        coeffs: buf,
    }
}

/// Resamples the coefficients onto another lattice with the same box length
/// (zero padding or truncation by wavenumber).
pub fn resample(u: &SpectralField, target: FrequencyLattice) -> Result<SpectralField> {
    if (target.box_length() - u.lattice.box_length()).abs() > 1e-12 * u.lattice.box_length() {
        return Err(Error::LatticeMismatch);
    }
    let mut out = SpectralField::zeros(target);
    for (m, c) in u.support() {
        match target.offset(m) {
            Some(o) => out.coeffs[o] = c,
            None => {
                return Err(Error::BandwidthOverflow(format!(
                    "mode {m:?} does not fit the target lattice"
                )))
            }
        }
    }
    Ok(out)
}
