//! Pseudo-spectral integrator for the Zakharov-Kuznetsov equation
//!
//! ```text
//! ∂t u + (∂x³ + ∂y³) u + (∂x + ∂y) u² = 0
//! ```
//!
//! on the periodic box. In Fourier variables each coefficient obeys
//! `∂t c(ζ) = i(ξ³+η³) c(ζ) - i(ξ+η) (u²)^(ζ)`. The linear part is integrated exactly
//! (integrating factor or exponential time differencing), so stiffness only enters
//! through the phase `dt (ξ³+η³)`, which both schemes handle without a step limit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::{dealias_mask, exact_square, SpectralField};
use crate::lattice::{FreqPoint, FrequencyLattice};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Classical RK4 on the integrating-factor transformed variable.
    IfRk4,
    /// Fourth-order exponential time differencing (Cox-Matthews, contour-integral coefficients).
    Etdrk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// Apply the 2/3-rule mask to the quadratic term.
    pub dealias: bool,
    /// Keep every `record_every`-th state in the trajectory.
    pub record_every: usize,
    /// `false` evolves with the free flow only.
    #[serde(default = "default_true")]
    pub nonlinear: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            scheme: Scheme::IfRk4,
            dealias: true,
            record_every: 1,
            nonlinear: true,
        }
    }
}

impl SolverConfig {
    /// Largest linear phase `dt · |ξ³+η³|` a step may carry, or `None` when the
    /// scheme integrates the linear part exactly and imposes no limit. Both
    /// provided schemes are of the latter kind.
    pub fn phase_budget(&self) -> Option<f64> {
        match self.scheme {
            Scheme::IfRk4 | Scheme::Etdrk4 => None,
        }
    }

    pub fn validate(&self, lattice: &FrequencyLattice) -> Result<()> {
        if !(self.dt.is_finite() && self.dt != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} must be finite and non-zero",
                self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "record_every must be positive".into(),
            ));
        }
        if let Some(budget) = self.phase_budget() {
            let kmax = lattice.frequency(lattice.half());
            let phase = self.dt.abs() * 2.0 * kmax.powi(3);
            if phase >= budget {
                return Err(Error::InvalidParameter(format!(
                    "linear phase per step {phase} exceeds budget {budget}"
                )));
            }
        }
        Ok(())
    }
}

/// The exact free propagator multiplier `exp(i t (ξ³+η³))`.
pub fn linear_phase(z: FreqPoint, t: f64) -> Complex64 {
    Complex64::from_polar(1.0, t * z.dispersion())
}

/// Applies the free flow for time `t` to every coefficient.
pub fn free_flow(u: &SpectralField, t: f64) -> SpectralField {
    let mut out = u.clone();
    let l = *u.lattice();
    for (o, c) in out.coeffs_mut().iter_mut().enumerate() {
        *c *= linear_phase(l.point(l.mode_at(o)), t);
    }
    out
}

/// Time series of solver states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SpectralField>,
    pub times: Vec<f64>,
    pub config: SolverConfig,
}

impl Trajectory {
    pub fn lattice(&self) -> &FrequencyLattice {
        self.states[0].lattice()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Spacing between recorded states.
    pub fn sample_dt(&self) -> f64 {
        self.config.dt * self.config.record_every as f64
    }

    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Precomputed per-mode operators for one lattice and configuration.
pub struct Stepper {
    lattice: FrequencyLattice,
    config: SolverConfig,
    /// `-i(ξ+η)` times the dealias mask (zero where masked).
    nl_factor: Vec<Complex64>,
    e_half: Vec<Complex64>,
    e_full: Vec<Complex64>,
    etd: Option<EtdCoefficients>,
}

struct EtdCoefficients {
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

impl Stepper {
    pub fn new(lattice: FrequencyLattice, config: SolverConfig) -> Result<Self> {
        config.validate(&lattice)?;
        let mask = if config.dealias {
            dealias_mask(&lattice)
        } else {
            vec![true; lattice.len()]
        };
        let points: Vec<FreqPoint> = (0..lattice.len())
            .map(|o| lattice.point(lattice.mode_at(o)))
            .collect();
        let nl_factor = points
            .iter()
            .zip(&mask)
            .map(|(z, &keep)| {
                if keep && config.nonlinear {
                    -I * z.diag()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let dt = config.dt;
        let e_half = points.iter().map(|z| linear_phase(*z, 0.5 * dt)).collect();
        let e_full = points.iter().map(|z| linear_phase(*z, dt)).collect();
        let etd = (config.scheme == Scheme::Etdrk4).then(|| etd_coefficients(&points, dt));
        Ok(Self {
            lattice,
            config,
            nl_factor,
            e_half,
            e_full,
            etd,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Nonlinear tendency `-i(ξ+η) (u²)^`, masked.
    fn nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        let n = self.lattice.modes();
        if !self.config.nonlinear {
            return vec![Complex64::new(0.0, 0.0); c.len()];
        }
        let fft = Fft2::get(n);
        let mut buf = c.to_vec();
        fft.inverse(&mut buf);
        buf.iter_mut()
            .for_each(|v| *v = Complex64::new(v.re * v.re, 0.0));
        fft.forward(&mut buf);
        let scale = 1.0 / (n * n) as f64;
        buf.iter_mut()
            .zip(&self.nl_factor)
            .for_each(|(v, f)| *v *= f * scale);
        buf
    }

    pub fn step(&self, u: &SpectralField, time: f64) -> Result<SpectralField> {
        if u.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch);
        }
        let c = u.coeffs();
        let dt = self.config.dt;
        let next: Vec<Complex64> = match &self.etd {
            None => {
                let e = &self.e_half;
                let e2 = &self.e_full;
                let n1 = self.nonlinear(c);
                let a: Vec<Complex64> = (0..c.len())
                    .map(|i| e[i] * (c[i] + 0.5 * dt * n1[i]))
                    .collect();
                let n2 = self.nonlinear(&a);
                let b: Vec<Complex64> = (0..c.len())
                    .map(|i| e[i] * c[i] + 0.5 * dt * n2[i])
                    .collect();
                let n3 = self.nonlinear(&b);
                let d: Vec<Complex64> = (0..c.len())
                    .map(|i| e2[i] * c[i] + dt * e[i] * n3[i])
                    .collect();
                let n4 = self.nonlinear(&d);
                (0..c.len())
                    .map(|i| {
                        e2[i] * c[i]
                            + dt / 6.0 * (e2[i] * n1[i] + 2.0 * e[i] * (n2[i] + n3[i]) + n4[i])
                    })
                    .collect()
            }
            Some(k) => {
                let e = &self.e_half;
                let e2 = &self.e_full;
                let nv = self.nonlinear(c);
                let a: Vec<Complex64> =
                    (0..c.len()).map(|i| e[i] * c[i] + k.q[i] * nv[i]).collect();
                let na = self.nonlinear(&a);
                let b: Vec<Complex64> =
                    (0..c.len()).map(|i| e[i] * c[i] + k.q[i] * na[i]).collect();
                let nb = self.nonlinear(&b);
                let cc: Vec<Complex64> = (0..c.len())
                    .map(|i| e[i] * a[i] + k.q[i] * (2.0 * nb[i] - nv[i]))
                    .collect();
                let nc = self.nonlinear(&cc);
                (0..c.len())
                    .map(|i| {
                        e2[i] * c[i]
                            + nv[i] * k.f1[i]
                            + 2.0 * (na[i] + nb[i]) * k.f2[i]
                            + nc[i] * k.f3[i]
                    })
                    .collect()
            }
        };
        let mut out = SpectralField::from_coeffs(self.lattice, next)?;
        if !out.is_finite() {
            return Err(Error::Diverged {
                time: time + dt,
                detail: format!("non-finite coefficient after step from mass {:e}", u.mass()),
            });
        }
        out.symmetrize_hermitian();
        Ok(out)
    }
}

/// ETDRK4 coefficients by the contour-integral average over a circle of radius one
/// around each `L dt`, robust for small and purely imaginary `L`.
fn etd_coefficients(points: &[FreqPoint], dt: f64) -> EtdCoefficients {
    const M: usize = 64;
    let roots: Vec<Complex64> = (0..M)
        .map(|j| {
            Complex64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * (j as f64 + 0.5) / M as f64,
            )
        })
        .collect();
    let len = points.len();
    let mut q = Vec::with_capacity(len);
    let mut f1 = Vec::with_capacity(len);
    let mut f2 = Vec::with_capacity(len);
    let mut f3 = Vec::with_capacity(len);
    for z in points {
        let l = I * z.dispersion() * dt;
        let (mut sq, mut s1, mut s2, mut s3) = (
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
        );
        for r in &roots {
            let lr = l + r;
            let e = lr.exp();
            let eh = (lr * 0.5).exp();
            let lr3 = lr * lr * lr;
            sq += (eh - 1.0) / lr;
            s1 += (-4.0 - lr + e * (4.0 - 3.0 * lr + lr * lr)) / lr3;
            s2 += (2.0 + lr + e * (-2.0 + lr)) / lr3;
            s3 += (-4.0 - 3.0 * lr - lr * lr + e * (4.0 - lr)) / lr3;
        }
        let w = dt / M as f64;
        q.push(sq * w);
        f1.push(s1 * w);
        f2.push(s2 * w);
        f3.push(s3 * w);
    }
    EtdCoefficients { q, f1, f2, f3 }
}

/// Single step from time zero.
pub fn step(u: &SpectralField, config: &SolverConfig) -> Result<SpectralField> {
    Stepper::new(*u.lattice(), *config)?.step(u, 0.0)
}

/// Integrates on `[0, T]`; `T / dt` must be an integer multiple of `record_every`.
/// A negative `dt` with negative `T` integrates backwards.
pub fn solve(u0: &SpectralField, horizon: f64, config: &SolverConfig) -> Result<Trajectory> {
    let stepper = Stepper::new(*u0.lattice(), *config)?;
    let steps_f = horizon / config.dt;
    let steps = steps_f.round();
    if steps < 0.0 || (steps_f - steps).abs() > 1e-9 * steps_f.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not a non-negative whole number of steps of {}",
            config.dt
        )));
    }
    let steps = steps as usize;
    if steps % config.record_every != 0 {
        return Err(Error::InvalidParameter(format!(
            "{steps} steps is not a multiple of record_every = {}",
            config.record_every
        )));
    }
    let mut states = vec![u0.clone()];
    let mut times = vec![0.0];
    let mut u = u0.clone();
    for k in 0..steps {
        let t = k as f64 * config.dt;
        u = stepper.step(&u, t)?;
        if (k + 1) % config.record_every == 0 {
            states.push(u.clone());
            times.push((k + 1) as f64 * config.dt);
        }
    }
    Ok(Trajectory {
        states,
        times,
        config: *config,
    })
}

/// Mass `∫ u²`.
pub fn mass(u: &SpectralField) -> f64 {
    u.mass()
}

/// Hamiltonian `∫ ½|∇u|² - ½ ∂x u ∂y u - ⅓ u³`.
///
/// Gradient terms are evaluated spectrally; the cubic term on a zero-padded grid
/// where the product is free of aliasing.
pub fn energy(u: &SpectralField) -> f64 {
    let area = u.lattice().area();
    let quad: f64 = u
        .iter_modes()
        .map(|(_, z, c)| (0.5 * (z.xi * z.xi + z.eta * z.eta) - 0.5 * z.xi * z.eta) * c.norm_sqr())
        .sum::<f64>()
        * area;
    quad - cubic_integral(u) / 3.0
}

/// `∫ u³`, exact for any band-limited field.
pub fn cubic_integral(u: &SpectralField) -> f64 {
    // ∫u³ = area Σ_ζ w(ζ) c(-ζ) with w the exact spectral square.
    let w = exact_square(u);
    let area = u.lattice().area();
    let mut s = Complex64::new(0.0, 0.0);
    for (m, c) in u.support() {
        s += w.coeff(-m) * c;
    }
    s.re * area
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init;
    use crate::lattice::Mode;
    use std::f64::consts::PI;

    fn lat(n: usize) -> FrequencyLattice {
        FrequencyLattice::new(2.0 * PI, n).unwrap()
    }

    #[test]
    fn linear_phase_examples() {
        assert_eq!(
            linear_phase(FreqPoint::new(3.0, 1.0), 0.0),
            Complex64::new(1.0, 0.0)
        );
        let v = linear_phase(FreqPoint::new(1.0, 0.0), PI);
        assert!((v - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        for t in [0.3, 7.0, -2.0] {
            assert!((linear_phase(FreqPoint::new(2.5, -1.5), t).norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_field_stays_zero() {
        let u = SpectralField::zeros(lat(16));
        for scheme in [Scheme::IfRk4, Scheme::Etdrk4] {
            let cfg = SolverConfig {
                scheme,
                ..Default::default()
            };
            let v = step(&u, &cfg).unwrap();
            assert!(v.coeffs().iter().all(|c| c.norm() == 0.0));
        }
    }

    #[test]
    fn free_flow_single_mode() {
        let l = lat(16);
        let mut u = SpectralField::zeros(l);
        let m = Mode::new(2, -1);
        u.set_real_pair(m, Complex64::new(0.3, 0.1)).unwrap();
        let cfg = SolverConfig {
            dt: 0.01,
            nonlinear: false,
            record_every: 10,
            ..Default::default()
        };
        for scheme in [Scheme::IfRk4, Scheme::Etdrk4] {
            let cfg = SolverConfig { scheme, ..cfg };
            let tr = solve(&u, 0.5, &cfg).unwrap();
            let expect = Complex64::new(0.3, 0.1) * linear_phase(l.point(m), 0.5);
            assert!((tr.last().coeff(m) - expect).norm() < 1e-12);
            for (a, b) in tr.last().coeffs().iter().zip(u.coeffs()) {
                assert!((a.norm() - b.norm()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn solve_zero_horizon_and_bad_horizon() {
        let u = init::gaussian(lat(16), 0.5, [0.5, 0.5], 0.8);
        let tr = solve(&u, 0.0, &SolverConfig::default()).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(solve(&u, 0.00155, &SolverConfig::default()).is_err());
        let cfg = SolverConfig {
            record_every: 3,
            ..Default::default()
        };
        assert!(solve(&u, 0.01, &cfg).is_err());
    }

    #[test]
    fn one_step_mass_change_tiny() {
        let u = init::gaussian(lat(32), 0.1, [0.5, 0.5], 0.7);
        let v = step(&u, &SolverConfig::default()).unwrap();
        assert!((v.mass() - u.mass()).abs() / u.mass() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&SpectralField::zeros(lat(16))), 0.0);
        let u = SpectralField::from_fn(lat(16), |x, _| x.sin());
        assert!((energy(&u) - PI * PI).abs() < 1e-12);
        assert!((mass(&u) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn cubic_integral_matches_quadrature() {
        let l = lat(32);
        let u = init::gaussian(l, 1.0, [0.3, 0.6], 0.9);
        let h = 2.0 * PI / 32.0;
        // dealiased field: 3K < n so the grid sum is exact
        let grid: f64 = u.to_physical().iter().map(|v| v * v * v).sum::<f64>() * h * h;
        assert!((cubic_integral(&u) - grid).abs() < 1e-12 * grid.abs());
    }

    #[test]
    fn nan_is_reported() {
        let l = lat(16);
        let mut u = SpectralField::zeros(l);
        u.set(Mode::new(1, 0), Complex64::new(f64::NAN, 0.0))
            .unwrap();
        match step(&u, &SolverConfig::default()) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn schemes_agree() {
        let u = init::gaussian(lat(32), 0.5, [0.5, 0.5], 0.7);
        let a = solve(
            &u,
            0.1,
            &SolverConfig {
                dt: 1e-3,
                record_every: 100,
                ..Default::default()
            },
        )
        .unwrap();
        let b = solve(
            &u,
            0.1,
            &SolverConfig {
                dt: 1e-3,
                record_every: 100,
                scheme: Scheme::Etdrk4,
                ..Default::default()
            },
        )
        .unwrap();
        let d = a.last().l2_distance(b.last()).unwrap();
        assert!(d < 1e-8 * u.l2_norm(), "distance {d}");
    }
}
