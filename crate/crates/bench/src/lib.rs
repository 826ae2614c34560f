//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use zklab::{init, FrequencyLattice, SpectralField, SymbolParams};

/// Gaussian bump on the `2π` box with `modes²` Fourier modes.
pub fn gaussian_state(modes: usize) -> SpectralField {
    let l = FrequencyLattice::new(2.0 * PI, modes).expect("even mode count");
    init::gaussian(l, 1.0, [0.5, 0.5], 0.5)
}

/// Band-limited random field occupying wavenumbers `1..=k_max`.
pub fn band_state(modes: usize, k_max: f64) -> SpectralField {
    let l = FrequencyLattice::new(2.0 * PI, modes).expect("even mode count");
    init::band_limited(l, 1.0, k_max, 1.0, 1.0, 7).expect("non-empty band")
}

pub fn params() -> SymbolParams {
    SymbolParams::with_default_gamma(-1.0 / 13.0, 4.0).expect("valid parameters")
}
