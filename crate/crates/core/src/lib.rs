//! Pseudo-spectral simulation of the two-dimensional Zakharov-Kuznetsov equation
//! together with the I-method machinery built on top of it: Fourier multipliers,
//! multilinear frequency functionals, the corrected mass, dyadic, angular and tile
//! decompositions, and numerical verification of the associated bounds.

pub mod cutoff;
pub mod decomp;
pub mod error;
pub mod estimates;
pub mod fft;
pub mod field;
pub mod functionals;
pub mod init;
pub mod io;
pub mod lattice;
pub mod solver;
pub mod symbols;

pub use error::{Error, Result};
pub use field::SpectralField;
pub use init::InitialData;
pub use lattice::{FreqPoint, FrequencyLattice, Mode, ZeroSumQuad, ZeroSumTriple};
pub use solver::{Scheme, SolverConfig, Trajectory};
pub use symbols::SymbolParams;
