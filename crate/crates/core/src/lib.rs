//! Multiple chordal SLE_κ((κ−6)/2,(κ−6)/2) laboratory.
//!
//! * [`loewner`]: deterministic Loewner chains, traces and inverse maps.
//! * [`sde`]: SLE_κ(ρ) driving processes with force points and landing detection.
//! * [`partition`]: hitting densities, their normalizations, R_N and the Ising limit F_N.
//! * [`multisle`]: the outermost-first cascade sampler and its statistical checks.
//! * [`jacobi`]: β-Jacobi ensembles (tridiagonal model and a Metropolis oracle).
//! * [`ising`]: critical Ising on lattice rectangles, interfaces and crossing events.
//! * [`stats`]: KS statistics, bootstrap, Fréchet distance, convergence diagnostics.

pub mod ising;
pub mod jacobi;
pub mod loewner;
pub mod multisle;
pub mod partition;
pub mod quad;
pub mod report;
pub mod rng;
pub mod sde;
pub mod stats;

pub use num_complex::Complex64;
