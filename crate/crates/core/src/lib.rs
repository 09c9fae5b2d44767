//! Spectral analysis of matrix-valued transfer operators for multiwavelet
//! filter banks on the n-torus.
//!
//! Given an expansive integer dilation `A` and a matrix trigonometric
//! polynomial filter `m`, this crate computes:
//!
//! - the transfer operator `R h = Σᵢ m(ψᵢ·)* h(ψᵢ·) m(ψᵢ·)` in exact
//!   coefficient form on an invariant frequency set,
//! - its spectrum, harmonic (fixed-point) maps and the spectral projection
//!   `T1` onto them,
//! - the finite-dimensional C*-algebra structure of the harmonic maps
//!   (star product, Wedderburn blocks, minimal projections),
//! - low-pass `E(l)` certificates, truncated infinite products `P(x)`,
//!   cascade iterates, scaling-map correlations, and convergence
//!   certificates,
//! - orthonormality/QMF verdicts for the filter bank.
//!
//! The `cli` module ingests filter banks from JSON and orchestrates the full
//! pipeline into a serialized report; the `transferwave` binary wraps it.

pub mod cascade;
pub mod cli;
pub mod error;
pub mod harmonic;
pub mod lattice;
pub mod linalg;
pub mod transfer;
pub mod trigmat;

pub use error::{Error, Result};
pub use lattice::DilationSystem;
pub use trigmat::{ElReport, MatTrigPoly, VecTrigPoly};
