//! Subdiffusion parameter estimation from single-particle tracking data.
//!
//! Particle trajectories recorded by video microscopy exhibit a power-law
//! mean squared displacement, MSD(t) ≈ 2D·t^α, whose parameters (α, D) carry
//! the rheological signal. Camera and tracking noise distorts the MSD at the
//! shortest lags, which is exactly where likelihood-based estimators extract
//! most of their information. This crate provides:
//!
//! - trajectory ingestion, drift subtraction and nonparametric MSD estimation
//!   ([`tracks`]);
//! - O(N²) Durbin-Levinson solves, log-determinants, FFT Toeplitz products
//!   and exact stationary Gaussian simulation ([`toeplitz`]);
//! - continuous stationary-increments kernels (fractional Brownian motion,
//!   generalized Langevin equation, empirical MSD tables) and MSD↔ACF
//!   conversions ([`csi`], [`gle`]);
//! - high-frequency noise filters: Savin-Doyle static/dynamic localization
//!   error and ARMA(p,q) position filters with the restriction that preserves
//!   low-frequency dynamics ([`noise`]);
//! - matrix-normal profile likelihood, derivative-free maximum likelihood
//!   with observed-information standard errors, and a Kullback-Leibler
//!   misspecification objective ([`likelihood`], [`models`]);
//! - simulation harnesses for coverage studies and composite-likelihood
//!   model comparison ([`experiments`]).
//!
//! Positions are micrometers, times are seconds throughout.

// `!(x > 0.0)` rather than `x <= 0.0` throughout: the negation also rejects
// NaN, which must never slip into a covariance or likelihood.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csi;
pub mod error;
#[cfg(test)]
pub(crate) mod testutil;
pub mod experiments;
pub mod gle;
pub mod likelihood;
pub mod models;
pub mod noise;
pub mod optim;
pub mod seed;
pub mod toeplitz;
pub mod tracks;

pub use error::{Error, Result};
