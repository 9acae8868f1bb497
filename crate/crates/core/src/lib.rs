//! Density ratio estimation by time-score integration.
//!
//! Two samplers `q0` and `q1` are joined by a stochastic interpolant `x_t`
//! whose marginal density `q_t` moves from `q0` at `t = 0` to `q1` at `t = 1`.
//! A small network `s(x, t)` is trained to match the time score
//! `d/dt log q_t(x)`, and the log density ratio is recovered as
//!
//! ```text
//! log q1(x) - log q0(x) = integral over t in [0, 1] of d/dt log q_t(x)
//! ```
//!
//! ## Layout
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`autodiff`] | dense tensors, tanh MLPs, reverse-mode and forward-mode derivatives |
//! | [`distributions`] | Gaussian endpoints, 2-D toy datasets, dequantization |
//! | [`interpolants`] | coefficient schedules, bridge kernels, Gaussian marginal oracles |
//! | [`transport`] | squared-distance costs, log-domain Sinkhorn, coupling resampling |
//! | [`scorenet`] | time-score and joint-score networks with Fourier time features |
//! | [`training`] | score-matching losses, logistic baseline, Adam, training loop |
//! | [`estimation`] | quadrature / ODE integration of the score, MI and densities |
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! files and the command-line driver live in the companion `dre` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod autodiff;
pub mod distributions;
pub mod error;
pub mod estimation;
mod gemm;
pub mod interpolants;
pub mod rng;
pub mod scorenet;
pub mod training;
pub mod transport;

pub use error::{Error, Result};
