//! Bayesian inference of thermal conductivity and laser intensity from
//! laser-flash thermograms, accelerated by a stochastic Galerkin surrogate.
//!
//! Offline, [`solver::sgfem_solve`] expands the discrete solution in Legendre
//! chaos over a box of `(lambda, I)` and keeps only its image under the
//! observation functional. Online, [`mcmc::rwmh`] samples
//! [`bayes::PosteriorTarget`], which evaluates that surrogate inside the box
//! and falls back to [`solver::plain_solve`] outside it.

pub mod analysis;
pub mod bayes;
pub mod config;
pub mod error;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod mesh;
pub mod pce;
pub mod pipeline;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
