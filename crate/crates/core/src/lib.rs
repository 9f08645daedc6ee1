//! Interacting Brownian particles with mollified 3D Coulomb repulsion.
//!
//! The crate simulates the regularized N-particle system
//!
//! ```text
//! dX_i = (1/N) Σ_{j≠i} F_ε(X_i − X_j) dt + √2 dB_i,     F(x) = x / (4π|x|³),
//! ```
//!
//! solves the limiting nonlinear Fokker-Planck equation
//! ∂tρ = Δρ + ∇·(ρ∇(g∗ρ)) for radial data as a reference, and provides the
//! estimators and functionals needed to check energy balance, entropy decay,
//! weak-form residual scaling, non-collision statistics, and convergence of
//! the empirical measure to the PDE solution.
//!
//! Modules follow the pipeline: [`kernel`] (exact/mollified Coulomb),
//! [`sde`] (Euler-Maruyama ensembles), [`stats`] (energy/entropy/Fisher
//! estimators), [`weakform`] (residual and martingale functionals),
//! [`pde`] (radial finite-volume solver), [`chaos`] (empirical-vs-PDE
//! metrics), and [`config`]/[`experiments`]/[`output`] (declarative runs).

pub mod chaos;
pub mod config;
pub mod error;
pub mod experiments;
pub mod kdtree;
pub mod kernel;
pub mod output;
pub mod pde;
pub mod report;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod vec3;
pub mod weakform;

pub use error::{Error, Result};
