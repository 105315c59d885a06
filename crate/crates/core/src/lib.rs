//! Multilevel Richardson-Romberg estimation of integrals against the invariant
//! distribution of a diffusion, from decreasing-step Euler schemes.
//!
//! The estimator combines a coarse weighted empirical measure with `R - 1`
//! correcting levels, each pairing a coarse and an `M`-times finer scheme
//! driven by the same Brownian path. Weights cancel the first bias terms.
//!
//! ```
//! use ml2rgodic::{models::make_ou, optimizer::{build_plan, CalibrationReport, PlanOverrides}};
//!
//! let (_model, _f, reference) = make_ou(1.0).unwrap();
//! let calib = CalibrationReport::exact(&reference).unwrap();
//! let plan = build_plan(1e-2, 2, &calib, &PlanOverrides::default()).unwrap();
//! assert_eq!(plan.depth, 3);
//! ```

pub mod error;
pub mod harness;
pub mod models;
pub mod optimizer;
pub mod rng;
pub mod schedule;
pub mod simulate;
pub mod weights;

pub use error::{Error, Result};
