//! Simulation and estimation toolkit for plasmonic binding-kinetics sensing
//! with heralded single photons.
//!
//! The crate is organised bottom-up:
//!
//! - [`kinetics`]: the association model, concentration chemistry and
//!   affinity algebra.
//! - [`photon_stats`]: binomial (heralded photon) and Poisson (coherent)
//!   transmission sampling plus the closed-form precision laws.
//! - [`timetag`]: coincidence matching and heralded-set grouping of
//!   time-tagged detection streams.
//! - [`spr_optics`]: Kretschmann multilayer reflectance, resonance search
//!   and the setup efficiency budget.
//! - [`estimation`]: Levenberg-Marquardt and linear fits, and the bootstrap
//!   pipelines for the observable rate and the affinity chain.
//! - [`simulation`]: synthetic datasets from a kinetic ground truth.
//!
//! Every stochastic routine takes an explicit RNG; [`rng::substream`] derives
//! independent, reproducible streams from a seed and an index.

// `!(x > 0.0)` is how NaN gets rejected along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod kinetics;
pub mod photon_stats;
pub mod rng;
pub mod sensorgram;
pub mod simulation;
pub mod spr_optics;
pub mod timetag;

pub use error::{Error, Result};
