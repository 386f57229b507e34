//! Curve fitting and the bootstrap estimation pipelines.

pub mod bootstrap;
pub mod dataset;
pub mod linear;
pub mod lm;

pub use bootstrap::{
    association_jacobian, estimate_affinity, estimate_ks, fit_association, AffinityConfig, AffinityEstimate,
    BootstrapConfig, KsEstimate, KsSamples, NoiseMode, SteadyStateReadout, Summary,
};
pub use dataset::{Alignment, ExperimentDataset};
pub use linear::{linear_fit, LinearFit};
pub use lm::{levenberg_marquardt, FitResult, LmOptions};
