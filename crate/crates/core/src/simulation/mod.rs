//! Samplers, adversaries, and the Monte Carlo harness.

pub mod contamination;
pub mod experiment;
pub mod samplers;

pub use contamination::{contaminate, Adversary, ContaminationSpec};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentRecord};
pub use samplers::{add_gaussian_noise, sample_elliptical_t, sample_fourpoint, sample_fourpoint_mixture, sample_gaussian, DistributionKind};
