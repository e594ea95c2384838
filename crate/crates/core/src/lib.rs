//! Robust covariance estimation for heavy-tailed, adversarially corrupted
//! samples.
//!
//! Two estimators are provided: [`p4::estimate_cov_p4`] for distributions with
//! L4–L2 norm equivalence, and [`pgt4::estimate_cov_pgt4`] for Lp–L2 with
//! `p > 4`. Both fit a PSD matrix to a truncated quadratic empirical process
//! uniformly over directions; suprema over the sphere are approximated by
//! [`directions`].

pub mod error;
pub mod exec;
pub mod linalg;
pub mod io;
pub mod truncation;
pub mod directions;
pub mod scalar;
pub mod opnorm;
pub mod minmax;
pub mod p4;
pub mod pgt4;
pub mod simulation;
pub mod diagnostics;

pub use error::{Error, Result};
pub use exec::Exec;
pub use linalg::{effective_rank, op_norm, psd_project, sample_covariance, PsdMatrix, Sample, SymMatrix};
