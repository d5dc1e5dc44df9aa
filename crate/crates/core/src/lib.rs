//! Sharp regression-discontinuity analysis.
//!
//! Two frameworks are covered:
//!
//! - continuity-based: one-sided local polynomial fits ([`wls`]), MSE and
//!   CER bandwidth rules ([`bandwidth`]), and conventional plus robust
//!   bias-corrected inference ([`continuity`]);
//! - local randomization: Fisherian permutation tests and large-sample
//!   tests inside a window ([`locrand`]), and covariate-balance window
//!   selection ([`window`]).
//!
//! [`falsification`] runs the usual battery of design checks, [`rdplot`]
//! builds binned-means plots, and [`simulate`] generates data with a known
//! effect and runs Monte Carlo coverage studies.
//!
//! Replications and permutation draws run on rayon when the `parallel`
//! feature is enabled (the default); results are identical either way.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod continuity;
pub mod data;
pub mod error;
pub mod exec;
pub mod falsification;
pub mod kernel;
mod linalg;
pub mod locrand;
pub mod rdplot;
pub mod simulate;
pub mod stats;
pub mod window;
pub mod wls;

pub use data::{
    assign_treatment, load_csv, validate, CsvSchema, RDDataset, Side, TreatmentVector,
    ValidationReport,
};
pub use error::{ErrorClass, RdError, Result};
pub use kernel::KernelSpec;
