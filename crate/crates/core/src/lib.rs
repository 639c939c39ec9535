//! Semi-supervised Gaussian mixture clustering.
//!
//! Labeled rows are pinned to their class's component while unlabeled rows
//! are clustered by EM; candidate models are compared with a BIC whose
//! penalty uses only the unlabeled sample size. The crate also carries the
//! closed-form misselection probabilities for nested Gaussian models, a
//! simulation harness, and partition-comparison statistics.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod gaussian;
pub mod init;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod select;
pub mod sim;
pub mod ssem;

pub use error::{Error, Result};
pub use gaussian::{CovModel, GaussianComponent};
pub use init::ss_kmeanspp;
pub use select::{bic_prime, bic_star, count_params, model_search, Penalty, SearchOptions, SearchOutcome};
pub use ssem::{e_step, fit, m_step, map_labels, Dataset, FitOptions, FitResult, GmmParams};
