//! Global sensitivity analysis with random counting measures.
//!
//! A random counting measure `N = (κ, ν)` throws `K ~ κ` stones iid from `ν`.
//! The variance of `Nf` splits over any partition of the support into cell
//! variances and cross-cell covariances, and the sign of `δ² − c` for `κ`
//! decides whether those covariances vanish. When they do, the normalized cell
//! variances form a probability measure whose entropy quantifies where the
//! uncertainty lives.
//!
//! * [`counting`]: the counting distributions and their moments.
//! * [`measure`]: discrete measures, kernels, exact and simulated moments of `Nf`.
//! * [`sensitivity`]: partition ANOVA, sensitivity indices and measures, entropy.
//! * [`rct`]: two-arm randomized trials, vaccine efficacy and clinical endpoints.
//! * [`cli`]: the `stonethrow` command line.

pub mod cli;
pub mod counting;
pub mod error;
pub mod measure;
pub mod rct;
pub mod sensitivity;

pub use counting::{CountingKind, CountingMeasure};
pub use error::{Error, Result};
pub use measure::{DiscreteMeasure, Integrand, Kernel, MeasurableFn, MeasurementLaw, RandomMeasure};
pub use sensitivity::{AnovaDecomposition, LogBase, Partition, SensitivityMeasure, SensitivityReport};
