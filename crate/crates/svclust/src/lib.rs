//! Score-variance tests for the level of clustering in linear regression.
//!
//! The crate estimates a linear model, aggregates empirical scores at nested
//! clustering levels, and tests whether a fine clustering structure (possibly
//! "no clustering") is adequate against a coarser alternative. It provides
//! asymptotic and wild (cluster) bootstrap p-values, a sequential procedure
//! that picks the clustering level, robust standard errors (HC1/HC3/CV1/CV3)
//! with a pre-test interval, and a Monte Carlo laboratory.
//!
//! Everything numeric is generic over the scalar type via [`num::Real`]
//! (`f32` or `f64`); the `*64` aliases below fix `f64`, which the CLI uses.

pub mod boot;
pub mod data;
pub mod error;
pub mod lstsq;
pub mod mc;
pub mod num;
pub mod prob;
pub mod regress;
pub mod report;
pub mod rng;
pub mod robust;
pub mod seq;
pub mod sv;

pub use data::{ClusterNesting, CsvSpec, Partition, RegressionData};
pub use error::{Error, Result};
pub use num::Real;
pub use sv::{StatKind, Tail};

/// Concrete `f64` aliases for the generic core types.
pub type RegressionData64 = data::RegressionData<f64>;
pub type Model64 = regress::Model<f64>;
pub type OlsFit64 = regress::OlsFit<f64>;
pub type ScoreSet64 = regress::ScoreSet<f64>;
pub type SvStatistic64 = sv::SvStatistic<f64>;
pub type BootstrapResult64 = boot::BootstrapResult<f64>;
pub type SequentialResult64 = seq::SequentialResult<f64>;
pub type RobustVariance64 = robust::RobustVariance<f64>;
pub type PretestInterval64 = robust::PretestInterval<f64>;
