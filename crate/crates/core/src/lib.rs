//! Multivariate bandit optimization of page layouts.
//!
//! A layout assigns one content to each widget of a template. Rewards are
//! modelled by Bayesian linear probit regression over indicator features of
//! the layout (first-order content effects, pairwise content interactions,
//! optionally context and content-context terms). Layouts are chosen by
//! Thompson sampling, with the argmax over the combinatorial layout space
//! either enumerated exactly or approximated by hill climbing with random
//! restarts.
//!
//! - [`features`]: templates, layouts and the weight-index scheme
//! - [`blip`]: the probit posterior and its moment-matched updates
//! - [`policy`]: Thompson selection, exhaustive and hill-climbing argmax
//! - [`simulator`]: synthetic environments, bandit loop, regret
//! - [`analysis`]: likelihood-ratio tests, convergence, hill-climb studies
//! - [`cli`]: configuration files, commands and CSV/snapshot outputs

pub mod analysis;
pub mod blip;
pub mod cli;
pub mod error;
pub mod features;
pub mod normal;
pub mod policy;
pub mod seed;
pub mod simulator;
pub mod snapshot;

pub use error::{Error, Result};
