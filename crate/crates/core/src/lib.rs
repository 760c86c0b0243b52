//! Group R2D2 shrinkage prior for grouped linear regression.
//!
//! The sampler lives in [`sampler`], prior diagnostics in [`priorlab`], the
//! simulation harness in [`simlab`] and the B-spline additive model in
//! [`additive`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod additive;
pub mod error;
pub mod geweke;
pub mod hyper;
pub mod model;
pub mod priorlab;
pub mod quad;
pub mod report;
pub mod rngdist;
pub mod sampler;
pub mod simlab;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use hyper::{make_hyperparams, HyperParams, Strategy, DEFAULT_A, DEFAULT_B};
pub use model::{ChainState, Dataset, GroupStructure, R2Decomposition};
pub use rngdist::RandomStream;
pub use sampler::{
    run_chain, summarize_posterior, ChainOutput, PosteriorSummary, SamplerConfig, Summary, Variant,
};
pub use simlab::{Method, ScenarioId};
