//! Individual-difference choice modelling for two-option gamble tasks.
//!
//! This crate holds the numerical core and is `no_std` + `alloc` when the
//! default `std` feature is disabled. File formats, CSV ingest and the CLI
//! live in the `choicelab` crate.
//!
//! Modules:
//! - [`data`]: gamble scenarios, choice records, participants, splits.
//! - [`nnkit`]: dense layers, embeddings, backprop, SGD training, gradient checks.
//! - [`repr`]: ID-embedding, demographic and free-text representation models.
//! - [`prospect`]: subjective-value choice model and its hierarchical posterior.
//! - [`sampler`]: HMC, MAP optimisation and convergence diagnostics.
//! - [`baselines`]: random forest and plain MLP baselines.
//! - [`harness`]: metrics, agent simulation and experiment plumbing.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod harness;
pub mod math;
pub mod nnkit;
pub mod prospect;
pub mod repr;
pub mod sampler;

pub use data::{ChoiceRecord, Dataset, Frame, GambleOption, GambleScenario, Participant, Recipient, UserId};
