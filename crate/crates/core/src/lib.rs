//! Small dense feedforward networks written from scratch, and the tooling
//! around them for set-valued regression.
//!
//! A network trained with the logcosh loss on data drawn from two branches of
//! a set-valued mapping tends to follow the branch that holds most samples,
//! rather than their mean. [`branchclass`] builds on that to classify samples
//! by branch and to test whether an unobserved binary feature splits a panel
//! of units into distinct populations.
//!
//! - [`numerics`]: matrices, vectors, seeded randomness
//! - [`activations`], [`losses`], [`network`]: the networks and their training
//! - [`setvalued`]: the 1D and 2D two-branch toy datasets
//! - [`features`]: district panel ingestion and feature engineering
//! - [`branchclass`]: majority-branch fitting, classification, detection protocol

pub mod activations;
pub mod branchclass;
pub mod dataset;
pub mod features;
pub mod error;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod setvalued;

pub use activations::Activation;
pub use dataset::{Dataset, Population, SampleTags};
pub use error::{Error, Result};
pub use losses::Loss;
pub use network::{EarlyStopping, LayerSpec, NetworkConfig, Optimizer, TrainedModel};
pub use numerics::{Matrix, Rng, Vector};
