//! Desk-scale benchmark harness for tuning deep-learning models on tabular
//! classification data.
//!
//! The pipeline: load CSV/ARFF datasets, convert factor columns, profile
//! sparsity and class balance, min-max normalize, split deterministically,
//! train one of four model families (FFNN, RNN, SAE, DBN) and search its
//! hyperparameters with grid, random or Nelder-Mead strategies, then
//! aggregate trials into statistically validated reports.

pub mod config;
pub mod data;
pub mod experiment;
pub mod error;
pub mod splits;
pub mod nn;
pub mod report;
pub mod search;
pub mod stats;

pub use error::{Error, Result};
