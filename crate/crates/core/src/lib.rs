//! Prefix-reuse acceleration for multi-sample self-consistency generation,
//! with the consistency scorers and evaluation metrics built on top of it.

pub mod commands;
pub mod decoding;
pub mod error;
pub mod hash;
pub mod manifest;
pub mod memory;
pub mod model;
pub mod eval;
pub mod pipeline;
pub mod provider;
pub mod records;
pub mod remote;
pub mod scorers;

pub use error::{Error, Result};
