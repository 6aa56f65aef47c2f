//! Desk-scale artwork scoring and critique.
//!
//! A small vision-language transformer that reads a painting plus its
//! textual description and, in a single forward pass, predicts a 0-100
//! rubric score through a regression head on a reserved scoring token and
//! generates a band-aligned critique. The base model can be frozen in
//! blockwise 4-bit form with trainable low-rank adapters injected into the
//! attention and MLP layers. A procedural painting corpus with exact
//! ground-truth scores makes training and every evaluation metric
//! reproducible end to end.
//!
//! Start with the runnable examples (`cargo run --example full_pipeline`)
//! or the `atelier` binary for file-based workflows.

pub mod error;
pub mod rng;
pub mod tensor;
pub mod cli;
pub mod corpus;
pub mod model;
pub mod qlora;

pub use error::{Error, Result};
