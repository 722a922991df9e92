//! Global LSTM forecasting across collections of related series, with
//! bootstrap/averaging/simulation-based series generation, transfer of
//! pre-trained models, and rank-based accuracy comparison.

pub mod augment;
pub mod cli;
pub mod data;
pub mod decompose;
pub mod error;
pub mod eval;
pub mod net;
pub mod pipeline;
pub mod transfer;

pub use error::{Error, Result};
