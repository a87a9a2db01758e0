//! Probing framework for encoder-decoder dialog models.
//!
//! The pipeline: load and normalize dialog corpora ([`corpus`]), train
//! encoder-decoder models on next-utterance prediction ([`model`]), freeze
//! them, extract fixed-length representations from the frozen encoders
//! ([`extract`]) for a suite of conversational-understanding tasks
//! ([`tasks`]), train shallow classifier probes on those representations
//! ([`probe`]), and aggregate the resulting accuracies into tables, deltas
//! and correlation reports ([`analysis`]).

pub mod analysis;
pub mod corpus;
pub mod extract;
pub mod hashing;
pub mod model;
pub mod nn;
pub mod probe;
pub mod synth;
pub mod tasks;
