//! Deep LSTM encoder-decoder for sequence-to-sequence learning, written without
//! an autodiff framework.
//!
//! The crate is `no_std` (with `alloc`) so the numeric core carries no IO. The
//! `std` feature (on by default) only switches floating-point intrinsics from
//! `libm` to the platform implementation.
//!
//! Pipeline, bottom-up:
//!
//! - [`numerics`]: dense [`Matrix`] with a fixed accumulation order.
//! - [`recurrent`]: LSTM and vanilla RNN cells, forward and hand-derived backward,
//!   plus deep-stack propagation through time.
//! - [`model`]: the encoder-decoder, its loss and gradients.
//! - [`training`]: SGD with the step-halving schedule, global-norm clipping and
//!   length bucketing.
//! - [`decoding`]: beam search, ensembles and n-best rescoring.
//! - [`evaluation`]: corpus BLEU, perplexity and bucketed breakdowns.
//! - [`analysis`]: sentence representations and a 2-D PCA projection.
//! - [`corpus`], [`checkpoint`], [`synthetic`]: vocabularies, the binary
//!   checkpoint codec and toy task generators.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod checkpoint;
pub mod corpus;
pub mod decoding;
mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod recurrent;
mod rng;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Matrix, Precision, Real};
