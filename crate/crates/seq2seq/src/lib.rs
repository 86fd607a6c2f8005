//! File formats, experiment plumbing and the command-line pipeline around
//! [`seq2seq_core`].
//!
//! - [`io`]: corpus, vocabulary and checkpoint files.
//! - [`nbest`]: the `<id> ||| <tokens> ||| <score>` n-best list format.
//! - [`scatter`]: CSV and SVG export of 2-D projections.
//! - [`metrics`]: a training observer that streams the metric log and writes
//!   periodic checkpoints.
//! - [`cli`]: the `seq2seq` executable's subcommands.

pub mod cli;
mod error;
pub mod io;
pub mod metrics;
pub mod nbest;
pub mod scatter;

pub use error::{AppError, AppResult};
pub use seq2seq_core as core;
