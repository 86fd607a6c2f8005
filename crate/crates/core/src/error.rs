use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("source sentence is empty")]
    EmptySource,
    #[error("invalid input: {0}")]
    Input(String),
    #[error("line count mismatch: source has {source_lines} lines, target has {target_lines}")]
    Alignment {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("loss diverged (non-finite) at batch {batch}")]
    NumericalDivergence { batch: usize },
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }
}
