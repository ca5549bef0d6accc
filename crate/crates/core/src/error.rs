use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree on shape. Both shapes are `(rows, cols)`.
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A length or index fell outside its admissible range.
    Range {
        what: &'static str,
        value: usize,
        limit: usize,
    },
    EmptyContext,
    /// A head or model configuration that cannot be realized.
    Config(String),
    /// Label grammar violation; `pos` is a byte offset into the label.
    Parse { pos: usize, msg: String },
    /// A function under evaluation produced NaN or infinity.
    NonFinite(&'static str),
    /// A task specification that cannot be generated.
    Task(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, left, right } => write!(
                f,
                "{op}: dimension mismatch between {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::Range { what, value, limit } => {
                write!(f, "{what} = {value} is out of range (limit {limit})")
            }
            Error::EmptyContext => f.write_str("context must hold at least one token"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Parse { pos, msg } => write!(f, "label parse error at {pos}: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::Task(msg) => write!(f, "infeasible task: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
