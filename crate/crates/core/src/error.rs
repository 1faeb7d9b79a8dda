use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    InvalidAxis { axis: usize, dim: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("stencil order must be 2 or 4, got {0}")]
    InvalidStencilOrder(u32),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at node {node}")]
    NonFiniteValue { node: usize },

    #[error("incompatible winding: {0}")]
    IncompatibleWinding(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown map family `{0}`")]
    UnknownFamily(String),

    #[error("convergence order undefined: {0}")]
    OrderUndefined(String),

    #[error("config line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value `{value}` for `{key}`; expected one of: {expected}")]
    InvalidEnum {
        key: String,
        value: String,
        expected: String,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
