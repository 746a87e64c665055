use thiserror::Error;

/// Errors raised anywhere in the exploration / scheduling / simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("config error in field `{field}`: {msg}")]
    Config { field: &'static str, msg: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver budget exhausted without incumbent (lower bound {lower_bound_ns} ns)")]
    Timeout { lower_bound_ns: u64 },

    #[error("encode error: field `{field}` value {value} exceeds {width}-bit width")]
    Encode {
        field: &'static str,
        value: u64,
        width: u32,
    },

    #[error("encode error: {0}")]
    Range(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("simulation deadlock; unit cursors: {0}")]
    Deadlock(String),

    #[error("simulation fault: {0}")]
    Fault(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
