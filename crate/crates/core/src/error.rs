use thiserror::Error;

/// Errors raised by the memory models and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("{field} = {value} out of bounds (limit {limit})")]
    Bounds {
        field: &'static str,
        value: u64,
        limit: u64,
    },

    #[error("address {addr:#x} exceeds capacity of {capacity_bytes} bytes")]
    Capacity { addr: u64, capacity_bytes: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("ambiguous readout {measured}: between symbols {lower} and {upper}")]
    Decode {
        measured: f64,
        lower: u32,
        upper: u32,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("trace line {line}, column {column}: {message}")]
    TraceSyntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("trace line {line}: arrival time {time_ns} precedes previous {previous_ns}")]
    TimeRegression {
        line: usize,
        time_ns: f64,
        previous_ns: f64,
    },

    #[error("internal consistency: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
