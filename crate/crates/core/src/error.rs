use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mixture parameters: {0}")]
    InvalidParams(String),

    #[error("value {value} is outside the domain [0, 1] of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("malformed grid: {0}")]
    MalformedGrid(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid partition collection bounds: m_min={m_min}, m_max={m_max}")]
    InvalidCollection { m_min: u32, m_max: u32 },

    #[error("empty partition collection")]
    EmptyCollection,

    #[error("leave-p-out size p={p} is outside 1..={max} (n={n})")]
    PRange { p: usize, n: usize, max: usize },

    #[error("moment s_{i}{j} is not present in the moment set")]
    MissingMoment { i: u32, j: u32 },

    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("efficient information is zero when delta = 0; theta is not differentiable")]
    ZeroInformation,

    #[error("parameter {name} = {value} is out of range ({range})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("log-log fit requires positive MSE values, got {0}")]
    NonPositiveMse(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
