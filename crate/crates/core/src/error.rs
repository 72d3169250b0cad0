use thiserror::Error;

/// Errors produced by market construction, oracles and learners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("identity-offset link requires alpha + u >= 0 on the index interval (alpha = {alpha}, u_min = {u_min})")]
    NegativeMean { alpha: f64, u_min: f64 },

    #[error("price {price} outside [{lo}, {hi}] for seller {seller}")]
    PriceOutOfBox {
        seller: usize,
        price: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("revenue not concave near p = {price} for seller {seller} (second difference {second_difference:.3e} > 0)")]
    ConcavityViolation {
        seller: usize,
        price: f64,
        second_difference: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
