//! Error taxonomy shared by every module.
//!
//! Three families matter to callers: `Domain` and `Capacity` mean the input
//! was unusable, `Hypothesis` means a smallness condition required by the
//! construction failed on honest data, and `Numeric` means a solve produced
//! values that cannot be trusted (NaN, singular system, divergent residual).
//! The CLI maps these onto distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the documented domain of an operation.
    #[error("{module}::{op}: {detail}")]
    Domain {
        module: &'static str,
        op: &'static str,
        detail: String,
    },

    /// Problem size beyond the supported desk-scale cap.
    #[error("{module}::{op}: {detail}")]
    Capacity {
        module: &'static str,
        op: &'static str,
        detail: String,
    },

    /// A smallness hypothesis failed; `required` carries the parameter value
    /// that would have been admissible when one can be named.
    #[error("{module}::{op}: hypothesis violated: {detail}")]
    Hypothesis {
        module: &'static str,
        op: &'static str,
        detail: String,
        required: Option<f64>,
    },

    /// Numerical failure: non-finite values, singular systems, or a residual
    /// that did not converge.
    #[error("{module}::{op}: numeric failure: {detail}")]
    Numeric {
        module: &'static str,
        op: &'static str,
        detail: String,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed on-disk data (density files, config fragments).
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(module: &'static str, op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            module,
            op,
            detail: detail.into(),
        }
    }

    pub fn capacity(module: &'static str, op: &'static str, detail: impl Into<String>) -> Self {
        Error::Capacity {
            module,
            op,
            detail: detail.into(),
        }
    }

    pub fn hypothesis(
        module: &'static str,
        op: &'static str,
        detail: impl Into<String>,
        required: Option<f64>,
    ) -> Self {
        Error::Hypothesis {
            module,
            op,
            detail: detail.into(),
            required,
        }
    }

    pub fn numeric(module: &'static str, op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            module,
            op,
            detail: detail.into(),
        }
    }
}
