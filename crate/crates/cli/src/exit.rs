//! Exit-code contract: 0 success, 1 configuration or usage, 2 numerical
//! failure, 3 constraint conflict.

use std::fmt;

pub const CONFIG: i32 = 1;
pub const NUMERICAL: i32 = 2;
pub const CONFLICT: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: CONFIG, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: NUMERICAL, message: message.into() }
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self { code: CONFLICT, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(e) = cause.downcast_ref::<hamfin_core::Error>() {
            return match e {
                hamfin_core::Error::NumericalFailure { .. } | hamfin_core::Error::Range(_) => NUMERICAL,
                hamfin_core::Error::DegenerateSystem(_) => CONFLICT,
                _ => CONFIG,
            };
        }
    }
    CONFIG
}
