use thiserror::Error;

use crate::model::Sector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infinite reduction time: spin-apparatus coupling g is zero")]
    InfiniteReductionTime,

    #[error("irreversibility time undefined: `{0}` is zero")]
    InfiniteIrreversibilityTime(&'static str),

    #[error("no broken-symmetry phase: temperature {temperature} >= coupling J {coupling_j}")]
    NoBrokenSymmetry { temperature: f64, coupling_j: f64 },

    #[error("registration formula outside validity: ln argument {argument} <= 1")]
    RegistrationFormulaInvalid { argument: f64 },

    #[error("step size {dt} exceeds stability bound {bound} (dt x max total rate must be <= 1)")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("sector {sector:?} did not register before t_max = {t_max}")]
    NonRegistration { sector: Sector, t_max: f64 },

    #[error("parameter regime violated: {failed}")]
    RegimeViolation { failed: String },

    #[error("oracle size n = {n} exceeds the enumeration cap of {cap}")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("invalid spin state: {0}")]
    InvalidSpinState(String),

    #[error("measurement incomplete: off-diagonal residual {residual:e} exceeds {threshold:e}")]
    MeasurementIncomplete { residual: f64, threshold: f64 },

    #[error("t_stop = {t_stop} outside the reduction window [{lower}, {upper}]")]
    OutsideReductionWindow { t_stop: f64, lower: f64, upper: f64 },

    #[error("time grid is empty")]
    EmptyTimeGrid,

    #[error("time grid is not sorted ascending at index {index}")]
    UnsortedTimes { index: usize },

    #[error("config error{}: {message}", location(.line, .key))]
    Config {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(line: &Option<usize>, key: &Option<String>) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!(" (line {l}, key `{k}`)"),
        (Some(l), None) => format!(" (line {l})"),
        (None, Some(k)) => format!(" (key `{k}`)"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn config(key: Option<&str>, message: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            key: key.map(str::to_owned),
            message: message.into(),
        }
    }
}
