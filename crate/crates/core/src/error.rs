use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range user input.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input that is well formed but inconsistent with the model, such as a bundle
    /// that does not lie on its own budget.
    #[error("data error: {0}")]
    Data(String),

    /// A size cap would be exceeded.
    #[error("{what} exceeds the configured cap ({value} > {cap}){hint}")]
    CapExceeded { what: &'static str, value: u128, cap: u128, hint: &'static str },

    #[error("solver failed: {message} (best objective {objective:e}, kkt residual {kkt:e})")]
    Solver { message: String, objective: f64, kkt: f64 },

    /// The linear program has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Something that should be impossible given validated inputs.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's input rather than by the library.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Data(_)
                | Error::CapExceeded { .. }
                | Error::Infeasible(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
