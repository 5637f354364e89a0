use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    Network(String),

    #[error("eigen sector {sector} holds {found} states, expected {expected}")]
    Sector {
        sector: usize,
        found: usize,
        expected: usize,
    },

    #[error("invalid bath: {0}")]
    Bath(String),

    #[error("poles {0} and {1} of the correlation function coincide")]
    DegeneratePoles(usize, usize),

    #[error("quadrature did not converge (estimated error {error:e}, tolerance {tolerance:e})")]
    Quadrature { error: f64, tolerance: f64 },

    #[error("Bose occupation is singular at zero frequency")]
    SingularBose,

    #[error("invalid pulse: {0}")]
    Pulse(String),

    #[error("hierarchy with {count} auxiliary matrices exceeds the budget of {budget}")]
    HierarchyBudget { count: usize, budget: usize },

    #[error("invalid hierarchy: {0}")]
    Hierarchy(String),

    #[error("step size underflow at t = {t:e} a.u. (step {step:e}{})", error_note(.error))]
    StepUnderflow {
        t: f64,
        step: f64,
        /// Scaled error of the last rejected trial, if one was taken.
        error: Option<f64>,
    },

    #[error("non-finite state at t = {t:e} a.u. in auxiliary matrix {ado}")]
    NonFinite { t: f64, ado: usize },

    #[error("integrator: {0}")]
    Integrator(String),

    #[error("efficiency ratio undefined: no emission occurred")]
    UndefinedRatio,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures raised while propagating a trajectory.
    pub fn is_integration_failure(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. } | Error::NonFinite { .. } | Error::Integrator(_)
        )
    }
}

fn error_note(error: &Option<f64>) -> String {
    match error {
        Some(e) => format!(", error estimate {e:e}"),
        None => ", below the minimum before any trial".into(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
