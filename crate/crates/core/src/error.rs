use thiserror::Error;

/// Constraint that made an allocation infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    /// Required local frequency exceeds `f_max`.
    LocalFrequency,
    /// Required rate is not reachable even at `p_max`.
    TransmitPower,
    /// Local computation plus transmission cannot fit into `T_max`.
    RoundDeadline,
    /// The server cannot finish DT computation within `T_max`.
    TwinDeadline,
}

impl std::fmt::Display for Binding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Binding::LocalFrequency => "local frequency bound f_max",
            Binding::TransmitPower => "transmit power bound p_max",
            Binding::RoundDeadline => "round deadline T_max",
            Binding::TwinDeadline => "digital-twin deadline T_max",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown client id {0}")]
    UnknownClient(usize),
    #[error("zero transmission rate for client {0}")]
    InfeasibleTransmission(usize),
    #[error("client {client} infeasible: {binding}")]
    Infeasible { client: usize, binding: Binding },
    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        history: Vec<f64>,
    },
    #[error("empty feasible set")]
    EmptyFeasibleSet,
    #[error("empty selection")]
    EmptySelection,
    #[error("config: {0}")]
    Config(String),
    #[error("mnist: {0}")]
    Mnist(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
