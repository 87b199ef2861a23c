use std::fmt;

use crate::data::BinLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A bin whose target count exceeds the records available in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinDeficit {
    pub label: BinLabel,
    pub required: u64,
    pub available: u64,
}

impl fmt::Display for BinDeficit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bin (s={}, y={}) needs {} but has {}",
            self.label.sensitive, self.label.decision, self.required, self.available
        )
    }
}

fn join_deficits(bins: &[BinDeficit]) -> String {
    bins.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error at {}, column `{column}`: {reason}", row.map_or("header".to_string(), |r| format!("row {r}")))]
    Schema {
        /// 1-based data row (header excluded); `None` for header problems.
        row: Option<usize>,
        column: String,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("infeasible flow: demand {demand} exceeds maximum flow {max_flow}")]
    InfeasibleFlow { demand: i64, max_flow: i64 },

    #[error("infeasible bin spec: {}", join_deficits(.0))]
    InfeasibleBins(Vec<BinDeficit>),

    #[error("bootstrap round {round} infeasible: {}", join_deficits(.bins))]
    InfeasibleRound { round: usize, bins: Vec<BinDeficit> },

    #[error("infeasible constraint band: {0}")]
    InfeasibleBand(String),

    #[error(
        "no convergence after {iterations} iterations (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error("transport instance has {arcs} arcs, above the limit of {limit}; use the bootstrap estimator")]
    TooLarge { arcs: usize, limit: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleFlow { .. }
                | Error::InfeasibleBins(_)
                | Error::InfeasibleRound { .. }
                | Error::InfeasibleBand(_)
        )
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            e if e.is_infeasible() => 3,
            Error::NoConvergence { .. } => 4,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
