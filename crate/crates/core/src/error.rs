use evcs_lp::{LpError, LpStatus};
use thiserror::Error;

use crate::domain::Activity;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no building has activity `{0}`; cannot place drivers with that activity")]
    NoBuildings(Activity),
    #[error("model construction failed: {0}")]
    Build(String),
    /// The second stage always admits y = o = 0, so anything but an optimum
    /// here points at a construction or numerical bug.
    #[error("second-stage LP for scenario {scenario} ended with status {status:?}")]
    Subproblem { scenario: usize, status: LpStatus },
    #[error("solver ended with status {0:?} and no usable solution")]
    Solver(LpStatus),
    #[error(transparent)]
    Lp(#[from] LpError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}
