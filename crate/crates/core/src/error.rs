use std::fmt;

use thiserror::Error;

use crate::fixedpoint::FixedPointResult;

/// Problems with a single Markovian arrival process descriptor.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("invalid MAP descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("MAP generator C + D is singular or reducible")]
    SingularGenerator,
    #[error("phase {phase} has zero stationary arrival rate")]
    ZeroPhaseRate { phase: usize },
}

/// One broken model invariant. Station fields are zero-based; messages
/// print them one-based, as in configuration files.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("routing: {0}")]
    Routing(String),
    #[error("station {}: {reason}", .station + 1)]
    DegenerateStation { station: usize, reason: String },
    #[error("rate: {0}")]
    Rate(String),
    #[error("arrivals at station {}: {source}", .station + 1)]
    Arrivals { station: usize, source: MapError },
}

impl Violation {
    /// Degenerate stations (no outgoing or no incoming road) are the only
    /// violations that are really statements about path-graph connectivity.
    pub fn is_connectivity(&self) -> bool {
        matches!(self, Violation::DegenerateStation { .. })
    }
}

/// Every violation found while validating a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<Violation>);

impl ValidationErrors {
    pub fn violations(&self) -> &[Violation] {
        &self.0
    }
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} model violation(s)", self.0.len())?;
        for v in &self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("routing matrix is reducible: {0}")]
    ReducibleMatrix(String),
    #[error("state space has {count} states, which exceeds the cap of {cap}")]
    StateSpaceTooLarge { count: u128, cap: u128 },
    #[error(
        "fixed point did not converge after {} iterations (residual {:e})",
        .best.iterations,
        .best.residual
    )]
    NoConvergence { best: Box<FixedPointResult> },
    #[error("no road {}->{}", .from + 1, .to + 1)]
    UnknownRoad { from: usize, to: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("simulation aborted: {0}")]
    Simulation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
