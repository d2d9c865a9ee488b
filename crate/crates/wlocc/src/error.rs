//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("component {index} is negative or non-finite: {value}")]
    NegativeComponent { index: usize, value: f64 },
    #[error("component sum {sum} exceeds one")]
    SumExceedsOne { sum: f64 },
    #[error("component vector is empty")]
    EmptyVector,
    #[error("party counts differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("statevector norm {norm} is not one")]
    NotNormalized { norm: f64 },
    #[error("amplitude of magnitude {magnitude} on basis state {index} of weight >= 2")]
    NotWClassForm { index: usize, magnitude: f64 },
    #[error("party {party} out of range for {n} parties")]
    PartyOutOfRange { party: usize, n: usize },
    #[error("invalid outcome triple: {0}")]
    InvalidOutcome(String),
    #[error("updated component {index} has value {value} > 1")]
    ComponentOverflow { index: usize, value: f64 },
    #[error("sigma {0} outside (0, 1]")]
    SigmaOutOfRange(f64),
    #[error("party {party} has degenerate component {value}")]
    DegenerateComponent { party: usize, value: f64 },
    #[error("probability {p} too small: must exceed {min}")]
    ProbabilityTooSmall { p: f64, min: f64 },
    #[error("target {target} is not below component {current} of party {party}")]
    TargetNotBelow { party: usize, target: f64, current: f64 },
    #[error("need at least three parties, got {0}")]
    TooFewParties(usize),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("step {round} has no operator realization")]
    UnrealizableStep { round: usize },
    #[error("step {round} precondition violated: {reason}")]
    StepPreconditionViolated { round: usize, reason: String },
    #[error("source state is a product state")]
    ProductState,
    #[error("party {party} is entangled in the target but carries no weight in the source")]
    TargetUnreachable { party: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("party {party} has zero component")]
    ZeroComponent { party: usize },
    #[error("argument {0} outside the valid domain")]
    DomainError(f64),
    #[error("no feasible point in the scan range near {0}")]
    InfeasiblePoint(f64),
}

impl Error {
    /// Stable machine-readable code, used by the CLI's error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NegativeComponent { .. } => "negative_component",
            Error::SumExceedsOne { .. } => "sum_exceeds_one",
            Error::EmptyVector => "empty_vector",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotNormalized { .. } => "not_normalized",
            Error::NotWClassForm { .. } => "not_w_class_form",
            Error::PartyOutOfRange { .. } => "party_out_of_range",
            Error::InvalidOutcome(_) => "invalid_outcome",
            Error::ComponentOverflow { .. } => "component_overflow",
            Error::SigmaOutOfRange(_) => "sigma_out_of_range",
            Error::DegenerateComponent { .. } => "degenerate_component",
            Error::ProbabilityTooSmall { .. } => "probability_too_small",
            Error::TargetNotBelow { .. } => "target_not_below",
            Error::TooFewParties(_) => "too_few_parties",
            Error::InvalidMeasurement(_) => "invalid_measurement",
            Error::UnrealizableStep { .. } => "unrealizable_step",
            Error::StepPreconditionViolated { .. } => "step_precondition",
            Error::ProductState => "product_state",
            Error::TargetUnreachable { .. } => "target_unreachable",
            Error::PreconditionViolated(_) => "precondition",
            Error::ZeroComponent { .. } => "zero_component",
            Error::DomainError(_) => "domain",
            Error::InfeasiblePoint(_) => "infeasible_point",
        }
    }
}
