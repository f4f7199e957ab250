use std::fmt;

use thiserror::Error;

/// One reason a system description was rejected.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NotPositive(String),
    NonFinite(String),
    Shape(String),
    Axiom(String),
    UnknownFamily(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotPositive(what) => write!(f, "{what} must be strictly positive"),
            Violation::NonFinite(what) => write!(f, "{what} must be finite"),
            Violation::Shape(msg) | Violation::Axiom(msg) => f.write_str(msg),
            Violation::UnknownFamily(name) => write!(
                f,
                "unknown growth family '{name}' (expected lotka_volterra, gompertz, leslie_gower or ricker)"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid system: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("non-finite argument to growth law")]
    NonFiniteInput,
    #[error("growth law returned {value} at (r, y) = ({r}, {y})")]
    NonFiniteLaw { r: f64, y: f64, value: f64 },
    #[error("growth law undefined at y = {y}{}", species.map(|s| format!(" (species {s})")).unwrap_or_default())]
    Domain { species: Option<usize>, y: f64 },
    #[error("state has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("state component {species} is {value}; densities must be finite and nonnegative")]
    NegativeState { species: usize, value: f64 },
    #[error("custom growth families cannot be serialized")]
    NotSerializable,
}

impl ModelError {
    /// Tag a domain error with the (0-based) species index; reported 1-based.
    pub(crate) fn at_species(self, i: usize) -> ModelError {
        match self {
            ModelError::Domain { y, .. } => ModelError::Domain { species: Some(i + 1), y },
            other => other,
        }
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            ModelError::Invalid(v) => v,
            _ => &[],
        }
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("operation requires n = {required}, got n = {got}")]
    Dimension { required: usize, got: usize },
    #[error("system is not nullcline stable")]
    NullclineUnstable,
    #[error(transparent)]
    Equilibrium(#[from] crate::equilibria::EquilibriumError),
    #[error("linear program failed: {0}")]
    Lp(#[from] crate::lp::LpError),
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error("invalid integrator options: {0}")]
    Options(String),
    #[error("weight vector has length {got}, expected {expected}")]
    WeightLength { expected: usize, got: usize },
}
