use thiserror::Error;

/// Netlist syntax and validity errors. Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty input")]
    Empty,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate element name `{name}`")]
    DuplicateElement { line: usize, name: String },
    #[error("line {line}: duplicate model `{name}`")]
    DuplicateModel { line: usize, name: String },
    #[error("netlist has no elements")]
    NoElements,
    #[error("netlist has no ground node `0`")]
    MissingGround,
    #[error("node `{node}` has no path to ground")]
    Disconnected { node: String },
    #[error("node `{node}` is dangling (referenced by `{element}` only)")]
    DanglingNode { node: String, element: String },
    #[error("element `{element}` references unknown model `{model}`")]
    UnknownModel { element: String, model: String },
    #[error("element `{element}`: {message}")]
    InvalidElement { element: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} = {value:e} is outside [1e-7, 1e7]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("tau must be positive and finite, got {0:e}")]
    Tau(f64),
    #[error("variation must lie in (0, 1), got {0}")]
    Variation(f64),
    #[error("netlist contains no resistor to perturb")]
    NoResistor,
}

/// Errors raised while building or stamping an MNA system.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("element `{element}` references unknown model `{model}`")]
    UnknownModel { element: String, model: String },
    #[error("element `{element}` references model `{model}` of the wrong type")]
    ModelMismatch { element: String, model: String },
    #[error("element `{element}` references unknown node `{node}`")]
    UnknownNode { element: String, node: String },
    #[error("non-finite stamp value for `{element}`")]
    NonFinite { element: String },
    #[error("state has dimension {got}, system expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("companion stamp overflowed")]
    CompanionOverflow,
}
