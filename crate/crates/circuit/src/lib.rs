//! Circuit side of the BoA-PTA solver stack.
//!
//! * [`netlist`] parses a SPICE-subset deck into an immutable [`Netlist`],
//!   serializes it back, extracts the seven-factor [`FeatureVector`] and
//!   generates Monte-Carlo perturbations of resistor values.
//! * [`mna`] assembles the modified-nodal-analysis residual and Jacobian and
//!   runs a damped Newton-Raphson iteration.
//! * [`cepta`] wraps the MNA system with compound pseudo-elements (RVC/GVL
//!   branches) and integrates the pseudo-transient to steady state.
//! * [`suite`] ships the desk-scale benchmark decks.

pub mod cepta;
pub mod devices;
mod error;
pub mod mna;
pub mod netlist;
pub mod suite;
mod units;

pub use cepta::{
    gvl_companion, insert_pseudo_elements, ramp_value, run_cepta, rvc_companion, AugmentedNetlist,
    CeptaConfig, PseudoBranch, PseudoKind, SimulationResult, SolverLimits, SolverParams,
};
pub use error::{CircuitError, ParamError, ParseError};
pub use mna::{newton_solve, Circuit, MnaSystem, NewtonOptions, NrResult};
pub use netlist::{
    extract_features, parse_netlist, perturb_netlist, Element, ElementKind, ElementValue,
    FeatureVector, ModelCard, ModelKind, Netlist, GROUND,
};
pub use units::parse_value;
