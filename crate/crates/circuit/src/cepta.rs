//! Compound-element pseudo-transient analysis (CEPTA).
//!
//! Pseudo-elements are inserted in their backward-Euler equivalent form so the
//! unknown vector keeps the dimension of the original MNA system:
//!
//! * a GVL branch (inductor `L` in parallel with a ramped conductance `G(t)`)
//!   in series with every independent voltage source, folded into the source's
//!   branch row as a Thevenin pair `(r_eq, v_eq)`;
//! * an RVC branch (ramped resistor `R(t)` in series with capacitor `C`) across
//!   every independent current source and from every transistor terminal node
//!   to ground, stamped as a Norton pair `(g_eq, i_eq)`.
//!
//! `R(t) = R0 exp(t/tau)` and `G(t) = G0 exp(t/tau)`. At a pseudo-time steady
//! state the inductor voltage and capacitor current vanish, so the solution
//! is an operating point of the original circuit whatever the parameters.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CircuitError, ParamError};
use crate::mna::{newton_solve, Circuit, Equations, MnaSystem, NewtonOptions};
use crate::netlist::{ElementKind, Netlist, GROUND};

/// Ramped values are capped here; a branch at the cap is switched to its
/// exact open (RVC) or short (GVL) limit.
pub const RAMP_CAP: f64 = 1e30;
pub const PARAM_MIN: f64 = 1e-7;
pub const PARAM_MAX: f64 = 1e7;

/// The four tunable pseudo-element values plus the ramp time constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Pseudo capacitance (F).
    pub c_pseudo: f64,
    /// Pseudo inductance (H).
    pub l_pseudo: f64,
    /// Initial RVC resistance (ohm).
    pub r0: f64,
    /// Initial GVL conductance (S).
    pub g0: f64,
    /// Ramp time constant (s).
    pub tau: f64,
}

impl SolverParams {
    pub const NAMES: [&'static str; 4] = ["c_pseudo", "l_pseudo", "r0", "g0"];

    pub fn new(c_pseudo: f64, l_pseudo: f64, r0: f64, g0: f64, tau: f64) -> Result<Self, ParamError> {
        let p = Self { c_pseudo, l_pseudo, r0, g0, tau };
        p.validate()?;
        Ok(p)
    }

    /// Builds params from the 4-vector `(C, L, R0, G0)`.
    pub fn from_vector(x: [f64; 4], tau: f64) -> Result<Self, ParamError> {
        Self::new(x[0], x[1], x[2], x[3], tau)
    }

    pub fn vector(&self) -> [f64; 4] {
        [self.c_pseudo, self.l_pseudo, self.r0, self.g0]
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in Self::NAMES.into_iter().zip(self.vector()) {
            if !(PARAM_MIN..=PARAM_MAX).contains(&value) {
                return Err(ParamError::OutOfRange { name, value });
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ParamError::Tau(self.tau));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PseudoKind {
    /// Ramped resistor in series with a capacitor.
    Rvc,
    /// Inductor in parallel with a ramped conductance.
    Gvl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Attachment {
    /// In series with the named voltage source.
    VSource(String),
    /// In parallel with the named current source.
    ISource(String),
    /// From the named transistor node to ground.
    Node(String),
}

/// One inserted pseudo-element with its branch state `(V_CB, I_CB)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoBranch {
    pub kind: PseudoKind,
    pub attachment: Attachment,
    /// Branch voltage; for a GVL it includes the source voltage `e_source`.
    pub v_cb: f64,
    pub i_cb: f64,
    pub e_source: f64,
    #[serde(skip)]
    a: Option<usize>,
    #[serde(skip)]
    b: Option<usize>,
    #[serde(skip)]
    branch: Option<usize>,
}

/// A circuit with its pseudo-element sites resolved.
#[derive(Debug, Clone)]
pub struct AugmentedNetlist {
    pub circuit: Circuit,
    pub params: SolverParams,
    pub branches: Vec<PseudoBranch>,
}

impl AugmentedNetlist {
    pub fn count(&self, kind: PseudoKind) -> usize {
        self.branches.iter().filter(|b| b.kind == kind).count()
    }

    pub fn dim(&self) -> usize {
        self.circuit.dim()
    }
}

/// Resolves the insertion sites: one GVL per voltage source, one RVC per current
/// source and one RVC per distinct non-ground transistor node.
pub fn insert_pseudo_elements(netlist: &Netlist, params: &SolverParams) -> Result<AugmentedNetlist, CircuitError> {
    params.validate()?;
    let circuit = Circuit::new(netlist)?;
    Ok(augment(circuit, params))
}

fn augment(circuit: Circuit, params: &SolverParams) -> AugmentedNetlist {
    let mut branches = Vec::new();
    let netlist = circuit.netlist();
    let vs_names = netlist.elements().iter().filter(|e| e.kind == ElementKind::VSource).map(|e| e.name.clone());
    for (name, (p, n, branch, e)) in vs_names.zip(circuit.vsources()) {
        branches.push(PseudoBranch {
            kind: PseudoKind::Gvl,
            attachment: Attachment::VSource(name),
            v_cb: 0.0,
            i_cb: 0.0,
            e_source: e,
            a: p,
            b: n,
            branch: Some(branch),
        });
    }
    let is_names = netlist.elements().iter().filter(|e| e.kind == ElementKind::ISource).map(|e| e.name.clone());
    for (name, (p, n)) in is_names.zip(circuit.isources()) {
        branches.push(PseudoBranch {
            kind: PseudoKind::Rvc,
            attachment: Attachment::ISource(name),
            v_cb: 0.0,
            i_cb: 0.0,
            e_source: 0.0,
            a: p,
            b: n,
            branch: None,
        });
    }
    let mut seen = HashSet::new();
    for el in netlist.elements().iter().filter(|e| e.kind.is_transistor()) {
        for node in &el.terminals {
            if node != GROUND && seen.insert(node.clone()) {
                let a = circuit.index().node(node).flatten();
                branches.push(PseudoBranch {
                    kind: PseudoKind::Rvc,
                    attachment: Attachment::Node(node.clone()),
                    v_cb: 0.0,
                    i_cb: 0.0,
                    e_source: 0.0,
                    a,
                    b: None,
                    branch: None,
                });
            }
        }
    }
    AugmentedNetlist { circuit, params: *params, branches }
}

/// `v0 * exp(t / tau)`, capped at [`RAMP_CAP`].
pub fn ramp_value(v0: f64, tau: f64, t: f64) -> f64 {
    let x = t / tau;
    if x >= (RAMP_CAP / v0).ln() {
        RAMP_CAP
    } else {
        (v0 * x.exp()).min(RAMP_CAP)
    }
}

/// Backward-Euler equivalent of an RVC branch: `I = g_eq * V + i_eq` with
/// `1/g_eq = h/C + R(t_next)` and `i_eq = g_eq * (I_prev * R(t_prev) - V_prev)`.
pub fn rvc_companion(
    h: f64,
    c: f64,
    r_next: f64,
    r_prev: f64,
    v_prev: f64,
    i_prev: f64,
) -> Result<(f64, f64), CircuitError> {
    let g_eq = 1.0 / (h / c + r_next);
    let i_eq = g_eq * (i_prev * r_prev - v_prev);
    if g_eq.is_finite() && i_eq.is_finite() {
        Ok((g_eq, i_eq))
    } else {
        Err(CircuitError::CompanionOverflow)
    }
}

/// Backward-Euler equivalent of a GVL branch in series with source `e`:
/// `V = r_eq * I + v_eq` with `1/r_eq = h/L + G(t_next)` and
/// `v_eq = r_eq * (-I_prev + G(t_prev) * (V_prev - e)) + e`.
pub fn gvl_companion(
    h: f64,
    l: f64,
    g_next: f64,
    g_prev: f64,
    v_prev: f64,
    i_prev: f64,
    e: f64,
) -> Result<(f64, f64), CircuitError> {
    let r_eq = 1.0 / (h / l + g_next);
    let v_eq = r_eq * (-i_prev + g_prev * (v_prev - e)) + e;
    if r_eq.is_finite() && v_eq.is_finite() {
        Ok((r_eq, v_eq))
    } else {
        Err(CircuitError::CompanionOverflow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverLimits {
    /// Budget on Newton iterations summed over all attempted steps.
    pub max_total_nr: u64,
    /// Budget on accepted pseudo-time steps.
    pub max_time_steps: u64,
    /// Steady state when `max|u(n+1) - u(n)| / h` drops below this.
    pub steady_tol: f64,
}

impl Default for SolverLimits {
    fn default() -> Self {
        Self { max_total_nr: 5000, max_time_steps: 2000, steady_tol: 1e-12 }
    }
}

impl SolverLimits {
    pub fn with_budget(self, max_total_nr: u64) -> Self {
        Self { max_total_nr, ..self }
    }
}

/// Step-size control for the pseudo-transient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeptaConfig {
    /// Initial step as a fraction of tau.
    pub h0: f64,
    /// Step growth factor after an accepted step.
    pub grow: f64,
    /// Largest step as a multiple of tau.
    pub h_max: f64,
    /// Smallest step as a multiple of tau before giving up.
    pub h_min: f64,
    /// Newton iteration cap within one step.
    pub nr_per_step: usize,
    pub newton: NewtonOptions,
}

impl Default for CeptaConfig {
    fn default() -> Self {
        Self { h0: 0.01, grow: 1.5, h_max: 10.0, h_min: 1e-9, nr_per_step: 50, newton: NewtonOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub converged: bool,
    /// Newton iterations over accepted and rejected steps; the tuning objective.
    pub total_nr_iterations: u64,
    /// Accepted pseudo-time steps.
    pub time_steps: u64,
    pub rejected_steps: u64,
    pub dc_solution: Vec<f64>,
    pub final_udot: f64,
    pub wall_time: f64,
}

struct StepEquations<'a> {
    circuit: &'a Circuit,
    /// (p, n, branch row, r_eq, v_eq) per GVL.
    gvl: Vec<(Option<usize>, Option<usize>, usize, f64, f64)>,
    /// (a, b, g_eq, i_eq) per RVC.
    rvc: Vec<(Option<usize>, Option<usize>, f64, f64)>,
}

impl Equations for StepEquations<'_> {
    fn dim(&self) -> usize {
        self.circuit.dim()
    }

    fn system(&self) -> MnaSystem {
        self.circuit.system()
    }

    fn assemble(&self, u: &[f64], sys: &mut MnaSystem) {
        self.circuit.assemble_without_vsources(u, sys);
        for &(p, n, branch, r, v) in &self.gvl {
            sys.stamp_voltage_branch(p, n, branch, r, v, u);
        }
        for &(a, b, g, i) in &self.rvc {
            if g != 0.0 || i != 0.0 {
                sys.stamp_branch(a, b, g, i, u);
            }
        }
    }

    fn junctions(&self) -> &[(Option<usize>, Option<usize>)] {
        self.circuit.junctions()
    }

    fn is_linear(&self) -> bool {
        self.circuit.is_linear()
    }
}

fn volt(u: &[f64], node: Option<usize>) -> f64 {
    node.map_or(0.0, |i| u[i])
}

/// Runs CEPTA on `netlist`. Invalid input is an error; non-convergence is
/// reported through [`SimulationResult::converged`].
pub fn run_cepta(netlist: &Netlist, params: &SolverParams, limits: &SolverLimits) -> Result<SimulationResult, CircuitError> {
    let aug = insert_pseudo_elements(netlist, params)?;
    Ok(run_augmented(aug, limits, &CeptaConfig::default()))
}

/// Runs CEPTA on an already compiled circuit.
pub fn run_cepta_circuit(
    circuit: &Circuit,
    params: &SolverParams,
    limits: &SolverLimits,
    config: &CeptaConfig,
) -> Result<SimulationResult, CircuitError> {
    params.validate()?;
    Ok(run_augmented(augment(circuit.clone(), params), limits, config))
}

/// Starts from `u = 0` at `t = 0` with all sources at full value. On Newton
/// failure the step is halved and retried; on success it grows by `grow` up to
/// `h_max * tau`.
pub fn run_augmented(mut aug: AugmentedNetlist, limits: &SolverLimits, cfg: &CeptaConfig) -> SimulationResult {
    let start = Instant::now();
    let p = aug.params;
    let dim = aug.circuit.dim();
    let mut u = vec![0.0; dim];
    let mut t = 0.0;
    let mut h = cfg.h0 * p.tau;
    let h_max = cfg.h_max * p.tau;
    let h_min = cfg.h_min * p.tau;
    let mut total: u64 = 0;
    let mut steps: u64 = 0;
    let mut rejected: u64 = 0;
    let mut udot = f64::INFINITY;
    let mut converged = false;

    let mut eq = StepEquations { circuit: &aug.circuit, gvl: Vec::new(), rvc: Vec::new() };
    loop {
        if total >= limits.max_total_nr || steps >= limits.max_time_steps {
            break;
        }
        let t_next = t + h;
        let (r_prev, r_next) = (ramp_value(p.r0, p.tau, t), ramp_value(p.r0, p.tau, t_next));
        let (g_prev, g_next) = (ramp_value(p.g0, p.tau, t), ramp_value(p.g0, p.tau, t_next));
        eq.gvl.clear();
        eq.rvc.clear();
        let mut overflow = false;
        for b in &aug.branches {
            match b.kind {
                PseudoKind::Gvl => {
                    let (r, v) = if g_next >= RAMP_CAP {
                        (0.0, b.e_source)
                    } else {
                        match gvl_companion(h, p.l_pseudo, g_next, g_prev, b.v_cb, b.i_cb, b.e_source) {
                            Ok(rv) => rv,
                            Err(_) => {
                                overflow = true;
                                break;
                            }
                        }
                    };
                    eq.gvl.push((b.a, b.b, b.branch.expect("GVL sits on a source branch"), r, v));
                }
                PseudoKind::Rvc => {
                    let (g, i) = if r_next >= RAMP_CAP {
                        (0.0, 0.0)
                    } else {
                        match rvc_companion(h, p.c_pseudo, r_next, r_prev, b.v_cb, b.i_cb) {
                            Ok(gi) => gi,
                            Err(_) => {
                                overflow = true;
                                break;
                            }
                        }
                    };
                    eq.rvc.push((b.a, b.b, g, i));
                }
            }
        }
        let nr = if overflow {
            None
        } else {
            let budget = (limits.max_total_nr - total).min(cfg.nr_per_step as u64) as usize;
            let opts = NewtonOptions { max_iter: budget, ..cfg.newton };
            let nr = newton_solve(&eq, &u, &opts);
            total += nr.iterations as u64;
            Some(nr)
        };
        let Some(nr) = nr.filter(|r| r.converged) else {
            rejected += 1;
            h *= 0.5;
            if h < h_min {
                break;
            }
            continue;
        };

        let u_new = nr.solution;
        udot = u.iter().zip(&u_new).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max) / h;
        let (mut gi, mut ri) = (0, 0);
        for b in &mut aug.branches {
            let v = volt(&u_new, b.a) - volt(&u_new, b.b);
            match b.kind {
                PseudoKind::Gvl => {
                    let (_, _, row, _, _) = eq.gvl[gi];
                    gi += 1;
                    b.v_cb = v;
                    b.i_cb = u_new[row];
                }
                PseudoKind::Rvc => {
                    let (_, _, g, i) = eq.rvc[ri];
                    ri += 1;
                    b.v_cb = v;
                    b.i_cb = g * v + i;
                }
            }
        }
        u = u_new;
        t = t_next;
        steps += 1;
        if udot < limits.steady_tol {
            converged = true;
            break;
        }
        h = (h * cfg.grow).min(h_max);
    }

    SimulationResult {
        converged,
        total_nr_iterations: total,
        time_steps: steps,
        rejected_steps: rejected,
        dc_solution: u,
        final_udot: udot,
        wall_time: start.elapsed().as_secs_f64(),
    }
}
