//! Modified nodal analysis and damped Newton-Raphson.
//!
//! Unknowns are the non-ground node voltages (netlist node order) followed by
//! one branch current per independent voltage source and per inductor. The
//! residual `f(u)` holds the net current leaving each node through the
//! elements, and for each branch the constitutive voltage equation; Newton
//! solves `J du = -f` with dense LU.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::devices::{BjtModel, DiodeModel, MosModel, TerminalStamp};
use crate::error::CircuitError;
use crate::netlist::{Element, ElementKind, Netlist, GROUND};

/// Conductance placed across every PN junction and MOSFET channel.
pub const DEFAULT_GMIN: f64 = 1e-12;

/// Maps node names and voltage-defined branches to rows of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownIndex {
    nodes: HashMap<String, usize>,
    branches: HashMap<String, usize>,
    names: Vec<String>,
}

impl UnknownIndex {
    pub fn new(netlist: &Netlist) -> Self {
        let mut names = Vec::new();
        let mut nodes = HashMap::new();
        for n in netlist.signal_nodes() {
            nodes.insert(n.clone(), names.len());
            names.push(format!("v({n})"));
        }
        let mut branches = HashMap::new();
        for kind in [ElementKind::VSource, ElementKind::Inductor] {
            for el in netlist.elements().iter().filter(|e| e.kind == kind) {
                branches.insert(el.name.clone(), names.len());
                names.push(format!("i({})", el.name));
            }
        }
        Self { nodes, branches, names }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Row of a node voltage; `Ok(None)` for ground.
    pub fn node(&self, name: &str) -> Option<Option<usize>> {
        if name == GROUND {
            Some(None)
        } else {
            self.nodes.get(name).map(|&i| Some(i))
        }
    }

    pub fn branch(&self, element: &str) -> Option<usize> {
        self.branches.get(element).copied()
    }

    /// Human-readable unknown names: `v(node)` then `i(element)`.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Jacobian and residual under construction for one state.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    pub index: Arc<UnknownIndex>,
    pub jacobian: DMatrix<f64>,
    pub residual: DVector<f64>,
}

impl MnaSystem {
    pub fn new(netlist: &Netlist) -> Self {
        Self::with_index(Arc::new(UnknownIndex::new(netlist)))
    }

    pub fn with_index(index: Arc<UnknownIndex>) -> Self {
        let n = index.dim();
        Self { index, jacobian: DMatrix::zeros(n, n), residual: DVector::zeros(n) }
    }

    pub fn dim(&self) -> usize {
        self.residual.len()
    }

    pub fn clear(&mut self) {
        self.jacobian.fill(0.0);
        self.residual.fill(0.0);
    }

    #[inline]
    pub fn add_jacobian(&mut self, row: Option<usize>, col: Option<usize>, v: f64) {
        if let (Some(r), Some(c)) = (row, col) {
            self.jacobian[(r, c)] += v;
        }
    }

    #[inline]
    pub fn add_residual(&mut self, row: Option<usize>, v: f64) {
        if let Some(r) = row {
            self.residual[r] += v;
        }
    }

    /// Linear two-terminal branch carrying `g * (v_a - v_b) + i0` from `a` to `b`.
    pub fn stamp_branch(&mut self, a: Option<usize>, b: Option<usize>, g: f64, i0: f64, state: &[f64]) {
        let i = g * (volt(state, a) - volt(state, b)) + i0;
        self.add_residual(a, i);
        self.add_residual(b, -i);
        self.add_jacobian(a, a, g);
        self.add_jacobian(b, b, g);
        self.add_jacobian(a, b, -g);
        self.add_jacobian(b, a, -g);
    }

    fn stamp_terminals<const N: usize>(&mut self, nodes: [Option<usize>; N], s: &TerminalStamp<N>) {
        for i in 0..N {
            self.add_residual(nodes[i], s.currents[i]);
            for j in 0..N {
                self.add_jacobian(nodes[i], nodes[j], s.jac[i][j]);
            }
        }
    }

    /// Voltage-defined branch row: `v_p - v_n - r * i_branch - v0 = 0`, with the
    /// branch current leaving `p` and entering `n`.
    pub fn stamp_voltage_branch(
        &mut self,
        p: Option<usize>,
        n: Option<usize>,
        branch: usize,
        r: f64,
        v0: f64,
        state: &[f64],
    ) {
        let i = state[branch];
        self.add_residual(p, i);
        self.add_residual(n, -i);
        self.add_jacobian(p, Some(branch), 1.0);
        self.add_jacobian(n, Some(branch), -1.0);
        self.residual[branch] += volt(state, p) - volt(state, n) - r * i - v0;
        self.add_jacobian(Some(branch), p, 1.0);
        self.add_jacobian(Some(branch), n, -1.0);
        self.jacobian[(branch, branch)] -= r;
    }
}

#[inline]
fn volt(state: &[f64], node: Option<usize>) -> f64 {
    node.map_or(0.0, |i| state[i])
}

/// Element with resolved unknown indices and model parameters.
#[derive(Debug, Clone)]
pub(crate) enum Compiled {
    Conductance { a: Option<usize>, b: Option<usize>, g: f64 },
    Open,
    Short { a: Option<usize>, b: Option<usize>, branch: usize },
    VSource { p: Option<usize>, n: Option<usize>, branch: usize, e: f64 },
    ISource { p: Option<usize>, n: Option<usize>, i: f64 },
    Diode { a: Option<usize>, k: Option<usize>, model: DiodeModel },
    Bjt { nodes: [Option<usize>; 3], model: BjtModel },
    Mos { nodes: [Option<usize>; 3], model: MosModel },
}

fn compile(el: &Element, netlist: &Netlist, index: &UnknownIndex) -> Result<Compiled, CircuitError> {
    let node = |i: usize| -> Result<Option<usize>, CircuitError> {
        let name = &el.terminals[i];
        index
            .node(name)
            .ok_or_else(|| CircuitError::UnknownNode { element: el.name.clone(), node: name.clone() })
    };
    let card = || -> Result<&crate::netlist::ModelCard, CircuitError> {
        let model = el.model_name().unwrap_or_default();
        let card = netlist
            .model(model)
            .ok_or_else(|| CircuitError::UnknownModel { element: el.name.clone(), model: model.to_string() })?;
        if !card.kind.fits(el.kind) {
            return Err(CircuitError::ModelMismatch { element: el.name.clone(), model: model.to_string() });
        }
        Ok(card)
    };
    let branch = || {
        index
            .branch(&el.name)
            .ok_or_else(|| CircuitError::UnknownNode { element: el.name.clone(), node: format!("i({})", el.name) })
    };
    let value = || el.scalar().ok_or_else(|| CircuitError::NonFinite { element: el.name.clone() });
    Ok(match el.kind {
        ElementKind::Resistor => Compiled::Conductance { a: node(0)?, b: node(1)?, g: 1.0 / value()? },
        ElementKind::Capacitor => Compiled::Open,
        ElementKind::Inductor => Compiled::Short { a: node(0)?, b: node(1)?, branch: branch()? },
        ElementKind::VSource => Compiled::VSource { p: node(0)?, n: node(1)?, branch: branch()?, e: value()? },
        ElementKind::ISource => Compiled::ISource { p: node(0)?, n: node(1)?, i: value()? },
        ElementKind::Diode => Compiled::Diode { a: node(0)?, k: node(1)?, model: DiodeModel::from_card(card()?) },
        ElementKind::Bjt => Compiled::Bjt { nodes: [node(0)?, node(1)?, node(2)?], model: BjtModel::from_card(card()?) },
        ElementKind::Mosfet => Compiled::Mos {
            nodes: [node(0)?, node(1)?, node(2)?],
            model: MosModel::new(card()?, el.instance_param("w"), el.instance_param("l")),
        },
    })
}

impl Compiled {
    fn stamp(&self, state: &[f64], sys: &mut MnaSystem) {
        match *self {
            Compiled::Conductance { a, b, g } => sys.stamp_branch(a, b, g, 0.0, state),
            Compiled::Open => {}
            Compiled::Short { a, b, branch } => sys.stamp_voltage_branch(a, b, branch, 0.0, 0.0, state),
            Compiled::VSource { p, n, branch, e } => sys.stamp_voltage_branch(p, n, branch, 0.0, e, state),
            Compiled::ISource { p, n, i } => {
                sys.add_residual(p, i);
                sys.add_residual(n, -i);
            }
            Compiled::Diode { a, k, model } => {
                let (i, g) = model.eval(volt(state, a) - volt(state, k));
                sys.stamp_branch(a, k, g, i - g * (volt(state, a) - volt(state, k)), state);
            }
            Compiled::Bjt { nodes, model } => {
                let s = model.eval(volt(state, nodes[0]), volt(state, nodes[1]), volt(state, nodes[2]));
                sys.stamp_terminals(nodes, &s);
            }
            Compiled::Mos { nodes, model } => {
                let s = model.eval(volt(state, nodes[0]), volt(state, nodes[1]), volt(state, nodes[2]));
                sys.stamp_terminals(nodes, &s);
            }
        }
    }

    fn is_nonlinear(&self) -> bool {
        matches!(self, Compiled::Diode { .. } | Compiled::Bjt { .. } | Compiled::Mos { .. })
    }
}

/// Adds the companion stamp of `element` linearized at `state` to `system`.
///
/// Resistors add their conductance, sources their branch equation or injected
/// current, and devices their large-signal current with its Jacobian.
pub fn stamp_device(
    element: &Element,
    netlist: &Netlist,
    state: &[f64],
    system: &mut MnaSystem,
) -> Result<(), CircuitError> {
    if state.len() != system.dim() {
        return Err(CircuitError::Dimension { expected: system.dim(), got: state.len() });
    }
    let compiled = compile(element, netlist, &system.index)?;
    let before = (system.residual.clone(), system.jacobian.clone());
    compiled.stamp(state, system);
    if system.residual.iter().chain(system.jacobian.iter()).any(|v| !v.is_finite()) {
        system.residual = before.0;
        system.jacobian = before.1;
        return Err(CircuitError::NonFinite { element: element.name.clone() });
    }
    Ok(())
}

/// A nonlinear algebraic system that Newton iteration can drive.
pub trait Equations {
    fn dim(&self) -> usize;
    /// Fresh zeroed system sized for this problem.
    fn system(&self) -> MnaSystem;
    /// Fills `sys` (already cleared) with `f(u)` and `J(u)`.
    fn assemble(&self, u: &[f64], sys: &mut MnaSystem);
    /// Junction voltage pairs subject to step limiting.
    fn junctions(&self) -> &[(Option<usize>, Option<usize>)];
    /// True when `J` does not depend on `u`.
    fn is_linear(&self) -> bool;
}

/// Compiled netlist ready for repeated assembly.
#[derive(Debug, Clone)]
pub struct Circuit {
    netlist: Arc<Netlist>,
    index: Arc<UnknownIndex>,
    elements: Vec<Compiled>,
    junctions: Vec<(Option<usize>, Option<usize>)>,
    gmin: f64,
    linear: bool,
}

impl Circuit {
    pub fn new(netlist: &Netlist) -> Result<Self, CircuitError> {
        Self::with_gmin(netlist, DEFAULT_GMIN)
    }

    pub fn with_gmin(netlist: &Netlist, gmin: f64) -> Result<Self, CircuitError> {
        netlist.validate()?;
        let index = Arc::new(UnknownIndex::new(netlist));
        let elements = netlist
            .elements()
            .iter()
            .map(|el| compile(el, netlist, &index))
            .collect::<Result<Vec<_>, _>>()?;
        let mut junctions = Vec::new();
        for c in &elements {
            match *c {
                Compiled::Diode { a, k, .. } => junctions.push((a, k)),
                Compiled::Bjt { nodes: [c, b, e], .. } => {
                    junctions.push((b, e));
                    junctions.push((b, c));
                }
                Compiled::Mos { nodes: [d, g, s], .. } => {
                    junctions.push((g, s));
                    junctions.push((d, s));
                }
                _ => {}
            }
        }
        let linear = !elements.iter().any(Compiled::is_nonlinear);
        Ok(Self { netlist: Arc::new(netlist.clone()), index, elements, junctions, gmin, linear })
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    pub fn index(&self) -> &UnknownIndex {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    /// Stamps everything except independent voltage sources, whose branch rows
    /// are left to the caller (the pseudo-transient replaces them).
    pub(crate) fn assemble_without_vsources(&self, u: &[f64], sys: &mut MnaSystem) {
        for c in &self.elements {
            if !matches!(c, Compiled::VSource { .. }) {
                c.stamp(u, sys);
            }
        }
        self.stamp_gmin(u, sys);
    }

    fn stamp_gmin(&self, u: &[f64], sys: &mut MnaSystem) {
        if self.gmin > 0.0 {
            for c in &self.elements {
                match *c {
                    Compiled::Diode { a, k, .. } => sys.stamp_branch(a, k, self.gmin, 0.0, u),
                    Compiled::Bjt { nodes: [c, b, e], .. } => {
                        sys.stamp_branch(b, e, self.gmin, 0.0, u);
                        sys.stamp_branch(b, c, self.gmin, 0.0, u);
                    }
                    Compiled::Mos { nodes: [d, _, s], .. } => sys.stamp_branch(d, s, self.gmin, 0.0, u),
                    _ => {}
                }
            }
        }
    }

    /// (p, n, branch row, source value) for each independent voltage source in netlist order.
    pub(crate) fn vsources(&self) -> impl Iterator<Item = (Option<usize>, Option<usize>, usize, f64)> + '_ {
        self.elements.iter().filter_map(|c| match *c {
            Compiled::VSource { p, n, branch, e } => Some((p, n, branch, e)),
            _ => None,
        })
    }

    /// (p, n, current) for each independent current source.
    pub(crate) fn isources(&self) -> impl Iterator<Item = (Option<usize>, Option<usize>)> + '_ {
        self.elements.iter().filter_map(|c| match *c {
            Compiled::ISource { p, n, .. } => Some((p, n)),
            _ => None,
        })
    }

    /// Node voltages by name (ground excluded) from a solution vector.
    pub fn node_voltages(&self, u: &[f64]) -> Vec<(String, f64)> {
        self.netlist.signal_nodes().iter().enumerate().map(|(i, n)| (n.clone(), u[i])).collect()
    }

    /// Max |net current| over node rows at `u`.
    pub fn kcl_error(&self, u: &[f64]) -> f64 {
        let mut sys = self.system();
        self.assemble(u, &mut sys);
        (0..self.index.node_count()).map(|i| sys.residual[i].abs()).fold(0.0, f64::max)
    }
}

impl Equations for Circuit {
    fn dim(&self) -> usize {
        self.index.dim()
    }

    fn system(&self) -> MnaSystem {
        MnaSystem::with_index(self.index.clone())
    }

    fn assemble(&self, u: &[f64], sys: &mut MnaSystem) {
        for c in &self.elements {
            c.stamp(u, sys);
        }
        self.stamp_gmin(u, sys);
    }

    fn junctions(&self) -> &[(Option<usize>, Option<usize>)] {
        &self.junctions
    }

    fn is_linear(&self) -> bool {
        self.linear
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Max |f(u)| at convergence (A for node rows, V for branch rows).
    pub tol_residual: f64,
    /// Max |du| of the last step at convergence.
    pub tol_step: f64,
    pub max_iter: usize,
    /// Largest junction-voltage change allowed per iteration (V).
    pub max_junction_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol_residual: 1e-9, tol_step: 1e-6, max_iter: 100, max_junction_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrResult {
    pub converged: bool,
    pub iterations: usize,
    pub solution: Vec<f64>,
    pub max_residual: f64,
    /// Set when a linear solve failed.
    pub singular: bool,
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

/// Damped Newton-Raphson from `u0`.
///
/// Each step solves `J du = -f` and scales the whole step so no junction
/// voltage moves by more than `max_junction_step`. Converged when the residual
/// at the new point is within `tol_residual` and the step was within
/// `tol_step`; for systems with a state-independent Jacobian the first exact
/// step already satisfies the residual test and ends the iteration.
pub fn newton_solve<E: Equations + ?Sized>(eq: &E, u0: &[f64], opts: &NewtonOptions) -> NrResult {
    let mut u = DVector::from_column_slice(u0);
    let mut sys = eq.system();
    sys.clear();
    eq.assemble(u.as_slice(), &mut sys);
    let mut residual = max_abs(sys.residual.iter().copied());
    let mut iterations = 0;
    let fail = |u: DVector<f64>, iterations, residual, singular| NrResult {
        converged: false,
        iterations,
        solution: u.as_slice().to_vec(),
        max_residual: residual,
        singular,
    };
    while iterations < opts.max_iter {
        let rhs = -&sys.residual;
        let Some(mut du) = sys.jacobian.clone().lu().solve(&rhs) else {
            return fail(u, iterations, residual, true);
        };
        iterations += 1;
        if du.iter().any(|x| !x.is_finite()) {
            return fail(u, iterations, residual, true);
        }
        let worst = eq
            .junctions()
            .iter()
            .map(|&(a, b)| (a.map_or(0.0, |i| du[i]) - b.map_or(0.0, |i| du[i])).abs())
            .fold(0.0, f64::max);
        if worst > opts.max_junction_step {
            du *= opts.max_junction_step / worst;
        }
        u += &du;
        sys.clear();
        eq.assemble(u.as_slice(), &mut sys);
        residual = max_abs(sys.residual.iter().copied());
        if !residual.is_finite() {
            return fail(u, iterations, residual, false);
        }
        let step = max_abs(du.iter().copied());
        if residual <= opts.tol_residual && (step <= opts.tol_step || eq.is_linear()) {
            return NrResult { converged: true, iterations, solution: u.as_slice().to_vec(), max_residual: residual, singular: false };
        }
    }
    fail(u, iterations, residual, false)
}
