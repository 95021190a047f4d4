//! The solver seen by the optimization loops: netlist and parameters in,
//! iteration count out.

use std::time::Instant;

use boapta_circuit::{run_cepta, Netlist, SolverLimits, SolverParams};

/// One solver execution.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub converged: bool,
    /// Newton iterations spent, including those of a halted run.
    pub iterations: u64,
    /// Stopped because the iteration budget ran out.
    pub halted: bool,
    pub solution: Vec<f64>,
    pub wall_time: f64,
}

pub trait Simulator {
    /// Runs `circuit` at `params`, giving up after `budget` Newton iterations
    /// when one is set.
    fn run(&self, circuit: &Netlist, params: &SolverParams, budget: Option<u64>) -> RunOutcome;
}

/// The pseudo-transient solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct CeptaSimulator {
    pub limits: SolverLimits,
}

impl Simulator for CeptaSimulator {
    fn run(&self, circuit: &Netlist, params: &SolverParams, budget: Option<u64>) -> RunOutcome {
        let limits = match budget {
            Some(b) => self.limits.with_budget(b.min(self.limits.max_total_nr)),
            None => self.limits,
        };
        match run_cepta(circuit, params, &limits) {
            Ok(r) => RunOutcome {
                converged: r.converged,
                iterations: r.total_nr_iterations,
                halted: !r.converged && budget.is_some_and(|b| r.total_nr_iterations >= b),
                solution: r.dc_solution,
                wall_time: r.wall_time,
            },
            Err(_) => RunOutcome { converged: false, iterations: 0, halted: false, solution: Vec::new(), wall_time: 0.0 },
        }
    }
}

/// Test double: `f` returns the iteration count, or `None` for a run that never
/// converges. Budgets are honoured the way the real solver does.
pub struct FnSimulator<F>(pub F);

impl<F> Simulator for FnSimulator<F>
where
    F: Fn(&Netlist, &SolverParams) -> Option<u64>,
{
    fn run(&self, circuit: &Netlist, params: &SolverParams, budget: Option<u64>) -> RunOutcome {
        let start = Instant::now();
        let (converged, iterations, halted) = match ((self.0)(circuit, params), budget) {
            (Some(y), Some(b)) if y > b => (false, b, true),
            (Some(y), _) => (true, y, false),
            (None, Some(b)) => (false, b, true),
            (None, None) => (false, 5000, false),
        };
        RunOutcome { converged, iterations, halted, solution: Vec::new(), wall_time: start.elapsed().as_secs_f64() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use boapta_circuit::suite;

    #[test]
    fn stub_budget() {
        let sim = FnSimulator(|_: &Netlist, _: &SolverParams| Some(40));
        let n = suite::load("divider").unwrap();
        let p = SolverParams::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(sim.run(&n, &p, None).iterations, 40);
        let r = sim.run(&n, &p, Some(30));
        assert!(r.halted && !r.converged && r.iterations == 30);
        assert!(sim.run(&n, &p, Some(40)).converged);
    }

    #[test]
    fn cepta_budget_halts() {
        let n = suite::load("diode_bridge").unwrap();
        let p = SolverParams::new(1e-3, 1e-3, 1.0, 1.0, 1.0).unwrap();
        let sim = CeptaSimulator::default();
        let full = sim.run(&n, &p, None);
        assert!(full.converged);
        let cut = sim.run(&n, &p, Some(full.iterations / 2));
        assert!(cut.halted && cut.iterations <= full.iterations / 2);
    }
}
