//! Monte-Carlo acceleration: per-sample proposals under an iteration budget,
//! penalty rows and incumbent re-execution on breach, freeze after a run of
//! samples without improvement.

use boapta_circuit::{extract_features, perturb_netlist, Netlist, SolverParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::optimize_acquisition;
use crate::campaign::{BoConfig, Incumbent};
use crate::dataset::Dataset;
use crate::error::CoreError;
use crate::model::{SurrogateConfig, SurrogateModel};
use crate::records::{RunKind, TrialRecord};
use crate::simulator::Simulator;

/// Prior knowledge from an earlier campaign: its trained surrogate and the
/// rows it was trained on.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub model: SurrogateModel,
    pub dataset: Dataset,
}

impl From<crate::campaign::Checkpoint> for WarmStart {
    fn from(cp: crate::campaign::Checkpoint) -> Self {
        Self { model: cp.model, dataset: cp.dataset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// Relative standard deviation of every resistor.
    pub variation: f64,
    pub samples: usize,
    /// Seed of the netlist draws.
    pub seed: u64,
}

impl McOptions {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.variation > 0.0 && self.variation < 1.0) {
            return Err(CoreError::Config(format!("variation must lie in (0, 1), got {}", self.variation)));
        }
        if self.samples == 0 {
            return Err(CoreError::Config("at least one Monte-Carlo sample is required".into()));
        }
        Ok(())
    }

    /// Seed of the `i`-th netlist draw.
    pub fn draw_seed(&self, i: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64 + 1);
        rng.random()
    }
}

/// Outcome of one Monte-Carlo sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub index: usize,
    /// Parameters of the run that produced the result.
    pub x: SolverParams,
    /// Iterations of the successful run, or the penalty value.
    pub y: f64,
    /// Iterations summed over every attempt on this sample.
    pub cost: u64,
    pub attempts: usize,
    pub converged: bool,
    /// A proposal breached its budget.
    pub penalized: bool,
    pub frozen: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub circuit_id: String,
    pub method: String,
    pub options: McOptions,
    pub samples: Vec<McSample>,
    pub records: Vec<TrialRecord>,
    /// First sample index run with the search frozen.
    pub frozen_at: Option<usize>,
    pub incumbent: Option<Incumbent>,
    #[serde(skip)]
    pub model: Option<SurrogateModel>,
}

impl McReport {
    /// Samples that never converged.
    pub fn non_converged(&self) -> usize {
        self.samples.iter().filter(|s| !s.converged).count()
    }

    /// Mean and population standard deviation of the per-sample cost over the
    /// converged samples.
    pub fn cost_stats(&self) -> (f64, f64) {
        let costs: Vec<f64> = self.samples.iter().filter(|s| s.converged).map(|s| s.cost as f64).collect();
        if costs.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let n = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    pub fn total_cost(&self) -> u64 {
        self.samples.iter().map(|s| s.cost).sum()
    }
}

fn draws(base: &Netlist, opts: &McOptions) -> Result<Vec<Netlist>, CoreError> {
    (0..opts.samples).map(|i| Ok(perturb_netlist(base, opts.variation, opts.draw_seed(i))?)).collect()
}

fn budget(factor: f64, y: f64) -> u64 {
    (factor * y).ceil() as u64
}

/// Every sample at the same parameters, no budget.
pub fn mc_constant<S: Simulator>(
    circuit_id: &str,
    base: &Netlist,
    sim: &S,
    params: &SolverParams,
    opts: &McOptions,
) -> Result<McReport, CoreError> {
    opts.validate()?;
    params.validate()?;
    let mut samples = Vec::with_capacity(opts.samples);
    let mut records = Vec::with_capacity(opts.samples);
    for (i, n) in draws(base, opts)?.iter().enumerate() {
        let out = sim.run(n, params, None);
        let rec = TrialRecord::new(circuit_id, *params, i, RunKind::Default, None, &out);
        samples.push(McSample {
            index: i,
            x: *params,
            y: rec.y,
            cost: out.iterations,
            attempts: 1,
            converged: out.converged,
            penalized: false,
            frozen: false,
        });
        records.push(rec);
    }
    Ok(McReport {
        circuit_id: circuit_id.to_string(),
        method: "constant".into(),
        options: *opts,
        samples,
        records,
        frozen_at: None,
        incumbent: None,
        model: None,
    })
}

/// Monte-Carlo loop with Bayesian parameter proposals.
///
/// Sample 0 runs at the defaults and sets the incumbent `(x*, y*)`. Each later
/// sample, until frozen, retrains the surrogate and runs its proposal under a
/// `budget_factor * y*` budget. A breach adds a penalty row and re-runs the
/// same draw at `x*` under `incumbent_budget_factor * y*`, then at the
/// defaults without a budget; a sample failing all of these is counted as
/// non-converged. Once `freeze_after` samples pass without a proposal
/// improving `y*`, the remaining samples run at `x*` with no retraining.
/// `warm` seeds the surrogate's parameters and training rows.
pub fn mc_accelerate<S: Simulator>(
    circuit_id: &str,
    base: &Netlist,
    sim: &S,
    config: &BoConfig,
    opts: &McOptions,
    warm: Option<&WarmStart>,
) -> Result<McReport, CoreError> {
    config.validate()?;
    opts.validate()?;
    let features = extract_features(base)?;
    let surrogate = SurrogateConfig { seed: config.seed, ..config.surrogate };
    let (mut model, mut data) = match warm {
        Some(w) => {
            let mut m = w.model.clone();
            m.config = surrogate;
            (m, w.dataset.clone())
        }
        None => (SurrogateModel::new(surrogate), Dataset::new()),
    };
    let mut records = Vec::new();
    let mut samples = Vec::with_capacity(opts.samples);
    let mut incumbent: Option<Incumbent> = None;
    let mut last_improvement = 0;
    let mut frozen_at = None;
    let defaults = config.defaults;

    for (i, netlist) in draws(base, opts)?.iter().enumerate() {
        let frozen = frozen_at.is_some();
        let mut cost = 0;
        let mut attempts = 0;
        let mut penalized = false;
        let mut result: Option<(SolverParams, f64)> = None;
        let mut attempt = |x: SolverParams, kind: RunKind, budget: Option<u64>, data: &mut Dataset, records: &mut Vec<TrialRecord>| {
            let out = sim.run(netlist, &x, budget);
            cost += out.iterations;
            attempts += 1;
            let rec = TrialRecord::new(circuit_id, x, i, kind, budget, &out);
            data.push(circuit_id, &x, &features, rec.y, !rec.converged)?;
            records.push(rec);
            Ok::<_, CoreError>(out.converged.then_some(out.iterations as f64))
        };

        match incumbent {
            None => {
                if let Some(y) = attempt(defaults, RunKind::Default, None, &mut data, &mut records)? {
                    result = Some((defaults, y));
                }
            }
            Some(inc) => {
                if !frozen {
                    let x = if data.len() >= 2 {
                        model.train(&data)?;
                        let seed = config.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                        optimize_acquisition(&model, &data, circuit_id, &features, &config.acquisition, defaults.tau, seed)?.params
                    } else {
                        defaults
                    };
                    match attempt(x, RunKind::Proposal, Some(budget(config.budget_factor, inc.y)), &mut data, &mut records)? {
                        Some(y) => {
                            if y < inc.y {
                                last_improvement = i;
                            }
                            result = Some((x, y));
                        }
                        None => penalized = true,
                    }
                }
                if result.is_none() {
                    let b = budget(config.incumbent_budget_factor, inc.y);
                    if let Some(y) = attempt(inc.x, RunKind::Incumbent, Some(b), &mut data, &mut records)? {
                        result = Some((inc.x, y));
                    } else if let Some(y) = attempt(defaults, RunKind::Fallback, None, &mut data, &mut records)? {
                        result = Some((defaults, y));
                    }
                }
            }
        }

        if let Some((x, y)) = result {
            if incumbent.is_none_or(|inc| y < inc.y) {
                incumbent = Some(Incumbent { x, y });
            }
        }
        let (x, y) = result.unwrap_or((defaults, crate::dataset::PENALTY_Y));
        samples.push(McSample { index: i, x, y, cost, attempts, converged: result.is_some(), penalized, frozen });
        if frozen_at.is_none() && incumbent.is_some() && i - last_improvement >= config.freeze_after {
            frozen_at = Some(i + 1);
        }
    }

    Ok(McReport {
        circuit_id: circuit_id.to_string(),
        method: "accelerate".into(),
        options: *opts,
        samples,
        records,
        frozen_at,
        incumbent,
        model: Some(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::FnSimulator;
    use boapta_circuit::suite;

    #[test]
    fn single_sample() {
        let sim = FnSimulator(|_: &Netlist, _: &SolverParams| Some(30));
        let base = suite::load("divider").unwrap();
        let opts = McOptions { variation: 0.05, samples: 1, seed: 0 };
        let r = mc_accelerate("d", &base, &sim, &BoConfig::default(), &opts, None).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.total_cost(), 30);
    }

    #[test]
    fn options_validated() {
        let sim = FnSimulator(|_: &Netlist, _: &SolverParams| Some(30));
        let base = suite::load("divider").unwrap();
        for (v, n) in [(1.5, 3), (0.0, 3), (0.05, 0)] {
            let opts = McOptions { variation: v, samples: n, seed: 0 };
            assert!(mc_accelerate("d", &base, &sim, &BoConfig::default(), &opts, None).is_err());
            assert!(mc_constant("d", &base, &sim, &BoConfig::default().defaults, &opts).is_err());
        }
    }

    #[test]
    fn draws_shared_between_methods() {
        let seen = std::sync::Mutex::new(Vec::new());
        let sim = FnSimulator(|n: &Netlist, _: &SolverParams| {
            seen.lock().unwrap().push(n.serialize());
            Some(10)
        });
        let base = suite::load("divider").unwrap();
        let opts = McOptions { variation: 0.1, samples: 3, seed: 4 };
        mc_constant("d", &base, &sim, &BoConfig::default().defaults, &opts).unwrap();
        let first: Vec<String> = seen.lock().unwrap().drain(..).collect();
        mc_accelerate("d", &base, &sim, &BoConfig::default(), &opts, None).unwrap();
        assert_eq!(first, *seen.lock().unwrap());
        assert_ne!(first[0], first[1]);
    }
}
