//! Cold-start optimization over a circuit set and its random-search baseline.

use std::collections::BTreeMap;
use std::path::Path;

use boapta_circuit::{extract_features, FeatureVector, Netlist, SolverParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{optimize_acquisition, AcquisitionConfig};
use crate::dataset::Dataset;
use crate::error::CoreError;
use crate::model::{SurrogateConfig, SurrogateModel};
use crate::records::{RunKind, TrialRecord};
use crate::simulator::Simulator;

/// `(C, L, R0, G0, tau) = (1e-3, 1e-3, 1, 1, 1)`.
pub fn default_params() -> SolverParams {
    SolverParams { c_pseudo: 1e-3, l_pseudo: 1e-3, r0: 1.0, g0: 1.0, tau: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    pub epochs: usize,
    pub seed: u64,
    pub defaults: SolverParams,
    pub acquisition: AcquisitionConfig,
    pub surrogate: SurrogateConfig,
    /// Monte-Carlo proposals run under `budget_factor * y*` iterations.
    pub budget_factor: f64,
    /// Incumbent re-executions run under `incumbent_budget_factor * y*`.
    pub incumbent_budget_factor: f64,
    /// Monte-Carlo iterations without improvement before the search freezes.
    pub freeze_after: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            seed: 0,
            defaults: default_params(),
            acquisition: AcquisitionConfig::default(),
            surrogate: SurrogateConfig::default(),
            budget_factor: 2.0,
            incumbent_budget_factor: 4.0,
            freeze_after: 20,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.defaults.validate()?;
        self.acquisition.validate()?;
        if self.budget_factor < 1.0 || self.incumbent_budget_factor < self.budget_factor {
            return Err(CoreError::Config(format!(
                "budget factors must satisfy 1 <= budget_factor ({}) <= incumbent_budget_factor ({})",
                self.budget_factor, self.incumbent_budget_factor
            )));
        }
        if self.freeze_after == 0 {
            return Err(CoreError::Config("freeze_after must be at least 1".into()));
        }
        Ok(())
    }
}

/// How candidates are produced after the default run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Bayesian,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub x: SolverParams,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct CircuitEntry {
    pub id: String,
    pub netlist: Netlist,
    pub features: FeatureVector,
}

/// Everything needed to continue a campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: BoConfig,
    pub strategy: Strategy,
    pub circuit_ids: Vec<String>,
    /// Epochs completed, the default run being epoch 0.
    pub epochs_done: Option<usize>,
    pub model: SurrogateModel,
    pub dataset: Dataset,
    pub records: Vec<TrialRecord>,
    pub best: BTreeMap<String, Incumbent>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let text = serde_json::to_string(self).map_err(|e| CoreError::Format { what: "checkpoint", message: e.to_string() })?;
        std::fs::write(path, text).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CoreError::Format { what: "checkpoint", message: e.to_string() })
    }
}

/// Seed for one (epoch, circuit) decision, independent of earlier draws so a
/// resumed campaign makes the same choices.
fn decision_seed(seed: u64, epoch: usize, circuit: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 20) | circuit as u64);
    rng.random()
}

/// A running Algorithm-1 style campaign.
pub struct Campaign {
    pub config: BoConfig,
    pub strategy: Strategy,
    pub circuits: Vec<CircuitEntry>,
    pub epochs_done: Option<usize>,
    pub model: SurrogateModel,
    pub dataset: Dataset,
    pub records: Vec<TrialRecord>,
    pub best: BTreeMap<String, Incumbent>,
}

impl Campaign {
    pub fn new(circuits: Vec<(String, Netlist)>, config: BoConfig, strategy: Strategy) -> Result<Self, CoreError> {
        config.validate()?;
        if circuits.is_empty() {
            return Err(CoreError::Config("at least one circuit is required".into()));
        }
        let mut entries = Vec::with_capacity(circuits.len());
        for (id, netlist) in circuits {
            if entries.iter().any(|e: &CircuitEntry| e.id == id) {
                return Err(CoreError::Config(format!("duplicate circuit id '{id}'")));
            }
            let features = extract_features(&netlist)?;
            entries.push(CircuitEntry { id, netlist, features });
        }
        let surrogate = SurrogateConfig { seed: config.seed, ..config.surrogate };
        Ok(Self {
            model: SurrogateModel::new(surrogate),
            config,
            strategy,
            circuits: entries,
            epochs_done: None,
            dataset: Dataset::new(),
            records: Vec::new(),
            best: BTreeMap::new(),
        })
    }

    /// Rebuilds a campaign from a checkpoint; `circuits` must carry the same ids
    /// in the same order.
    pub fn resume(circuits: Vec<(String, Netlist)>, cp: Checkpoint) -> Result<Self, CoreError> {
        let ids: Vec<String> = circuits.iter().map(|(id, _)| id.clone()).collect();
        if ids != cp.circuit_ids {
            return Err(CoreError::DisjointCircuits(format!("checkpoint has {:?}, got {:?}", cp.circuit_ids, ids)));
        }
        let mut c = Self::new(circuits, cp.config, cp.strategy)?;
        c.epochs_done = cp.epochs_done;
        c.model = cp.model;
        c.dataset = cp.dataset;
        c.records = cp.records;
        c.best = cp.best;
        if c.model.config.train_iters > 0 && !c.dataset.is_empty() && c.model.fit().is_none() && !c.model.degenerate {
            c.model.refit(&c.dataset)?;
        }
        Ok(c)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: 1,
            config: self.config.clone(),
            strategy: self.strategy,
            circuit_ids: self.circuits.iter().map(|c| c.id.clone()).collect(),
            epochs_done: self.epochs_done,
            model: self.model.clone(),
            dataset: self.dataset.clone(),
            records: self.records.clone(),
            best: self.best.clone(),
        }
    }

    pub fn finished(&self) -> bool {
        self.epochs_done.is_some_and(|e| e >= self.config.epochs)
    }

    fn observe<S: Simulator>(&mut self, sim: &S, idx: usize, x: SolverParams, epoch: usize, kind: RunKind) -> Result<TrialRecord, CoreError> {
        let c = &self.circuits[idx];
        let out = sim.run(&c.netlist, &x, None);
        let rec = TrialRecord::new(&c.id, x, epoch, kind, None, &out);
        self.dataset.push(&c.id, &x, &c.features, rec.y, !rec.converged)?;
        let better = self.best.get(&c.id).is_none_or(|b| rec.y < b.y);
        if better {
            self.best.insert(c.id.clone(), Incumbent { x, y: rec.y });
        }
        self.records.push(rec.clone());
        Ok(rec)
    }

    /// Runs the next epoch: the default parameters first, then one candidate per
    /// circuit. Returns the new records.
    pub fn step<S: Simulator>(&mut self, sim: &S) -> Result<Vec<TrialRecord>, CoreError> {
        let epoch = self.epochs_done.map_or(0, |e| e + 1);
        let mut out = Vec::with_capacity(self.circuits.len());
        for idx in 0..self.circuits.len() {
            let rec = if epoch == 0 {
                self.observe(sim, idx, self.config.defaults, 0, RunKind::Default)?
            } else {
                let seed = decision_seed(self.config.seed, epoch, idx);
                let (x, kind) = match self.strategy {
                    Strategy::Bayesian => (self.propose(idx, seed)?, RunKind::Proposal),
                    Strategy::Random => (random_candidate(seed, self.config.defaults.tau), RunKind::Random),
                };
                self.observe(sim, idx, x, epoch, kind)?
            };
            out.push(rec);
        }
        self.epochs_done = Some(epoch);
        Ok(out)
    }

    /// Retrains the surrogate on all data and maximizes the acquisition for circuit `idx`.
    pub fn propose(&mut self, idx: usize, seed: u64) -> Result<SolverParams, CoreError> {
        self.model.train(&self.dataset)?;
        let c = &self.circuits[idx];
        let p = optimize_acquisition(
            &self.model,
            &self.dataset,
            &c.id,
            &c.features,
            &self.config.acquisition,
            self.config.defaults.tau,
            seed,
        )?;
        Ok(p.params)
    }

    /// Runs the remaining epochs, handing each epoch's records to `on_epoch`.
    pub fn run<S: Simulator>(
        &mut self,
        sim: &S,
        mut on_epoch: impl FnMut(&Campaign, &[TrialRecord]) -> Result<(), CoreError>,
    ) -> Result<(), CoreError> {
        while !self.finished() {
            let recs = self.step(sim)?;
            on_epoch(self, &recs)?;
        }
        Ok(())
    }
}

/// Uniform in `log10 x` over `[-7, 7]^4`.
pub fn random_candidate(seed: u64, tau: f64) -> SolverParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: [f64; 4] = std::array::from_fn(|_| 10f64.powf(rng.random_range(-7.0..=7.0)));
    SolverParams::from_vector(x, tau).expect("draws lie in the parameter box")
}

/// Finished campaign.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub records: Vec<TrialRecord>,
    pub dataset: Dataset,
    pub best: BTreeMap<String, Incumbent>,
    pub model: SurrogateModel,
}

fn run_campaign<S: Simulator>(
    circuits: Vec<(String, Netlist)>,
    sim: &S,
    config: &BoConfig,
    strategy: Strategy,
) -> Result<CampaignResult, CoreError> {
    if config.epochs == 0 {
        return Err(CoreError::Config("epochs must be at least 1".into()));
    }
    let mut c = Campaign::new(circuits, config.clone(), strategy)?;
    c.run(sim, |_, _| Ok(()))?;
    Ok(CampaignResult { records: c.records, dataset: c.dataset, best: c.best, model: c.model })
}

/// Default run on every circuit, then `config.epochs` rounds of surrogate
/// retraining, acquisition maximization and simulation per circuit.
pub fn cold_start<S: Simulator>(circuits: Vec<(String, Netlist)>, sim: &S, config: &BoConfig) -> Result<CampaignResult, CoreError> {
    run_campaign(circuits, sim, config, Strategy::Bayesian)
}

/// Same loop shape as [`cold_start`] with candidates drawn uniformly in log space.
pub fn random_search<S: Simulator>(circuits: Vec<(String, Netlist)>, sim: &S, config: &BoConfig) -> Result<CampaignResult, CoreError> {
    run_campaign(circuits, sim, config, Strategy::Random)
}
