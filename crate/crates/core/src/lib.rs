//! Bayesian optimization of pseudo-transient solver parameters.
//!
//! A GP surrogate over warped solver parameters and network-transformed netlist
//! features proposes parameters through EI, UCB or MES acquisition, driven by a
//! cold-start loop over a circuit set and a Monte-Carlo acceleration loop.

pub mod acquisition;
pub mod campaign;
pub mod dataset;
mod error;
pub mod gp;
pub mod kernel;
pub mod mlp;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod records;
pub mod report;
pub mod simulator;
pub mod special;
pub mod warp;

pub use acquisition::{expected_improvement, mes_score, optimize_acquisition, ucb_score, AcquisitionConfig, AcquisitionKind, Proposal};
pub use campaign::{cold_start, default_params, random_search, BoConfig, Campaign, CampaignResult, Checkpoint, Strategy};
pub use dataset::{DataRow, Dataset, PENALTY_Y};
pub use error::CoreError;
pub use kernel::{composite_kernel, GpHyperparams};
pub use mlp::{mlp_forward, MlpWeights};
pub use model::{train_surrogate, SurrogateConfig, SurrogateModel, YTransform};
pub use montecarlo::{mc_accelerate, mc_constant, McOptions, McReport, McSample, WarmStart};
pub use records::{read_log, RunKind, TrialLog, TrialRecord};
pub use report::{speedup_report, SpeedupReport};
pub use simulator::{CeptaSimulator, FnSimulator, RunOutcome, Simulator};
pub use warp::{betacdf_warp, sample_warp_params, WarpPosterior};
