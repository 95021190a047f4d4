//! Observations `(x, xi, y)` collected across circuits.

use boapta_circuit::{FeatureVector, SolverParams};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::mlp::FEATURE_DIM;
use crate::warp::{unit_from_raw, D};

/// Objective recorded for non-convergent or halted runs.
pub const PENALTY_Y: f64 = 9999.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub circuit_id: String,
    /// Raw solver parameters `(C, L, R0, G0)`.
    pub x: [f64; D],
    pub features: [f64; FEATURE_DIM],
    pub y: f64,
    pub penalty: bool,
}

impl DataRow {
    pub fn unit_x(&self) -> [f64; D] {
        self.x.map(unit_from_raw)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<DataRow>,
}

/// Mean and spread used to standardize a column; spread falls back to 1 for
/// constant columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Self { mean, std: if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 } }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

impl Default for Standardizer {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        circuit_id: &str,
        x: &SolverParams,
        features: &FeatureVector,
        y: f64,
        penalty: bool,
    ) -> Result<(), CoreError> {
        if !y.is_finite() {
            return Err(CoreError::NonFiniteTarget(y));
        }
        self.rows.push(DataRow {
            circuit_id: circuit_id.to_string(),
            x: x.vector(),
            features: features.to_array(),
            y,
            penalty,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_stats(&self) -> [Standardizer; FEATURE_DIM] {
        std::array::from_fn(|d| Standardizer::fit(self.rows.iter().map(move |r| r.features[d])))
    }

    /// Lowest observed `y` for a circuit, with its row.
    pub fn best_for(&self, circuit_id: &str) -> Option<&DataRow> {
        self.rows.iter().filter(|r| r.circuit_id == circuit_id).min_by(|a, b| a.y.total_cmp(&b.y))
    }

    pub fn penalty_count(&self) -> usize {
        self.rows.iter().filter(|r| r.penalty).count()
    }
}
