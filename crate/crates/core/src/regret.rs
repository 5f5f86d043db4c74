use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rounding slack allowed when an action ties the optimum.
pub const REGRET_TOLERANCE: f64 = 1e-12;

/// Per-round regret of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub replication: u64,
    pub seed: u64,
    instant: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn new(replication: u64, seed: u64) -> Self {
        Self {
            replication,
            seed,
            instant: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    /// Append one round's regret. Values within rounding of zero are stored as 0.
    pub fn push(&mut self, delta: f64) -> Result<()> {
        if !delta.is_finite() || delta < -REGRET_TOLERANCE {
            return Err(invalid(format!(
                "instantaneous regret {delta} is negative or non-finite"
            )));
        }
        let delta = delta.max(0.0);
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        self.instant.push(delta);
        self.cumulative.push(prev + delta);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instant.is_empty()
    }

    pub fn instant(&self) -> &[f64] {
        &self.instant
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}
