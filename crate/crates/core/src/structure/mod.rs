//! Two-phase hybrid structure learning: per-trait parents-and-children
//! discovery with Markov-blanket SNP filtering, then BIC hill-climbing over the
//! surviving nodes.

mod hill_climb;
mod hiton;
mod score;

pub use hill_climb::{hill_climb, HillClimbResult};
pub use hiton::{hiton_pc, mb_filter, HitonResult, MbFilterResult};
pub use score::{bic_score, local_bic, BicScorer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Size of the conditional-independence tests.
    pub alpha: f64,
    /// Largest conditioning set tried by the parents-and-children search.
    pub max_cond_size: usize,
    /// Perturbed hill-climbing restarts after the first climb.
    pub restarts: usize,
    /// Random moves applied to the first optimum before each restart.
    pub perturb: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alpha: 0.05,
            max_cond_size: 3,
            restarts: 0,
            perturb: 3,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}
