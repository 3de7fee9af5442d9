//! Online model selection: EXP3 over a fixed conjecture set and EXP3 with
//! adaptive conjecture-set zooming.
//!
//! Randomness is derived from a single seed. Each round `t` gets two
//! independent ChaCha streams, `2t` for arm sampling and `2t + 1` for
//! rollouts, so a trace is reproducible regardless of how many draws
//! any earlier round consumed.

mod exp3;
mod loss;
mod zoom;

pub use exp3::{
    exp3_update, importance_weighted_losses, run_exp3, run_exp3_with, sample_arm,
    sampling_distribution, BanditState, Exp3Run, RoundRecord,
};
pub use loss::{default_loss_scale, estimate_loss, oracle_divergence, rollout_divergence};
pub use zoom::{
    prune, refine, run_zoom_exp3, ArmStats, PruneOutcome, PruneReason, Schedule, ZoomConfig,
    ZoomEvent, ZoomRun,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossEstimator {
    /// Exact long-run divergence of the played policy.
    Oracle,
    /// Plug-in divergence from one simulated trajectory of `horizon` steps.
    Rollout { horizon: usize, smoothing: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditConfig {
    pub learning_rate: f64,
    pub exploration: f64,
    pub horizon: usize,
    pub estimator: LossEstimator,
    /// Losses are clipped to `[0, scale]` and divided by it. `None` derives
    /// the scale from the initial conjecture set (oracle mode only).
    pub loss_scale: Option<f64>,
    pub seed: u64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.2,
            exploration: 0.002,
            horizon: 1500,
            estimator: LossEstimator::Oracle,
            loss_scale: None,
            seed: 42,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.exploration > 0.0 && self.exploration < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "exploration must lie in (0, 1), got {}",
                self.exploration
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if let LossEstimator::Rollout { horizon, smoothing } = self.estimator {
            if horizon == 0 {
                return Err(Error::InvalidConfig("rollout horizon must be at least 1".into()));
            }
            if !(smoothing > 0.0 && smoothing.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "rollout smoothing must be positive, got {smoothing}"
                )));
            }
            if self.loss_scale.is_none() {
                return Err(Error::InvalidConfig(
                    "rollout estimation needs an explicit loss_scale".into(),
                ));
            }
        }
        if let Some(scale) = self.loss_scale {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "loss_scale must be positive, got {scale}"
                )));
            }
        }
        Ok(())
    }
}

/// Generator for round `round`'s substream `purpose` (0 = sampling, 1 = rollout).
pub(crate) fn round_rng(seed: u64, round: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * round as u64 + purpose);
    rng
}

pub(crate) const SAMPLING_STREAM: u64 = 0;
pub(crate) const ROLLOUT_STREAM: u64 = 1;

/// Running mean of a sequence.
pub(crate) fn running_average(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut total = 0.0;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            total += v;
            total / (i + 1) as f64
        })
        .collect()
}
