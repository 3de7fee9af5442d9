use rand::Rng;

use super::{
    default_loss_scale, estimate_loss, oracle_divergence, round_rng, running_average,
    BanditConfig, LossEstimator, ROLLOUT_STREAM, SAMPLING_STREAM,
};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};
use crate::models::{ConjectureSet, ParamLabel};
use crate::soft::{soft_best_response, SoftPlanConfig};

/// `p(k) = (1 - gamma) w(k) / sum w + gamma / K`.
pub fn sampling_distribution(weights: &[f64], exploration: f64) -> Vec<f64> {
    let k = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| (1.0 - exploration) * w / total + exploration / k)
        .collect()
}

/// Inverse-CDF draw from `probs`.
pub fn sample_arm(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `l(k) = loss / prob` for the pulled arm, zero elsewhere.
pub fn importance_weighted_losses(num_arms: usize, arm: usize, loss: f64, prob: f64) -> Vec<f64> {
    let mut out = vec![0.0; num_arms];
    out[arm] = loss / prob;
    out
}

/// Exponential weights plus per-arm statistics.
///
/// Weights are held in log space and reported divided by their maximum, so
/// long runs neither overflow nor collapse a weight to exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    log_weights: Vec<f64>,
    pub t: usize,
    pub pulls: Vec<usize>,
    pub mean_loss: Vec<f64>,
    pub cumulative_loss: f64,
}

impl BanditState {
    pub fn new(num_arms: usize) -> Self {
        Self {
            log_weights: vec![0.0; num_arms],
            t: 0,
            pulls: vec![0; num_arms],
            mean_loss: vec![0.0; num_arms],
            cumulative_loss: 0.0,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.log_weights.len()
    }

    /// Weights scaled so the largest is 1.
    pub fn weights(&self) -> Vec<f64> {
        let max = self.max_log_weight();
        self.log_weights.iter().map(|lw| (lw - max).exp()).collect()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn probabilities(&self, exploration: f64) -> Vec<f64> {
        sampling_distribution(&self.weights(), exploration)
    }

    fn max_log_weight(&self) -> f64 {
        self.log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Keeps the arms at `keep` (in order) and appends `added` fresh arms,
    /// each with log weight `added_log_weight`, no pulls and mean `added_means`.
    pub(crate) fn rebuild(&mut self, keep: &[usize], added_log_weight: f64, added_means: &[f64]) {
        let mut log_weights: Vec<f64> = keep.iter().map(|&i| self.log_weights[i]).collect();
        let mut pulls: Vec<usize> = keep.iter().map(|&i| self.pulls[i]).collect();
        let mut mean_loss: Vec<f64> = keep.iter().map(|&i| self.mean_loss[i]).collect();
        for &mean in added_means {
            log_weights.push(added_log_weight);
            pulls.push(0);
            mean_loss.push(mean);
        }
        self.log_weights = log_weights;
        self.pulls = pulls;
        self.mean_loss = mean_loss;
        self.renormalize();
    }

    fn renormalize(&mut self) {
        let max = self.max_log_weight();
        for lw in &mut self.log_weights {
            *lw -= max;
        }
    }
}

/// One EXP3 step: `w(arm) *= exp(-lr * loss / prob)`, then weights are
/// renormalized by their maximum and the pulled arm's statistics updated.
pub fn exp3_update(state: &mut BanditState, arm: usize, loss: f64, prob: f64, learning_rate: f64) {
    state.log_weights[arm] -= learning_rate * loss / prob;
    state.renormalize();
    state.t += 1;
    state.pulls[arm] += 1;
    let n = state.pulls[arm] as f64;
    state.mean_loss[arm] += (loss - state.mean_loss[arm]) / n;
    state.cumulative_loss += loss;
}

/// One round of a bandit trace. `arm` indexes the set active in that round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub arm: usize,
    pub id: usize,
    pub param: Option<f64>,
    pub prob: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp3Run {
    pub labels: Vec<ParamLabel>,
    pub trace: Vec<RoundRecord>,
    /// Fraction of rounds each arm was pulled.
    pub frequencies: Vec<f64>,
    pub final_probabilities: Vec<f64>,
    /// Exact normalized loss of each arm, the regret reference.
    pub oracle_losses: Vec<f64>,
    pub loss_scale: f64,
    pub running_average: Vec<f64>,
    /// `regret[t-1] = sum_{s<=t} J(I_s) - t min_k J(k)` with exact losses.
    pub regret: Vec<f64>,
    pub state: BanditState,
}

impl Exp3Run {
    pub fn final_regret(&self) -> f64 {
        self.regret.last().copied().unwrap_or(0.0)
    }

    /// Most frequently pulled arm, lowest index on ties.
    pub fn most_selected(&self) -> usize {
        let mut best = 0;
        for (k, f) in self.frequencies.iter().enumerate() {
            if *f > self.frequencies[best] {
                best = k;
            }
        }
        best
    }
}

/// EXP3 over arms with known exact losses `oracle_losses` in `[0, 1]`.
///
/// `observe(arm, round, rng)` returns the loss fed to the update; the
/// generator is the round's rollout stream.
pub fn run_exp3_with<F>(
    labels: Vec<ParamLabel>,
    oracle_losses: Vec<f64>,
    loss_scale: f64,
    cfg: &BanditConfig,
    mut observe: F,
) -> Result<Exp3Run>
where
    F: FnMut(usize, usize, &mut rand_chacha::ChaCha8Rng) -> Result<f64>,
{
    cfg.validate()?;
    let k = labels.len();
    if k == 0 {
        return Err(Error::EmptyConjectureSet);
    }
    if oracle_losses.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} oracle losses for {k} arms",
            oracle_losses.len()
        )));
    }
    let mut state = BanditState::new(k);
    let mut trace = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        let probs = state.probabilities(cfg.exploration);
        let arm = sample_arm(&probs, &mut round_rng(cfg.seed, t, SAMPLING_STREAM));
        let loss = observe(arm, t, &mut round_rng(cfg.seed, t, ROLLOUT_STREAM))?;
        exp3_update(&mut state, arm, loss, probs[arm], cfg.learning_rate);
        trace.push(RoundRecord {
            t,
            arm,
            id: labels[arm].id,
            param: labels[arm].scalar_value(),
            prob: probs[arm],
            loss,
        });
    }

    let frequencies = state
        .pulls
        .iter()
        .map(|n| *n as f64 / cfg.horizon as f64)
        .collect();
    let best = oracle_losses.iter().copied().fold(f64::INFINITY, f64::min);
    let mut acc = 0.0;
    let regret = trace
        .iter()
        .map(|r| {
            acc += oracle_losses[r.arm] - best;
            acc
        })
        .collect();
    Ok(Exp3Run {
        labels,
        frequencies,
        final_probabilities: state.probabilities(cfg.exploration),
        running_average: running_average(trace.iter().map(|r| r.loss)),
        oracle_losses,
        loss_scale,
        regret,
        trace,
        state,
    })
}

/// Softmax best response of every member under its own kernel.
pub(crate) fn member_policies(
    mdp: &Mdp,
    cs: &ConjectureSet,
    soft: &SoftPlanConfig,
) -> Result<Vec<Policy>> {
    cs.members()
        .iter()
        .map(|m| Ok(soft_best_response(&mdp.subjective(&m.kernel)?, soft)?.policy))
        .collect()
}

/// EXP3 over a fixed conjecture set. Each arm plays its softmax best response,
/// computed once up front.
pub fn run_exp3(
    mdp: &Mdp,
    cs: &ConjectureSet,
    cfg: &BanditConfig,
    soft: &SoftPlanConfig,
) -> Result<Exp3Run> {
    cfg.validate()?;
    let scale = match cfg.loss_scale {
        Some(s) => s,
        None => default_loss_scale(mdp, cs)?,
    };
    let policies = member_policies(mdp, cs, soft)?;
    let oracle: Vec<f64> = cs
        .members()
        .iter()
        .zip(&policies)
        .map(|(m, pi)| Ok(oracle_divergence(mdp, &m.kernel, pi)?.clamp(0.0, scale) / scale))
        .collect::<Result<_>>()?;
    let labels = cs.members().iter().map(|m| m.label.clone()).collect();
    let cached = oracle.clone();
    run_exp3_with(labels, oracle, scale, cfg, |arm, _, rng| match cfg.estimator {
        LossEstimator::Oracle => Ok(cached[arm]),
        LossEstimator::Rollout { .. } => estimate_loss(
            mdp,
            cs.kernel(arm),
            &policies[arm],
            &cfg.estimator,
            scale,
            rng,
        ),
    })
}
