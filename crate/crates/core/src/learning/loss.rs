use rand::Rng;

use super::LossEstimator;
use crate::error::{Error, Result};
use crate::mdp::{state_action_frequencies, Mdp, Policy, TransitionKernel};
use crate::models::{kl_cost_table, kl_divergence, long_run_divergence, ConjectureSet};

/// Exact `D(theta | pi)` for the kernel `q`.
pub fn oracle_divergence(mdp: &Mdp, q: &TransitionKernel, pi: &Policy) -> Result<f64> {
    let d = state_action_frequencies(mdp, pi)?;
    Ok(long_run_divergence(&d, &kl_cost_table(mdp, q)?))
}

/// Largest entrywise KL cost over the set, or 1 when every member is exact.
pub fn default_loss_scale(mdp: &Mdp, cs: &ConjectureSet) -> Result<f64> {
    let mut scale = 0.0f64;
    for member in cs.members() {
        scale = scale.max(kl_cost_table(mdp, &member.kernel)?.max_entry());
    }
    Ok(if scale > 0.0 { scale } else { 1.0 })
}

fn draw(rng: &mut impl Rng, probs: &[f64]) -> usize {
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

/// Plug-in `sum f(x,a) KL(P_hat(.|x,a) || Q(.|x,a))` from one trajectory of
/// `horizon` steps under the true kernel, first tenth discarded as burn-in.
///
/// `P_hat` uses `smoothing` pseudo-counts per successor. Rows of `q` with
/// zeros are smoothed the same way, treating `q` as `n(x,a)` observed counts.
pub fn rollout_divergence(
    mdp: &Mdp,
    q: &TransitionKernel,
    pi: &Policy,
    horizon: usize,
    smoothing: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let view = mdp.subjective(q)?;
    let (s, m) = (view.num_states(), view.num_actions());
    let burn_in = horizon / 10;
    let mut counts = vec![0.0f64; s * m * s];
    let mut x = draw(rng, mdp.initial());
    for step in 0..horizon {
        let a = draw(rng, pi.row(x));
        let next = draw(rng, mdp.kernel().row(x, a));
        if step >= burn_in {
            counts[(x * m + a) * s + next] += 1.0;
        }
        x = next;
    }
    let kept = (horizon - burn_in) as f64;
    if kept == 0.0 {
        return Ok(0.0);
    }

    let mut total = 0.0;
    for xa in 0..s * m {
        let row = &counts[xa * s..(xa + 1) * s];
        let n: f64 = row.iter().sum();
        if n == 0.0 {
            continue;
        }
        let denom = n + s as f64 * smoothing;
        let p_hat: Vec<f64> = row.iter().map(|c| (c + smoothing) / denom).collect();
        let q_row = q.row(xa / m, xa % m);
        let q_used: Vec<f64> = if q_row.contains(&0.0) {
            q_row.iter().map(|v| (n * v + smoothing) / denom).collect()
        } else {
            q_row.to_vec()
        };
        let kl = kl_divergence(&p_hat, &q_used).map_err(|_| Error::KlSupport {
            state: xa / m,
            action: xa % m,
            next: q_used.iter().position(|v| *v <= 0.0).unwrap_or(0),
        })?;
        total += (n / kept) * kl;
    }
    Ok(total)
}

/// Normalized loss in `[0, 1]`: divergence clipped to `[0, scale]` over `scale`.
pub fn estimate_loss(
    mdp: &Mdp,
    q: &TransitionKernel,
    pi: &Policy,
    estimator: &LossEstimator,
    scale: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let raw = match *estimator {
        LossEstimator::Oracle => oracle_divergence(mdp, q, pi)?,
        LossEstimator::Rollout { horizon, smoothing } => {
            rollout_divergence(mdp, q, pi, horizon, smoothing, rng)?
        }
    };
    Ok(raw.clamp(0.0, scale) / scale)
}
