use std::fmt;

use super::exp3::{exp3_update, sample_arm, BanditState, RoundRecord};
use super::{
    default_loss_scale, estimate_loss, oracle_divergence, round_rng, running_average,
    BanditConfig, LossEstimator, ROLLOUT_STREAM, SAMPLING_STREAM,
};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};
use crate::models::{ConjectureSet, KernelFamily, ParamBounds, ParamLabel, SubjectiveKernel};
use crate::soft::{soft_best_response, SoftPlanConfig};

/// Points closer than this (sup norm) count as the same parameter.
const DUPLICATE_TOL: f64 = 1e-12;

/// `initial * decay^epoch`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub initial: f64,
    pub decay: f64,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Self {
            initial: value,
            decay: 1.0,
        }
    }

    pub fn value(&self, epoch: usize) -> f64 {
        self.initial * self.decay.powi(epoch as i32)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.initial > 0.0 && self.initial.is_finite()) || !(self.decay > 0.0 && self.decay <= 1.0)
        {
            return Err(Error::InvalidConfig(format!(
                "{name} schedule needs initial > 0 and decay in (0, 1], got {} and {}",
                self.initial, self.decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomConfig {
    pub interval: usize,
    /// Suboptimality margin.
    pub alpha: Schedule,
    /// Resolution threshold on the uncertainty `c / sqrt(max(N, 1))`.
    pub delta: Schedule,
    pub radius: Schedule,
    pub grid_size: usize,
    pub uncertainty: f64,
    pub bounds: ParamBounds,
}

impl Default for ZoomConfig {
    fn default() -> Self {
        Self {
            interval: 100,
            alpha: Schedule {
                initial: 0.1,
                decay: 0.8,
            },
            delta: Schedule::constant(0.02),
            radius: Schedule {
                initial: 0.1,
                decay: 0.5,
            },
            grid_size: 3,
            uncertainty: 1.0,
            bounds: ParamBounds(vec![(0.0, 0.5)]),
        }
    }
}

impl ZoomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::InvalidConfig("zoom interval must be at least 1".into()));
        }
        self.alpha.validate("alpha")?;
        self.delta.validate("delta")?;
        self.radius.validate("radius")?;
        if self.grid_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid size must be at least 2, got {}",
                self.grid_size
            )));
        }
        if !(self.uncertainty > 0.0 && self.uncertainty.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "uncertainty constant must be positive, got {}",
                self.uncertainty
            )));
        }
        if self.bounds.0.is_empty() || self.bounds.0.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidConfig("parameter bounds must be nonempty with lo <= hi".into()));
        }
        Ok(())
    }
}

/// Pull count and running mean of one arm. `mean` is `None` until the arm
/// has either been pulled or inherited a prior from its parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmStats {
    pub pulls: usize,
    pub mean: Option<f64>,
}

impl ArmStats {
    pub fn uncertainty(&self, c: f64) -> f64 {
        c / (self.pulls.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneReason {
    Suboptimal,
    Converged,
}

impl fmt::Display for PruneReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PruneReason::Suboptimal => "suboptimal",
            PruneReason::Converged => "converged",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    /// Arm with the smallest mean, lowest index on ties.
    pub incumbent: Option<usize>,
    pub best: Option<f64>,
    pub kept: Vec<usize>,
    pub pruned: Vec<(usize, PruneReason)>,
    /// Kept arms eligible for refinement.
    pub active: Vec<usize>,
}

/// Removes arms with `L > J* + alpha` or `U < delta`. The incumbent is never
/// removed; arms without an estimate are kept but neither pruned nor active.
pub fn prune(stats: &[ArmStats], alpha: f64, delta: f64, c: f64) -> PruneOutcome {
    let mut incumbent: Option<usize> = None;
    for (k, s) in stats.iter().enumerate() {
        if let Some(l) = s.mean {
            if incumbent.is_none_or(|i| l < stats[i].mean.unwrap_or(f64::INFINITY)) {
                incumbent = Some(k);
            }
        }
    }
    let best = incumbent.and_then(|i| stats[i].mean);
    let mut outcome = PruneOutcome {
        incumbent,
        best,
        kept: Vec::new(),
        pruned: Vec::new(),
        active: Vec::new(),
    };
    for (k, s) in stats.iter().enumerate() {
        let (Some(l), Some(j)) = (s.mean, best) else {
            outcome.kept.push(k);
            continue;
        };
        let resolved = s.uncertainty(c) < delta;
        if Some(k) != incumbent && l > j + alpha {
            outcome.pruned.push((k, PruneReason::Suboptimal));
        } else if Some(k) != incumbent && resolved {
            outcome.pruned.push((k, PruneReason::Converged));
        } else {
            outcome.kept.push(k);
            if !resolved {
                outcome.active.push(k);
            }
        }
    }
    outcome
}

fn axis_points(center: f64, radius: f64, g: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    let a = (center - radius).max(lo);
    let b = (center + radius).min(hi);
    (0..g)
        .map(|i| {
            let v = a + (b - a) * i as f64 / (g - 1) as f64;
            v.clamp(lo, hi)
        })
        .collect()
}

fn is_duplicate(point: &[f64], others: &[Vec<f64>]) -> bool {
    others.iter().any(|o| {
        o.len() == point.len()
            && o.iter().zip(point).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL)
    })
}

/// New grid points around each center: `g` evenly spaced values per axis on
/// `[theta - radius, theta + radius]` clipped to the bounds, taking the
/// Cartesian product for vector parameters. Points within `1e-12` of an
/// existing point or of one already emitted are dropped.
pub fn refine(
    centers: &[Vec<f64>],
    existing: &[Vec<f64>],
    radius: f64,
    grid_size: usize,
    bounds: &ParamBounds,
) -> Vec<Vec<f64>> {
    let mut seen: Vec<Vec<f64>> = existing.to_vec();
    let mut added = Vec::new();
    for center in centers {
        let axes: Vec<Vec<f64>> = center
            .iter()
            .zip(&bounds.0)
            .map(|(c, b)| axis_points(*c, radius, grid_size, *b))
            .collect();
        let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        for p in grid {
            if !is_duplicate(&p, &seen) {
                seen.push(p.clone());
                added.push(p);
            }
        }
    }
    added
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomEvent {
    /// Rounds completed when the event fired.
    pub t: usize,
    pub epoch: usize,
    pub best: Option<f64>,
    pub incumbent: Option<ParamLabel>,
    pub pruned: Vec<(ParamLabel, PruneReason)>,
    pub added: Vec<ParamLabel>,
    pub set_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomRun {
    pub trace: Vec<RoundRecord>,
    pub events: Vec<ZoomEvent>,
    /// Number of arms in play during each round.
    pub set_sizes: Vec<usize>,
    pub final_set: Vec<ParamLabel>,
    pub final_probabilities: Vec<f64>,
    pub loss_scale: f64,
    pub running_average: Vec<f64>,
}

struct Arm {
    member: SubjectiveKernel,
    policy: Policy,
    oracle_loss: f64,
    /// False for initial arms until their first pull.
    has_estimate: bool,
}

fn make_arm(
    mdp: &Mdp,
    member: SubjectiveKernel,
    soft: &SoftPlanConfig,
    scale: f64,
    has_estimate: bool,
) -> Result<Arm> {
    let policy = soft_best_response(&mdp.subjective(&member.kernel)?, soft)?.policy;
    let oracle_loss = oracle_divergence(mdp, &member.kernel, &policy)?.clamp(0.0, scale) / scale;
    Ok(Arm {
        member,
        policy,
        oracle_loss,
        has_estimate,
    })
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// EXP3 whose arm set is pruned and refined every `interval` rounds.
///
/// The exploration floor is `gamma / K_t` for the current set size.
/// Refined arms start with the median weight of the surviving arms, no
/// pulls, and their parent's running mean as a prior.
pub fn run_zoom_exp3<F: KernelFamily>(
    mdp: &Mdp,
    family: &F,
    initial: &[Vec<f64>],
    cfg: &BanditConfig,
    zoom: &ZoomConfig,
    soft: &SoftPlanConfig,
) -> Result<ZoomRun> {
    cfg.validate()?;
    zoom.validate()?;
    if initial.is_empty() {
        return Err(Error::EmptyConjectureSet);
    }
    for p in initial {
        if p.len() != family.dimension() || !zoom.bounds.contains(p) {
            return Err(Error::InvalidConfig(format!(
                "initial parameter {p:?} is outside the zoom bounds"
            )));
        }
    }
    let members: Vec<SubjectiveKernel> = initial
        .iter()
        .enumerate()
        .map(|(id, p)| family.conjecture(id, p.clone()))
        .collect::<Result<_>>()?;
    let initial_set = ConjectureSet::new(members, Some(zoom.bounds.clone()))?;
    let scale = match cfg.loss_scale {
        Some(s) => s,
        None => default_loss_scale(mdp, &initial_set)?,
    };
    let mut arms: Vec<Arm> = initial_set
        .members()
        .iter()
        .map(|m| make_arm(mdp, m.clone(), soft, scale, false))
        .collect::<Result<_>>()?;
    let mut next_id = arms.len();

    let mut state = BanditState::new(arms.len());
    let mut trace = Vec::with_capacity(cfg.horizon);
    let mut events = Vec::new();
    let mut set_sizes = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        set_sizes.push(arms.len());
        let probs = state.probabilities(cfg.exploration);
        let k = sample_arm(&probs, &mut round_rng(cfg.seed, t, SAMPLING_STREAM));
        let arm = &mut arms[k];
        let loss = match cfg.estimator {
            LossEstimator::Oracle => arm.oracle_loss,
            LossEstimator::Rollout { .. } => estimate_loss(
                mdp,
                &arm.member.kernel,
                &arm.policy,
                &cfg.estimator,
                scale,
                &mut round_rng(cfg.seed, t, ROLLOUT_STREAM),
            )?,
        };
        arm.has_estimate = true;
        exp3_update(&mut state, k, loss, probs[k], cfg.learning_rate);
        trace.push(RoundRecord {
            t,
            arm: k,
            id: arm.member.label.id,
            param: arm.member.label.scalar_value(),
            prob: probs[k],
            loss,
        });

        let done = t + 1;
        if done % zoom.interval != 0 || done >= cfg.horizon {
            continue;
        }
        let epoch = done / zoom.interval;
        let stats: Vec<ArmStats> = arms
            .iter()
            .enumerate()
            .map(|(i, a)| ArmStats {
                pulls: state.pulls[i],
                mean: a.has_estimate.then_some(state.mean_loss[i]),
            })
            .collect();
        let outcome = prune(
            &stats,
            zoom.alpha.value(epoch),
            zoom.delta.value(epoch),
            zoom.uncertainty,
        );
        let points: Vec<Vec<f64>> = arms
            .iter()
            .map(|a| a.member.label.point.clone().unwrap_or_default())
            .collect();
        let centers: Vec<Vec<f64>> = outcome.active.iter().map(|&i| points[i].clone()).collect();
        let new_points = refine(
            &centers,
            &points,
            zoom.radius.value(epoch),
            zoom.grid_size,
            &zoom.bounds,
        );

        // Each new point inherits the mean of the nearest active center.
        let parent_mean = |p: &[f64]| -> f64 {
            let mut best = (f64::INFINITY, 0.0);
            for &c in &outcome.active {
                let dist = points[c]
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if dist < best.0 {
                    best = (dist, state.mean_loss[c]);
                }
            }
            best.1
        };
        let weights = state.weights();
        let kept_weights: Vec<f64> = outcome.kept.iter().map(|&i| weights[i]).collect();
        let new_log_weight = median(kept_weights).ln();
        let new_means: Vec<f64> = new_points.iter().map(|p| parent_mean(p)).collect();

        let pruned_labels = outcome
            .pruned
            .iter()
            .map(|(i, r)| (arms[*i].member.label.clone(), *r))
            .collect();
        let incumbent = outcome.incumbent.map(|i| arms[i].member.label.clone());
        let mut old: Vec<Option<Arm>> = arms.into_iter().map(Some).collect();
        arms = outcome
            .kept
            .iter()
            .map(|&i| old[i].take().expect("kept indices are distinct"))
            .collect();
        let mut added = Vec::with_capacity(new_points.len());
        for p in new_points {
            let member = family.conjecture(next_id, p)?;
            next_id += 1;
            added.push(member.label.clone());
            arms.push(make_arm(mdp, member, soft, scale, true)?);
        }
        state.rebuild(&outcome.kept, new_log_weight, &new_means);
        events.push(ZoomEvent {
            t: done,
            epoch,
            best: outcome.best,
            incumbent,
            pruned: pruned_labels,
            added,
            set_size: arms.len(),
        });
    }

    Ok(ZoomRun {
        running_average: running_average(trace.iter().map(|r| r.loss)),
        final_probabilities: state.probabilities(cfg.exploration),
        final_set: arms.into_iter().map(|a| a.member.label).collect(),
        trace,
        events,
        set_sizes,
        loss_scale: scale,
    })
}
