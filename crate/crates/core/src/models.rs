//! Subjective kernel families, conjecture sets and KL-based consistency.

use crate::error::{Error, Result};
use crate::mdp::{state_action_frequencies, Mdp, Policy, StateActionFrequency, TransitionKernel};

/// Default band for membership in the pseudo-true set.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Identifies a conjecture: a stable id plus an optional point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLabel {
    pub id: usize,
    pub point: Option<Vec<f64>>,
}

impl ParamLabel {
    pub fn index(id: usize) -> Self {
        Self { id, point: None }
    }

    pub fn scalar(id: usize, value: f64) -> Self {
        Self {
            id,
            point: Some(vec![value]),
        }
    }

    /// First coordinate of the parameter point, if any.
    pub fn scalar_value(&self) -> Option<f64> {
        self.point.as_ref().and_then(|p| p.first().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectiveKernel {
    pub label: ParamLabel,
    pub kernel: TransitionKernel,
}

/// Axis-aligned box `[lo_i, hi_i]` in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBounds(pub Vec<(f64, f64)>);

impl ParamBounds {
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.0.len()
            && point
                .iter()
                .zip(&self.0)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// An ordered, nonempty list of conjectures with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjectureSet {
    members: Vec<SubjectiveKernel>,
    bounds: Option<ParamBounds>,
}

impl ConjectureSet {
    pub fn new(members: Vec<SubjectiveKernel>, bounds: Option<ParamBounds>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyConjectureSet);
        }
        let mut ids: Vec<usize> = members.iter().map(|m| m.label.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateLabel(w[0]));
        }
        let shape = (members[0].kernel.num_states(), members[0].kernel.num_actions());
        if members
            .iter()
            .any(|m| (m.kernel.num_states(), m.kernel.num_actions()) != shape)
        {
            return Err(Error::DimensionMismatch(
                "conjecture kernels differ in shape".into(),
            ));
        }
        Ok(Self { members, bounds })
    }

    /// Tabular conjectures labelled by position.
    pub fn from_kernels(kernels: Vec<TransitionKernel>) -> Result<Self> {
        let members = kernels
            .into_iter()
            .enumerate()
            .map(|(id, kernel)| SubjectiveKernel {
                label: ParamLabel::index(id),
                kernel,
            })
            .collect();
        Self::new(members, None)
    }

    pub fn members(&self) -> &[SubjectiveKernel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn bounds(&self) -> Option<&ParamBounds> {
        self.bounds.as_ref()
    }

    pub fn kernel(&self, k: usize) -> &TransitionKernel {
        &self.members[k].kernel
    }
}

/// Per-pair KL costs `c(x, a) = KL(P(.|x,a) || Q(.|x,a))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlCostTable {
    num_states: usize,
    num_actions: usize,
    costs: Vec<f64>,
}

impl KlCostTable {
    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.costs[x * self.num_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }

    pub fn max_entry(&self) -> f64 {
        self.costs.iter().copied().fold(0.0, f64::max)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// `KL(nu || mu) = sum nu log(nu / mu)`, with `0 log 0 = 0`.
///
/// Fails when `nu` puts mass where `mu` has none.
pub fn kl_divergence(nu: &[f64], mu: &[f64]) -> Result<f64> {
    if nu.len() != mu.len() {
        return Err(Error::DimensionMismatch(format!(
            "KL arguments have lengths {} and {}",
            nu.len(),
            mu.len()
        )));
    }
    let mut total = 0.0;
    for (coord, (&p, &q)) in nu.iter().zip(mu).enumerate() {
        if p == 0.0 {
            continue;
        }
        if q <= 0.0 {
            return Err(Error::AbsoluteContinuity { coord, nu: p, mu: q });
        }
        total += p * (p / q).ln();
    }
    // Rounding can push the sum of an exact zero slightly negative.
    Ok(total.max(0.0))
}

pub fn kl_cost_table(mdp: &Mdp, q: &TransitionKernel) -> Result<KlCostTable> {
    let view = mdp.subjective(q)?;
    let (s, m) = (view.num_states(), view.num_actions());
    let p = mdp.kernel();
    let mut costs = Vec::with_capacity(s * m);
    for x in 0..s {
        for a in 0..m {
            let c = kl_divergence(p.row(x, a), q.row(x, a)).map_err(|e| match e {
                Error::AbsoluteContinuity { coord, .. } => Error::KlSupport {
                    state: x,
                    action: a,
                    next: coord,
                },
                other => other,
            })?;
            costs.push(c);
        }
    }
    Ok(KlCostTable {
        num_states: s,
        num_actions: m,
        costs,
    })
}

/// `D(d) = sum_{x,a} d(x, a) c(x, a)`.
pub fn long_run_divergence(d: &StateActionFrequency, c: &KlCostTable) -> f64 {
    d.as_slice().iter().zip(&c.costs).map(|(w, c)| w * c).sum()
}

/// Long-run divergence of every conjecture under the stationary data of `pi`.
pub fn divergence_vector(mdp: &Mdp, cs: &ConjectureSet, pi: &Policy) -> Result<Vec<f64>> {
    let d = state_action_frequencies(mdp, pi)?;
    cs.members()
        .iter()
        .map(|m| Ok(long_run_divergence(&d, &kl_cost_table(mdp, &m.kernel)?)))
        .collect()
}

/// Indices whose divergence is within `tie_tol` of the minimum.
pub fn argmin_band(values: &[f64], tie_tol: f64) -> Vec<usize> {
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= best + tie_tol)
        .map(|(k, _)| k)
        .collect()
}

/// Conjectures minimizing the long-run divergence under `pi`.
pub fn pseudo_true_set(
    mdp: &Mdp,
    cs: &ConjectureSet,
    pi: &Policy,
    tie_tol: f64,
) -> Result<Vec<usize>> {
    Ok(argmin_band(&divergence_vector(mdp, cs, pi)?, tie_tol))
}

/// `Q_eps(x' | x, a) = (1 - eps) P(x' | x, a) + eps / S`.
pub fn mixture_kernel(base: &TransitionKernel, eps: f64) -> Result<TransitionKernel> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::MixtureWeight(eps));
    }
    let s = base.num_states();
    let noise = eps / s as f64;
    let probs = base
        .as_slice()
        .iter()
        .map(|p| (1.0 - eps) * p + noise)
        .collect();
    TransitionKernel::new(s, base.num_actions(), probs)
}

/// Conjecture set mixing the true kernel with uniform noise at each `eps`.
pub fn mixture_family(mdp: &Mdp, eps_values: &[f64]) -> Result<ConjectureSet> {
    let members = eps_values
        .iter()
        .enumerate()
        .map(|(id, &eps)| {
            Ok(SubjectiveKernel {
                label: ParamLabel::scalar(id, eps),
                kernel: mixture_kernel(mdp.kernel(), eps)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ConjectureSet::new(members, Some(ParamBounds(vec![(0.0, 1.0)])))
}

/// Maps parameter points to subjective kernels.
pub trait KernelFamily {
    fn dimension(&self) -> usize;
    fn kernel(&self, point: &[f64]) -> Result<TransitionKernel>;

    fn conjecture(&self, id: usize, point: Vec<f64>) -> Result<SubjectiveKernel> {
        Ok(SubjectiveKernel {
            kernel: self.kernel(&point)?,
            label: ParamLabel {
                id,
                point: Some(point),
            },
        })
    }
}

/// Scalar family `eps -> (1 - eps) P + eps / S`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFamily {
    base: TransitionKernel,
}

impl MixtureFamily {
    pub fn new(base: TransitionKernel) -> Self {
        Self { base }
    }
}

impl KernelFamily for MixtureFamily {
    fn dimension(&self) -> usize {
        1
    }

    fn kernel(&self, point: &[f64]) -> Result<TransitionKernel> {
        match point {
            [eps] => mixture_kernel(&self.base, *eps),
            _ => Err(Error::DimensionMismatch(format!(
                "mixture family takes one parameter, got {}",
                point.len()
            ))),
        }
    }
}
