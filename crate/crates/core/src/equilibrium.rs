//! Berk-Nash machinery for finite conjecture sets.
//!
//! A candidate `(k, eta, d, pi)` is checked against the joint feasibility
//! system: subjective discounted flow under model `k`, true stationary
//! state-action frequencies, policy consistency between the two, and
//! KL-minimality of `k` under `d`. Equilibria are found by enumerating every
//! model, computing its (hard or soft) best response, and keeping the models
//! that are KL-minimal under their own best response's stationary data.

use std::fmt;

use crate::error::{Error, Result};
use crate::mdp::{state_action_frequencies, Mdp, Policy, StateActionFrequency};
use crate::models::{kl_cost_table, long_run_divergence, ConjectureSet, KlCostTable};
use crate::planning::{
    best_response_policy, greedy_sets, occupation_of_policy, value_iteration, OccupationMeasure,
    TieRule, DEFAULT_ACT_TOL,
};
use crate::soft::{soft_best_response, SoftPlanConfig};

pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-7;

/// Ties in `entropy_bn_select` are resolved to the lowest index within this band.
pub const SELECT_TIE_TOL: f64 = 1e-9;

/// Marginals at or below this are treated as zero in policy-consistency checks.
const MARGINAL_EPS: f64 = 1e-12;

/// An instance, a finite conjecture set and the KL cost table of every member.
#[derive(Debug, Clone)]
pub struct EquilibriumProblem<'a> {
    mdp: &'a Mdp,
    cs: &'a ConjectureSet,
    costs: Vec<KlCostTable>,
}

impl<'a> EquilibriumProblem<'a> {
    pub fn new(mdp: &'a Mdp, cs: &'a ConjectureSet) -> Result<Self> {
        let costs = cs
            .members()
            .iter()
            .map(|m| kl_cost_table(mdp, &m.kernel))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mdp, cs, costs })
    }

    pub fn mdp(&self) -> &'a Mdp {
        self.mdp
    }

    pub fn conjectures(&self) -> &'a ConjectureSet {
        self.cs
    }

    pub fn costs(&self) -> &[KlCostTable] {
        &self.costs
    }

    /// `(D_l(d))_l` for every model.
    pub fn divergences(&self, d: &StateActionFrequency) -> Vec<f64> {
        self.costs.iter().map(|c| long_run_divergence(d, c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanningMode {
    Hard,
    Soft(SoftPlanConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCandidate {
    pub model: usize,
    pub eta: OccupationMeasure,
    pub d: StateActionFrequency,
    pub policy: Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionGroup {
    /// (i) discounted flow of `eta` under the model kernel.
    SubjectiveFlow,
    /// (ii) normalization and stationary flow of `d` under the true kernel.
    TrueFrequencies,
    /// (iii) `pi` agrees with the row-normalized `eta` and `d`.
    PolicyConsistency,
    /// (iv) the model minimizes the long-run divergence under `d`.
    KlArgmin,
    /// `pi` is a best response for the model (hard or soft).
    SubjectiveOptimality,
}

impl fmt::Display for ConditionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionGroup::SubjectiveFlow => "subjective-flow",
            ConditionGroup::TrueFrequencies => "true-frequencies",
            ConditionGroup::PolicyConsistency => "policy-consistency",
            ConditionGroup::KlArgmin => "kl-argmin",
            ConditionGroup::SubjectiveOptimality => "subjective-optimality",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityCheck {
    pub tol: f64,
    /// When set, also require `pi` to be a best response in this mode.
    pub optimality: Option<PlanningMode>,
}

impl Default for FeasibilityCheck {
    fn default() -> Self {
        Self {
            tol: DEFAULT_FEASIBILITY_TOL,
            optimality: None,
        }
    }
}

/// Max residual per condition group.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub subjective_flow: f64,
    pub true_frequencies: f64,
    pub policy_consistency: f64,
    pub kl_argmin: f64,
    pub subjective_optimality: Option<f64>,
    pub tol: f64,
}

impl FeasibilityReport {
    pub fn residuals(&self) -> Vec<(ConditionGroup, f64)> {
        let mut out = vec![
            (ConditionGroup::SubjectiveFlow, self.subjective_flow),
            (ConditionGroup::TrueFrequencies, self.true_frequencies),
            (ConditionGroup::PolicyConsistency, self.policy_consistency),
            (ConditionGroup::KlArgmin, self.kl_argmin),
        ];
        if let Some(r) = self.subjective_optimality {
            out.push((ConditionGroup::SubjectiveOptimality, r));
        }
        out
    }

    pub fn failing(&self) -> Vec<ConditionGroup> {
        self.residuals()
            .into_iter()
            .filter(|(_, r)| !(*r <= self.tol))
            .map(|(g, _)| g)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failing().is_empty()
    }
}

fn consistency_residual(table: &[f64], pi: &Policy) -> f64 {
    let m = pi.num_actions();
    let mut worst = 0.0f64;
    for x in 0..pi.num_states() {
        let row = &table[x * m..(x + 1) * m];
        let mass: f64 = row.iter().sum();
        if mass > MARGINAL_EPS {
            for a in 0..m {
                worst = worst.max((pi.prob(x, a) - row[a] / mass).abs());
            }
        }
    }
    worst
}

/// Evaluates every condition group of the joint system for `cand`.
///
/// Failures are reported through the residuals; only shape mismatches error.
pub fn check_joint_feasibility(
    problem: &EquilibriumProblem<'_>,
    cand: &JointCandidate,
    check: &FeasibilityCheck,
) -> Result<FeasibilityReport> {
    let mdp = problem.mdp;
    let (s, m) = (mdp.num_states(), mdp.num_actions());
    if cand.model >= problem.cs.len() {
        return Err(Error::DimensionMismatch(format!(
            "model index {} out of range",
            cand.model
        )));
    }
    let shapes = [
        (cand.eta.num_states(), cand.eta.num_actions()),
        (cand.d.num_states(), cand.d.num_actions()),
        (cand.policy.num_states(), cand.policy.num_actions()),
    ];
    if shapes.iter().any(|&shape| shape != (s, m)) {
        return Err(Error::DimensionMismatch("candidate shape".into()));
    }
    let view = mdp.subjective(problem.cs.kernel(cand.model))?;

    let negative = |table: &[f64]| table.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);

    let subjective_flow = cand.eta.flow_residual(&view).max(negative(cand.eta.as_slice()));

    let total: f64 = cand.d.as_slice().iter().sum();
    let true_frequencies = (total - 1.0)
        .abs()
        .max(cand.d.flow_residual(mdp.kernel()))
        .max(negative(cand.d.as_slice()));

    let policy_consistency = consistency_residual(cand.eta.as_slice(), &cand.policy)
        .max(consistency_residual(cand.d.as_slice(), &cand.policy));

    let divergences = problem.divergences(&cand.d);
    let best = divergences.iter().copied().fold(f64::INFINITY, f64::min);
    let kl_argmin = divergences[cand.model] - best;

    let subjective_optimality = match check.optimality {
        None => None,
        Some(PlanningMode::Hard) => {
            let v = value_iteration(&view, 1e-11);
            let value: f64 = mdp.initial().iter().zip(&v.0).map(|(p, v)| p * v).sum();
            Some((cand.eta.expected_reward(&view) - value).abs())
        }
        Some(PlanningMode::Soft(cfg)) => {
            let soft = soft_best_response(&view, &cfg)?;
            let mut worst = 0.0f64;
            for x in 0..s {
                if cand.eta.state_marginal(x) > MARGINAL_EPS {
                    for a in 0..m {
                        worst = worst.max((cand.policy.prob(x, a) - soft.policy.prob(x, a)).abs());
                    }
                }
            }
            Some(worst)
        }
    };

    Ok(FeasibilityReport {
        subjective_flow,
        true_frequencies,
        policy_consistency,
        kl_argmin,
        subjective_optimality,
        tol: check.tol,
    })
}

/// Assembles the canonical candidate for model `k` playing `policy`.
pub fn build_candidate(
    problem: &EquilibriumProblem<'_>,
    model: usize,
    policy: &Policy,
) -> Result<JointCandidate> {
    let view = problem.mdp.subjective(problem.cs.kernel(model))?;
    Ok(JointCandidate {
        model,
        eta: occupation_of_policy(&view, policy)?,
        d: state_action_frequencies(problem.mdp, policy)?,
        policy: policy.clone(),
    })
}

/// How a candidate policy was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Hard(TieRule),
    Softmax,
}

impl fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResponseKind::Hard(TieRule::LowestIndex) => "lowest-index",
            ResponseKind::Hard(TieRule::Uniform) => "uniform-ties",
            ResponseKind::Softmax => "softmax",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub model: usize,
    pub response: ResponseKind,
    pub policy: Policy,
    pub divergence: f64,
    pub divergences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDiagnostic {
    pub model: usize,
    pub response: ResponseKind,
    pub accepted: bool,
    pub divergences: Option<Vec<f64>>,
    pub feasibility: Option<FeasibilityReport>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub equilibria: Vec<Equilibrium>,
    pub diagnostics: Vec<CandidateDiagnostic>,
}

impl EquilibriumReport {
    pub fn models(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.equilibria.iter().map(|e| e.model).collect();
        ks.dedup();
        ks
    }
}

fn candidate_policies(
    problem: &EquilibriumProblem<'_>,
    model: usize,
    mode: &PlanningMode,
) -> Result<(Vec<(ResponseKind, Policy)>, Option<String>)> {
    let view = problem.mdp.subjective(problem.cs.kernel(model))?;
    match mode {
        PlanningMode::Soft(cfg) => {
            let soft = soft_best_response(&view, cfg)?;
            Ok((vec![(ResponseKind::Softmax, soft.policy)], None))
        }
        PlanningMode::Hard => {
            let v = value_iteration(&view, 1e-11);
            let tied = greedy_sets(&view, &v, DEFAULT_ACT_TOL)
                .iter()
                .any(|set| set.len() > 1);
            let low = best_response_policy(&view, TieRule::LowestIndex);
            let mut out = vec![(ResponseKind::Hard(TieRule::LowestIndex), low.clone())];
            let note = if tied {
                out.push((
                    ResponseKind::Hard(TieRule::Uniform),
                    best_response_policy(&view, TieRule::Uniform),
                ));
                Some("tied best response; interior randomizations not enumerated".to_string())
            } else {
                None
            };
            Ok((out, note))
        }
    }
}

/// Enumerates equilibria over the finite conjecture set.
///
/// Every accepted candidate is re-verified against the joint system
/// (including subjective optimality in `mode`) before it is listed.
pub fn enumerate_equilibria(
    problem: &EquilibriumProblem<'_>,
    mode: PlanningMode,
    tol: f64,
) -> Result<EquilibriumReport> {
    let mut equilibria = Vec::new();
    let mut diagnostics = Vec::new();
    let check = FeasibilityCheck {
        tol,
        optimality: Some(mode),
    };
    for model in 0..problem.cs.len() {
        let (policies, note) = candidate_policies(problem, model, &mode)?;
        for (response, policy) in policies {
            let d = match state_action_frequencies(problem.mdp, &policy) {
                Ok(d) => d,
                Err(e @ Error::ReducibleChain { .. }) => {
                    diagnostics.push(CandidateDiagnostic {
                        model,
                        response,
                        accepted: false,
                        divergences: None,
                        feasibility: None,
                        note: Some(format!("skipped: {e}")),
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let divergences = problem.divergences(&d);
            let best = divergences.iter().copied().fold(f64::INFINITY, f64::min);
            let minimal = divergences[model] <= best + tol;
            let (accepted, feasibility) = if minimal {
                let cand = build_candidate(problem, model, &policy)?;
                let report = check_joint_feasibility(problem, &cand, &check)?;
                (report.passed(), Some(report))
            } else {
                (false, None)
            };
            if accepted {
                equilibria.push(Equilibrium {
                    model,
                    response,
                    policy: policy.clone(),
                    divergence: divergences[model],
                    divergences: divergences.clone(),
                });
            }
            diagnostics.push(CandidateDiagnostic {
                model,
                response,
                accepted,
                divergences: Some(divergences),
                feasibility,
                note: note.clone(),
            });
        }
    }
    Ok(EquilibriumReport {
        equilibria,
        diagnostics,
    })
}

/// `J(k) = D_k(d(pi_k))` where `pi_k` is the softmax best response under model `k`.
pub fn bilevel_objective(
    problem: &EquilibriumProblem<'_>,
    model: usize,
    cfg: &SoftPlanConfig,
) -> Result<f64> {
    let view = problem.mdp.subjective(problem.cs.kernel(model))?;
    let soft = soft_best_response(&view, cfg)?;
    let d = state_action_frequencies(problem.mdp, &soft.policy)?;
    Ok(long_run_divergence(&d, &problem.costs[model]))
}

/// Minimizer of the entropy-regularized objective over the conjecture set,
/// with the full objective vector.
pub fn entropy_bn_select(
    problem: &EquilibriumProblem<'_>,
    cfg: &SoftPlanConfig,
) -> Result<(usize, Vec<f64>)> {
    let objective = (0..problem.cs.len())
        .map(|k| bilevel_objective(problem, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    let best = objective.iter().copied().fold(f64::INFINITY, f64::min);
    let index = objective
        .iter()
        .position(|v| *v <= best + SELECT_TIE_TOL)
        .expect("nonempty conjecture set");
    Ok((index, objective))
}

/// Outcome of the unregularized bilevel program solved by enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct BilevelSolution {
    pub model: usize,
    pub response: ResponseKind,
    pub policy: Policy,
    pub divergence: f64,
    /// Whether the minimizer is also KL-minimal under its own stationary data.
    pub is_equilibrium: bool,
}

/// Minimizes `D(theta | pi)` over models and their deterministic best responses.
/// Responses inducing a reducible chain are skipped.
pub fn bilevel_select(problem: &EquilibriumProblem<'_>, tol: f64) -> Result<BilevelSolution> {
    let mut best: Option<BilevelSolution> = None;
    for model in 0..problem.cs.len() {
        let (policies, _) = candidate_policies(problem, model, &PlanningMode::Hard)?;
        for (response, policy) in policies {
            let d = match state_action_frequencies(problem.mdp, &policy) {
                Ok(d) => d,
                Err(Error::ReducibleChain { .. }) => continue,
                Err(e) => return Err(e),
            };
            let divergences = problem.divergences(&d);
            let own = divergences[model];
            let floor = divergences.iter().copied().fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| own < b.divergence - tol) {
                best = Some(BilevelSolution {
                    model,
                    response,
                    policy,
                    divergence: own,
                    is_equilibrium: own <= floor + tol,
                });
            }
        }
    }
    best.ok_or_else(|| {
        Error::InvalidConfig("no best response induces an irreducible chain".into())
    })
}
