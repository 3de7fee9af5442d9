//! Exact subjective planning: Bellman backups, value iteration, greedy best
//! responses and the value-function / occupation-measure linear programs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{simplex_solve, Constraint, Direction, LinearProgram, LpSolution, RowSense};
use crate::mdp::{
    induced_kernel, normalize_rows, sup_distance, Policy, SubjectiveMdp, ValueFunction,
};

pub const DEFAULT_VI_TOL: f64 = 1e-10;
pub const DEFAULT_ACT_TOL: f64 = 1e-8;

/// Hard-max Bellman backup `(Tv)(x) = max_a { r(x,a) + beta sum Q(x'|x,a) v(x') }`.
pub fn bellman_operator(view: &SubjectiveMdp<'_>, v: &ValueFunction) -> ValueFunction {
    let m = view.num_actions();
    let q = view.action_values(v.as_slice());
    ValueFunction(
        q.chunks(m)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    )
}

/// Stopping threshold on successive iterates that guarantees `tol` accuracy
/// for a `beta`-contraction, floored at a few ulps of the iterate scale.
pub(crate) fn step_threshold(tol: f64, beta: f64, scale: f64) -> f64 {
    (tol * (1.0 - beta) / (2.0 * beta)).max(8.0 * f64::EPSILON * scale)
}

/// Value iteration from `v = 0`; the result is within `vi_tol` of the fixed point.
pub fn value_iteration(view: &SubjectiveMdp<'_>, vi_tol: f64) -> ValueFunction {
    let beta = view.discount();
    let mut v = ValueFunction::zeros(view.num_states());
    loop {
        let next = bellman_operator(view, &v);
        let step = next.sup_distance(&v);
        let scale = next.0.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        v = next;
        if step <= step_threshold(vi_tol, beta, scale) {
            return v;
        }
    }
}

/// Actions whose backup is within `act_tol` of the per-state maximum.
pub fn greedy_sets(view: &SubjectiveMdp<'_>, v: &ValueFunction, act_tol: f64) -> Vec<Vec<usize>> {
    let m = view.num_actions();
    view.action_values(v.as_slice())
        .chunks(m)
        .map(|row| {
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..m).filter(|&a| row[a] >= best - act_tol).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Deterministic choice of the lowest tied action index.
    #[default]
    LowestIndex,
    /// Even split across the tied set.
    Uniform,
}

/// Builds a policy supported on the given greedy sets.
pub fn policy_from_greedy_sets(sets: &[Vec<usize>], num_actions: usize, rule: TieRule) -> Policy {
    let mut probs = vec![0.0; sets.len() * num_actions];
    for (x, set) in sets.iter().enumerate() {
        match rule {
            TieRule::LowestIndex => probs[x * num_actions + set[0]] = 1.0,
            TieRule::Uniform => {
                let w = 1.0 / set.len() as f64;
                for &a in set {
                    probs[x * num_actions + a] = w;
                }
            }
        }
    }
    Policy::new(sets.len(), num_actions, probs).expect("greedy sets are nonempty")
}

/// Best response under the view's kernel, with default tolerances.
pub fn best_response_policy(view: &SubjectiveMdp<'_>, rule: TieRule) -> Policy {
    let v = value_iteration(view, DEFAULT_VI_TOL);
    let sets = greedy_sets(view, &v, DEFAULT_ACT_TOL);
    policy_from_greedy_sets(&sets, view.num_actions(), rule)
}

/// `min sum_x v(x)  s.t.  v(x) - beta sum_x' Q(x'|x,a) v(x') >= r(x,a)`, `v` free.
pub fn build_primal_lp(view: &SubjectiveMdp<'_>) -> LinearProgram {
    let (s, m) = (view.num_states(), view.num_actions());
    let beta = view.discount();
    let mut constraints = Vec::with_capacity(s * m);
    for x in 0..s {
        for a in 0..m {
            let mut coeffs: Vec<f64> = view.kernel.row(x, a).iter().map(|p| -beta * p).collect();
            coeffs[x] += 1.0;
            constraints.push(Constraint {
                coeffs,
                sense: RowSense::Ge,
                rhs: view.mdp.reward(x, a),
            });
        }
    }
    LinearProgram {
        direction: Direction::Minimize,
        objective: vec![1.0; s],
        constraints,
        lower_bounds: vec![None; s],
    }
}

/// `max sum r eta  s.t.  sum_a eta(x,a) - beta sum Q(x|x',a') eta(x',a') = mu0(x)`, `eta >= 0`.
///
/// Variables are ordered row-major `(x, a)`.
pub fn build_dual_lp(view: &SubjectiveMdp<'_>) -> LinearProgram {
    let (s, m) = (view.num_states(), view.num_actions());
    let beta = view.discount();
    let constraints = (0..s)
        .map(|x| {
            let mut coeffs = vec![0.0; s * m];
            for from in 0..s {
                for a in 0..m {
                    coeffs[from * m + a] -= beta * view.kernel.prob(from, a, x);
                }
            }
            for a in 0..m {
                coeffs[x * m + a] += 1.0;
            }
            Constraint {
                coeffs,
                sense: RowSense::Eq,
                rhs: view.mdp.initial()[x],
            }
        })
        .collect();
    LinearProgram {
        direction: Direction::Maximize,
        objective: view.mdp.rewards().to_vec(),
        constraints,
        lower_bounds: vec![Some(0.0); s * m],
    }
}

/// Discounted occupation measure `eta(x, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    num_states: usize,
    num_actions: usize,
    eta: Vec<f64>,
}

impl OccupationMeasure {
    pub fn from_table(num_states: usize, num_actions: usize, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "occupation table has {} entries, expected {}",
                eta.len(),
                num_states * num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            eta,
        })
    }

    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.eta[x * self.num_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eta
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn state_marginal(&self, x: usize) -> f64 {
        self.eta[x * self.num_actions..(x + 1) * self.num_actions]
            .iter()
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.eta.iter().sum()
    }

    /// Largest violation of the discounted flow equations under the view's kernel.
    pub fn flow_residual(&self, view: &SubjectiveMdp<'_>) -> f64 {
        let (s, m) = (self.num_states, self.num_actions);
        let beta = view.discount();
        (0..s)
            .map(|x| {
                let inflow: f64 = (0..s)
                    .flat_map(|from| (0..m).map(move |a| (from, a)))
                    .map(|(from, a)| view.kernel.prob(from, a, x) * self.get(from, a))
                    .sum();
                (self.state_marginal(x) - view.mdp.initial()[x] - beta * inflow).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn expected_reward(&self, view: &SubjectiveMdp<'_>) -> f64 {
        self.eta
            .iter()
            .zip(view.mdp.rewards())
            .map(|(e, r)| e * r)
            .sum()
    }
}

/// `pi(a|x) = eta(x,a) / sum_b eta(x,b)`; zero-marginal states use `fallback`
/// (uniform when `None`).
pub fn policy_from_occupation(eta: &OccupationMeasure, fallback: Option<&Policy>) -> Result<Policy> {
    let (s, m) = (eta.num_states, eta.num_actions);
    for x in 0..s {
        for a in 0..m {
            let v = eta.get(x, a);
            if v < -1e-12 {
                return Err(Error::NegativeOccupation {
                    state: x,
                    action: a,
                    value: v,
                });
            }
        }
    }
    let uniform = Policy::uniform(s, m);
    let fallback = fallback.unwrap_or(&uniform);
    if fallback.num_states() != s || fallback.num_actions() != m {
        return Err(Error::DimensionMismatch("fallback policy shape".into()));
    }
    normalize_rows(s, m, eta.as_slice(), fallback)
}

/// Occupation measure of `pi` under the view's kernel: solves
/// `h = mu0 + beta Q_pi^T h` and sets `eta(x, a) = pi(a|x) h(x)`.
pub fn occupation_of_policy(view: &SubjectiveMdp<'_>, pi: &Policy) -> Result<OccupationMeasure> {
    let (s, m) = (view.num_states(), view.num_actions());
    let chain = induced_kernel(view.kernel, pi)?;
    let system = DMatrix::identity(s, s) - chain.transpose() * view.discount();
    let h = system
        .lu()
        .solve(&DVector::from_column_slice(view.mdp.initial()))
        .ok_or_else(|| Error::SingularSystem("occupation balance".into()))?;
    let eta = (0..s)
        .flat_map(|x| (0..m).map(move |a| (x, a)))
        .map(|(x, a)| pi.prob(x, a) * h[x])
        .collect();
    OccupationMeasure::from_table(s, m, eta)
}

/// Solves the value-function LP; the solution is the optimal value vector.
pub fn solve_primal(view: &SubjectiveMdp<'_>) -> Result<(ValueFunction, LpSolution)> {
    let sol = simplex_solve(&build_primal_lp(view))?;
    Ok((ValueFunction(sol.x.clone()), sol))
}

/// Solves the occupation-measure LP.
pub fn solve_dual(view: &SubjectiveMdp<'_>) -> Result<(OccupationMeasure, LpSolution)> {
    let sol = simplex_solve(&build_dual_lp(view))?;
    let eta = OccupationMeasure::from_table(view.num_states(), view.num_actions(), sol.x.clone())?;
    Ok((eta, sol))
}

/// Per-row slack of the primal constraints at `v`, row-major `(x, a)`.
pub fn primal_slacks(view: &SubjectiveMdp<'_>, v: &ValueFunction) -> Vec<f64> {
    let q = view.action_values(v.as_slice());
    let m = view.num_actions();
    q.iter()
        .enumerate()
        .map(|(i, qa)| v.0[i / m] - qa)
        .collect()
}

/// Largest `|(T v)(x) - v(x)|`.
pub fn bellman_residual(view: &SubjectiveMdp<'_>, v: &ValueFunction) -> f64 {
    sup_distance(&bellman_operator(view, v).0, &v.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Mdp, TransitionKernel};
    use approx::assert_abs_diff_eq;

    fn scalar(beta: f64) -> Mdp {
        let kernel = TransitionKernel::from_rows(&[vec![vec![1.0]]]).unwrap();
        Mdp::with_uniform_initial(kernel, vec![1.0], beta).unwrap()
    }

    fn tied() -> Mdp {
        // Both actions identical in every state.
        let kernel = TransitionKernel::from_rows(&[
            vec![vec![0.4, 0.6], vec![0.4, 0.6]],
            vec![vec![0.7, 0.3], vec![0.7, 0.3]],
        ])
        .unwrap();
        Mdp::with_uniform_initial(kernel, vec![1.0, 1.0, 0.0, 0.0], 0.9).unwrap()
    }

    #[test]
    fn single_action_backup_is_affine() {
        let kernel = TransitionKernel::from_rows(&[vec![vec![0.3, 0.7]], vec![vec![0.6, 0.4]]]).unwrap();
        let mdp = Mdp::with_uniform_initial(kernel, vec![1.0, -1.0], 0.5).unwrap();
        let v = ValueFunction(vec![2.0, 4.0]);
        let tv = bellman_operator(&mdp.objective(), &v);
        assert_abs_diff_eq!(tv.0[0], 1.0 + 0.5 * (0.6 + 2.8), epsilon = 1e-15);
        assert_abs_diff_eq!(tv.0[1], -1.0 + 0.5 * (1.2 + 1.6), epsilon = 1e-15);
    }

    #[test]
    fn zero_continuation_backup_is_max_reward() {
        let mdp = tied();
        let tv = bellman_operator(&mdp.objective(), &ValueFunction::zeros(2));
        assert_eq!(tv.0, vec![1.0, 0.0]);
    }

    #[test]
    fn value_iteration_scalar_and_constant() {
        let v = value_iteration(&scalar(0.5).objective(), 1e-12);
        assert_abs_diff_eq!(v.0[0], 2.0, epsilon = 1e-12);
        let kernel = TransitionKernel::from_rows(&[
            vec![vec![0.4, 0.6], vec![0.1, 0.9]],
            vec![vec![0.7, 0.3], vec![0.5, 0.5]],
        ])
        .unwrap();
        let mdp = Mdp::with_uniform_initial(kernel, vec![3.0; 4], 0.9).unwrap();
        let v = value_iteration(&mdp.objective(), 1e-10);
        for x in 0..2 {
            assert_abs_diff_eq!(v.0[x], 30.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn greedy_sets_and_tie_rules() {
        let mdp = tied();
        let view = mdp.objective();
        let v = value_iteration(&view, 1e-12);
        let sets = greedy_sets(&view, &v, DEFAULT_ACT_TOL);
        assert_eq!(sets, vec![vec![0, 1], vec![0, 1]]);
        let low = best_response_policy(&view, TieRule::LowestIndex);
        assert_eq!(low.row(0), &[1.0, 0.0]);
        let even = best_response_policy(&view, TieRule::Uniform);
        assert_eq!(even.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn dominant_action_is_chosen() {
        let kernel = TransitionKernel::from_rows(&[vec![vec![1.0], vec![1.0]]]).unwrap();
        let mdp = Mdp::with_uniform_initial(kernel, vec![0.0, 1.0], 0.9).unwrap();
        let pi = best_response_policy(&mdp.objective(), TieRule::LowestIndex);
        assert_eq!(pi.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn lp_dimensions() {
        let mdp = scalar(0.5);
        let primal = build_primal_lp(&mdp.objective());
        assert_eq!(primal.num_vars(), 1);
        assert_eq!(primal.constraints.len(), 1);
        assert_abs_diff_eq!(primal.constraints[0].coeffs[0], 0.5, epsilon = 1e-15);
        assert_eq!(primal.constraints[0].rhs, 1.0);

        let mdp = tied();
        let primal = build_primal_lp(&mdp.objective());
        assert_eq!((primal.num_vars(), primal.constraints.len()), (2, 4));
        let dual = build_dual_lp(&mdp.objective());
        assert_eq!((dual.num_vars(), dual.constraints.len()), (4, 2));
    }

    #[test]
    fn scalar_dual_has_unique_point() {
        let mdp = scalar(0.75);
        let (eta, sol) = solve_dual(&mdp.objective()).unwrap();
        assert_abs_diff_eq!(eta.get(0, 0), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.objective, 4.0, epsilon = 1e-12);
        let h = occupation_of_policy(&mdp.objective(), &Policy::uniform(1, 1)).unwrap();
        assert_abs_diff_eq!(h.get(0, 0), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn myopic_dual_puts_mass_on_best_reward() {
        let kernel = TransitionKernel::from_rows(&[
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        ])
        .unwrap();
        let mdp = Mdp::new(kernel, vec![1.0, 2.0, 3.0, 0.5], 1e-12, vec![0.25, 0.75]).unwrap();
        let (eta, _) = solve_dual(&mdp.objective()).unwrap();
        assert_abs_diff_eq!(eta.get(0, 1), 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(eta.get(1, 0), 0.75, epsilon = 1e-9);
        assert_abs_diff_eq!(eta.get(0, 0) + eta.get(1, 1), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn policy_from_occupation_examples() {
        let eta = OccupationMeasure::from_table(2, 2, vec![0.3, 0.1, 0.0, 0.0]).unwrap();
        let pi = policy_from_occupation(&eta, None).unwrap();
        assert_abs_diff_eq!(pi.prob(0, 0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.prob(0, 1), 0.25, epsilon = 1e-15);
        assert_eq!(pi.row(1), &[0.5, 0.5]);
        let bad = OccupationMeasure::from_table(1, 2, vec![1.0, -1e-6]).unwrap();
        assert!(matches!(
            policy_from_occupation(&bad, None),
            Err(Error::NegativeOccupation { state: 0, action: 1, .. })
        ));
    }

    #[test]
    fn myopic_occupation_is_one_step_mass() {
        let mdp = tied().with_discount(1e-12).unwrap();
        let pi = Policy::new(2, 2, vec![0.2, 0.8, 1.0, 0.0]).unwrap();
        let eta = occupation_of_policy(&mdp.objective(), &pi).unwrap();
        assert_abs_diff_eq!(eta.get(0, 1), 0.5 * 0.8, epsilon = 1e-10);
        assert_abs_diff_eq!(eta.get(1, 0), 0.5, epsilon = 1e-10);
    }
}
