//! Entropy-regularized planning: soft Bellman fixed point and softmax best response.

use crate::error::{Error, Result};
use crate::mdp::{Policy, SubjectiveMdp, ValueFunction};
use crate::planning::step_threshold;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftPlanConfig {
    pub temperature: f64,
    /// Sup-norm accuracy of the returned fixed point.
    pub fp_tol: f64,
    pub max_iters: usize,
}

impl Default for SoftPlanConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            fp_tol: 1e-10,
            max_iters: 1_000_000,
        }
    }
}

impl SoftPlanConfig {
    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.fp_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "fp_tol must be positive, got {}",
                self.fp_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Soft action values `r(x,a) + beta sum Q(x'|x,a) v(x')`, row-major `(x, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftQTable {
    num_states: usize,
    num_actions: usize,
    q: Vec<f64>,
}

impl SoftQTable {
    pub fn from_table(num_states: usize, num_actions: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "Q table has {} entries, expected {}",
                q.len(),
                num_states * num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            q,
        })
    }

    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.q[x * self.num_actions + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.q[x * self.num_actions..(x + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// `lambda * ln sum exp(q / lambda)`, shifted by the row maximum.
fn log_sum_exp(row: &[f64], lambda: f64) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|q| ((q - max) / lambda).exp()).sum();
    max + lambda * sum.ln()
}

pub fn soft_bellman_operator(
    view: &SubjectiveMdp<'_>,
    temperature: f64,
    v: &ValueFunction,
) -> ValueFunction {
    let m = view.num_actions();
    ValueFunction(
        view.action_values(v.as_slice())
            .chunks(m)
            .map(|row| log_sum_exp(row, temperature))
            .collect(),
    )
}

/// Iterates the soft operator from `v = 0` until the iterate is within
/// `fp_tol` of the unique fixed point.
pub fn soft_value_iteration(
    view: &SubjectiveMdp<'_>,
    cfg: &SoftPlanConfig,
) -> Result<(ValueFunction, SoftQTable)> {
    cfg.validate()?;
    let beta = view.discount();
    let mut v = ValueFunction::zeros(view.num_states());
    let mut step = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let next = soft_bellman_operator(view, cfg.temperature, &v);
        step = next.sup_distance(&v);
        let scale = next.0.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        v = next;
        if step <= step_threshold(cfg.fp_tol, beta, scale) {
            let q = SoftQTable::from_table(
                view.num_states(),
                view.num_actions(),
                view.action_values(v.as_slice()),
            )?;
            return Ok((v, q));
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iters,
        last_step: step,
    })
}

/// Row-wise softmax of `q / lambda`.
pub fn softmax_policy(q: &SoftQTable, temperature: f64) -> Policy {
    let m = q.num_actions;
    let mut probs = Vec::with_capacity(q.q.len());
    for row in q.q.chunks(m) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = row.iter().map(|v| ((v - max) / temperature).exp()).collect();
        let total: f64 = weights.iter().sum();
        probs.extend(weights.iter().map(|w| w / total));
    }
    Policy::new(q.num_states, m, probs).expect("softmax rows are normalized")
}

/// Soft fixed point, soft action values and the softmax best response.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSolution {
    pub policy: Policy,
    pub value: ValueFunction,
    pub q: SoftQTable,
}

pub fn soft_best_response(view: &SubjectiveMdp<'_>, cfg: &SoftPlanConfig) -> Result<SoftSolution> {
    let (value, q) = soft_value_iteration(view, cfg)?;
    let policy = softmax_policy(&q, cfg.temperature);
    Ok(SoftSolution { policy, value, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Mdp, TransitionKernel};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    fn one_state(num_actions: usize, reward: f64) -> Mdp {
        let kernel = TransitionKernel::from_rows(&[vec![vec![1.0]; num_actions]]).unwrap();
        Mdp::with_uniform_initial(kernel, vec![reward; num_actions], 0.5).unwrap()
    }

    #[test]
    fn singleton_action_has_no_entropy_term() {
        let mdp = one_state(1, 1.0);
        let v = ValueFunction(vec![3.0]);
        let tv = soft_bellman_operator(&mdp.objective(), 0.7, &v);
        assert_abs_diff_eq!(tv.0[0], 1.0 + 0.5 * 3.0, epsilon = 1e-15);
        let (v, _) = soft_value_iteration(&mdp.objective(), &SoftPlanConfig::default()).unwrap();
        assert_abs_diff_eq!(v.0[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn equal_backups_add_lambda_ln_two() {
        let mdp = one_state(2, 0.0);
        let tv = soft_bellman_operator(&mdp.objective(), 0.3, &ValueFunction(vec![1.0]));
        assert_abs_diff_eq!(tv.0[0], 0.5 + 0.3 * LN_2, epsilon = 1e-15);
        let cfg = SoftPlanConfig::with_temperature(0.3);
        let (v, q) = soft_value_iteration(&mdp.objective(), &cfg).unwrap();
        assert_abs_diff_eq!(v.0[0], 2.0 * 0.3 * LN_2, epsilon = 1e-10);
        assert_abs_diff_eq!(q.get(0, 0), 0.5 * v.0[0], epsilon = 1e-15);
    }

    #[test]
    fn softmax_closed_forms() {
        let q = SoftQTable::from_table(2, 2, vec![1.0, 1.0, 0.2 * 9f64.ln(), 0.0]).unwrap();
        let pi = softmax_policy(&q, 0.2);
        assert_eq!(pi.row(0), &[0.5, 0.5]);
        assert_abs_diff_eq!(pi.prob(1, 0), 0.9, epsilon = 1e-14);
        assert_abs_diff_eq!(pi.prob(1, 1), 0.1, epsilon = 1e-14);
    }

    #[test]
    fn tiny_temperature_does_not_overflow() {
        let q = SoftQTable::from_table(1, 3, vec![500.0, 499.0, -20.0]).unwrap();
        let pi = softmax_policy(&q, 1e-6);
        assert_eq!(pi.row(0), &[1.0, 0.0, 0.0]);
        let mdp = one_state(2, 1.0);
        let v = soft_bellman_operator(&mdp.objective(), 1e-6, &ValueFunction(vec![1e3]));
        assert!(v.0[0].is_finite());
    }

    #[test]
    fn rejects_bad_config_and_reports_nonconvergence() {
        let mdp = one_state(2, 1.0);
        assert!(soft_value_iteration(&mdp.objective(), &SoftPlanConfig::with_temperature(0.0)).is_err());
        let cfg = SoftPlanConfig {
            max_iters: 3,
            ..SoftPlanConfig::default()
        };
        assert!(matches!(
            soft_value_iteration(&mdp.objective(), &cfg),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }
}
