//! Seeded generators for random instances, used by tests and experiments.

use rand::Rng;

use crate::mdp::{Mdp, Policy, TransitionKernel};

/// Uniform draw from the probability simplex of dimension `n`.
pub fn simplex_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Kernel with every row drawn uniformly from the simplex (strictly positive
/// with probability one, hence irreducible under any policy).
pub fn positive_kernel(rng: &mut impl Rng, num_states: usize, num_actions: usize) -> TransitionKernel {
    let probs = (0..num_states * num_actions)
        .flat_map(|_| simplex_point(rng, num_states))
        .collect();
    TransitionKernel::new(num_states, num_actions, probs).expect("simplex rows are stochastic")
}

/// Kernel where each entry is zeroed with probability `zero_prob`, keeping
/// the transition `x -> x + 1 (mod S)` so every policy yields an irreducible chain.
pub fn sparse_kernel(
    rng: &mut impl Rng,
    num_states: usize,
    num_actions: usize,
    zero_prob: f64,
) -> TransitionKernel {
    let mut probs = Vec::with_capacity(num_states * num_actions * num_states);
    for x in 0..num_states {
        for _ in 0..num_actions {
            let mut row = simplex_point(rng, num_states);
            for (y, p) in row.iter_mut().enumerate() {
                if y != (x + 1) % num_states && rng.gen::<f64>() < zero_prob {
                    *p = 0.0;
                }
            }
            let total: f64 = row.iter().sum();
            probs.extend(row.into_iter().map(|p| p / total));
        }
    }
    TransitionKernel::new(num_states, num_actions, probs).expect("rows are renormalized")
}

/// Rewards uniform in `[0, 1)`.
pub fn rewards(rng: &mut impl Rng, num_states: usize, num_actions: usize) -> Vec<f64> {
    (0..num_states * num_actions).map(|_| rng.gen()).collect()
}

/// MDP with a positive kernel, uniform rewards and uniform initial distribution.
pub fn positive_mdp(rng: &mut impl Rng, num_states: usize, num_actions: usize, discount: f64) -> Mdp {
    let kernel = positive_kernel(rng, num_states, num_actions);
    let reward = rewards(rng, num_states, num_actions);
    Mdp::with_uniform_initial(kernel, reward, discount).expect("generated instance is valid")
}

pub fn random_policy(rng: &mut impl Rng, num_states: usize, num_actions: usize) -> Policy {
    let probs = (0..num_states)
        .flat_map(|_| simplex_point(rng, num_actions))
        .collect();
    Policy::new(num_states, num_actions, probs).expect("simplex rows are stochastic")
}
