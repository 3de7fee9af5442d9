//! Finite discounted MDPs, stationary policies, induced chains and policy values.
//!
//! All tables are dense and row-major: kernels are indexed `(x, a, x')`,
//! rewards and state-action tables `(x, a)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance on row sums of kernels, policies and distributions.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Entries at or below this magnitude are structural zeros in the support graph.
pub const SUPPORT_EPS: f64 = 1e-15;

/// A state-action transition kernel `K(x' | x, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::DimensionMismatch(
                "kernel needs at least one state and one action".into(),
            ));
        }
        if probs.len() != num_states * num_actions * num_states {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} entries, expected {}",
                probs.len(),
                num_states * num_actions * num_states
            )));
        }
        let kernel = Self {
            num_states,
            num_actions,
            probs,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    /// Builds a kernel from nested `[x][a][x']` rows.
    pub fn from_rows(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(num_states * num_actions * num_states);
        for (x, per_action) in rows.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(Error::DimensionMismatch(format!(
                    "state {x} has {} action rows, expected {num_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::DimensionMismatch(format!(
                        "row ({x}, {a}) has {} entries, expected {num_states}",
                        row.len()
                    )));
                }
                probs.extend_from_slice(row);
            }
        }
        Self::new(num_states, num_actions, probs)
    }

    /// Checks nonnegativity and row sums of every `(x, a)` row.
    pub fn validate(&self) -> Result<()> {
        for x in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(x, a);
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::InvalidProbability {
                            state: x,
                            action: a,
                            next,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::RowNotStochastic {
                        state: x,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    pub fn prob(&self, x: usize, a: usize, next: usize) -> f64 {
        self.row(x, a)[next]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Nested `[x][a][x']` copy, the layout used by config files.
    pub fn to_rows(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_states)
            .map(|x| {
                (0..self.num_actions)
                    .map(|a| self.row(x, a).to_vec())
                    .collect()
            })
            .collect()
    }

    fn same_shape(&self, other: &TransitionKernel) -> bool {
        self.num_states == other.num_states && self.num_actions == other.num_actions
    }
}

/// A stationary randomized policy `pi(a | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        for x in 0..num_states {
            let row = &probs[x * num_actions..(x + 1) * num_actions];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL
            {
                return Err(Error::InvalidPolicy { state: x });
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Deterministic policy choosing `actions[x]` in state `x`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (x, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::DimensionMismatch(format!(
                    "action {a} out of range for state {x}"
                )));
            }
            probs[x * num_actions + a] = 1.0;
        }
        Ok(Self {
            num_states: actions.len(),
            num_actions,
            probs,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.num_actions..(x + 1) * self.num_actions]
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.num_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Largest per-state total variation distance to `other`.
    pub fn max_total_variation(&self, other: &Policy) -> f64 {
        (0..self.num_states)
            .map(|x| {
                0.5 * self
                    .row(x)
                    .iter()
                    .zip(other.row(x))
                    .map(|(p, q)| (p - q).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn check_shape(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.num_states != num_states || self.num_actions != num_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, instance is {num_states}x{num_actions}",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }
}

/// A value function over states.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn zeros(num_states: usize) -> Self {
        Self(vec![0.0; num_states])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        sup_distance(&self.0, &other.0)
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A finite discounted MDP with its true kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    kernel: TransitionKernel,
    reward: Vec<f64>,
    discount: f64,
    initial: Vec<f64>,
}

impl Mdp {
    /// `reward` is row-major `(x, a)`.
    pub fn new(
        kernel: TransitionKernel,
        reward: Vec<f64>,
        discount: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self {
            kernel,
            reward,
            discount,
            initial,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Same as [`Mdp::new`] with a uniform initial distribution.
    pub fn with_uniform_initial(
        kernel: TransitionKernel,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let s = kernel.num_states();
        Self::new(kernel, reward, discount, vec![1.0 / s as f64; s])
    }

    /// Returns normally iff every instance invariant holds.
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let (s, m) = (self.num_states(), self.num_actions());
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::DiscountOutOfRange(self.discount));
        }
        if self.reward.len() != s * m {
            return Err(Error::DimensionMismatch(format!(
                "reward has {} entries, expected {}",
                self.reward.len(),
                s * m
            )));
        }
        if let Some(i) = self.reward.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFiniteReward {
                state: i / m,
                action: i % m,
            });
        }
        if self.initial.len() != s {
            return Err(Error::InvalidInitialDistribution(format!(
                "{} entries, expected {s}",
                self.initial.len()
            )));
        }
        if let Some(x) = self.initial.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInitialDistribution(format!(
                "entry {x} is {}",
                self.initial[x]
            )));
        }
        let total: f64 = self.initial.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidInitialDistribution(format!(
                "sums to {total}"
            )));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.kernel.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.kernel.num_actions()
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.reward[x * self.num_actions() + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Copy of this instance with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.kernel.clone(),
            self.reward.clone(),
            discount,
            self.initial.clone(),
        )
    }

    /// The decision problem as seen through `kernel` instead of the true one.
    pub fn subjective<'a>(&'a self, kernel: &'a TransitionKernel) -> Result<SubjectiveMdp<'a>> {
        if !self.kernel.same_shape(kernel) {
            return Err(Error::DimensionMismatch(format!(
                "subjective kernel is {}x{}, instance is {}x{}",
                kernel.num_states(),
                kernel.num_actions(),
                self.num_states(),
                self.num_actions()
            )));
        }
        Ok(SubjectiveMdp { mdp: self, kernel })
    }

    /// The decision problem under the true kernel.
    pub fn objective(&self) -> SubjectiveMdp<'_> {
        SubjectiveMdp {
            mdp: self,
            kernel: &self.kernel,
        }
    }
}

/// An MDP paired with the kernel the agent plans with.
#[derive(Debug, Clone, Copy)]
pub struct SubjectiveMdp<'a> {
    pub mdp: &'a Mdp,
    pub kernel: &'a TransitionKernel,
}

impl SubjectiveMdp<'_> {
    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    pub fn discount(&self) -> f64 {
        self.mdp.discount()
    }

    /// One-step backups `r(x, a) + beta * sum_x' K(x' | x, a) v(x')`, row-major `(x, a)`.
    pub fn action_values(&self, v: &[f64]) -> Vec<f64> {
        let (s, m) = (self.num_states(), self.num_actions());
        let beta = self.discount();
        let mut q = Vec::with_capacity(s * m);
        for x in 0..s {
            for a in 0..m {
                let cont: f64 = self.kernel.row(x, a).iter().zip(v).map(|(p, w)| p * w).sum();
                q.push(self.mdp.reward(x, a) + beta * cont);
            }
        }
        q
    }
}

/// A stationary distribution of a state-to-state chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution(pub Vec<f64>);

impl StationaryDistribution {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `|| mu^T P - mu^T ||_1`.
    pub fn residual(&self, chain: &DMatrix<f64>) -> f64 {
        let n = self.0.len();
        (0..n)
            .map(|j| {
                let flow: f64 = (0..n).map(|i| self.0[i] * chain[(i, j)]).sum();
                (flow - self.0[j]).abs()
            })
            .sum()
    }
}

/// Stationary state-action frequencies `d(x, a) = mu(x) pi(a | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionFrequency {
    num_states: usize,
    num_actions: usize,
    d: Vec<f64>,
}

impl StateActionFrequency {
    /// Wraps a raw table without checking the flow equations.
    pub fn from_table(num_states: usize, num_actions: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "frequency table has {} entries, expected {}",
                d.len(),
                num_states * num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            d,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.d[x * self.num_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    pub fn state_marginal(&self, x: usize) -> f64 {
        self.d[x * self.num_actions..(x + 1) * self.num_actions]
            .iter()
            .sum()
    }

    /// Largest violation of `sum_a d(x', a) = sum_{x,a} d(x, a) P(x' | x, a)`.
    pub fn flow_residual(&self, kernel: &TransitionKernel) -> f64 {
        let (s, m) = (self.num_states, self.num_actions);
        (0..s)
            .map(|next| {
                let inflow: f64 = (0..s)
                    .flat_map(|x| (0..m).map(move |a| (x, a)))
                    .map(|(x, a)| self.get(x, a) * kernel.prob(x, a, next))
                    .sum();
                (self.state_marginal(next) - inflow).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Row-normalizes `d`; states with zero marginal take the `fallback` row.
    pub fn to_policy(&self, fallback: &Policy) -> Result<Policy> {
        fallback.check_shape(self.num_states, self.num_actions)?;
        normalize_rows(self.num_states, self.num_actions, &self.d, fallback)
    }
}

pub(crate) fn normalize_rows(
    num_states: usize,
    num_actions: usize,
    table: &[f64],
    fallback: &Policy,
) -> Result<Policy> {
    let mut probs = Vec::with_capacity(table.len());
    for x in 0..num_states {
        let row = &table[x * num_actions..(x + 1) * num_actions];
        let mass: f64 = row.iter().map(|v| v.max(0.0)).sum();
        if mass > 0.0 {
            probs.extend(row.iter().map(|v| v.max(0.0) / mass));
        } else {
            probs.extend_from_slice(fallback.row(x));
        }
    }
    Policy::new(num_states, num_actions, probs)
}

/// State-to-state kernel `P_pi(x' | x) = sum_a pi(a | x) P(x' | x, a)`.
pub fn induced_kernel(kernel: &TransitionKernel, pi: &Policy) -> Result<DMatrix<f64>> {
    let (s, m) = (kernel.num_states(), kernel.num_actions());
    pi.check_shape(s, m)?;
    Ok(DMatrix::from_fn(s, s, |x, next| {
        (0..m).map(|a| pi.prob(x, a) * kernel.prob(x, a, next)).sum()
    }))
}

/// Verifies that the support graph of `chain` is strongly connected.
///
/// Reports a pair `(from, to)` such that `to` cannot be reached from `from`.
pub fn check_irreducible(chain: &DMatrix<f64>) -> Result<()> {
    let n = chain.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { chain[(i, j)] } else { chain[(j, i)] };
                if w > SUPPORT_EPS && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    if let Some(to) = reach(true).iter().position(|s| !s) {
        return Err(Error::ReducibleChain { from: 0, to });
    }
    if let Some(from) = reach(false).iter().position(|s| !s) {
        return Err(Error::ReducibleChain { from, to: 0 });
    }
    Ok(())
}

/// Residual bound accepted for a computed stationary distribution.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Unique stationary distribution of an irreducible chain.
///
/// Solves `mu^T (P - I) = 0` with one balance equation replaced by the
/// normalization `sum mu = 1`, so periodic chains are handled as well.
pub fn stationary_distribution(chain: &DMatrix<f64>) -> Result<StationaryDistribution> {
    let n = chain.nrows();
    if n == 0 || chain.ncols() != n {
        return Err(Error::DimensionMismatch("chain must be square and nonempty".into()));
    }
    for i in 0..n {
        let row = chain.row(i);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-10 {
            return Err(Error::NotRowStochastic { row: i, sum });
        }
    }
    check_irreducible(chain)?;

    let mut system = chain.transpose() - DMatrix::identity(n, n);
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("stationary balance equations".into()))?;

    let mut mu: Vec<f64> = solution.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|v| *v /= total);
    let dist = StationaryDistribution(mu);
    let residual = dist.residual(chain);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::StationarityResidual(residual));
    }
    Ok(dist)
}

/// True stationary state-action frequencies of `pi` under the instance kernel.
pub fn state_action_frequencies(mdp: &Mdp, pi: &Policy) -> Result<StateActionFrequency> {
    let chain = induced_kernel(mdp.kernel(), pi)?;
    let mu = stationary_distribution(&chain)?;
    let (s, m) = (mdp.num_states(), mdp.num_actions());
    let d = (0..s)
        .flat_map(|x| (0..m).map(move |a| (x, a)))
        .map(|(x, a)| mu.0[x] * pi.prob(x, a))
        .collect();
    StateActionFrequency::from_table(s, m, d)
}

/// Discounted value of `pi` when transitions follow `kernel`.
///
/// Solves `(I - beta K_pi) V = r_pi` directly.
pub fn policy_value(mdp: &Mdp, kernel: &TransitionKernel, pi: &Policy) -> Result<ValueFunction> {
    let (s, m) = (mdp.num_states(), mdp.num_actions());
    mdp.subjective(kernel)?;
    let chain = induced_kernel(kernel, pi)?;
    let system = DMatrix::identity(s, s) - chain * mdp.discount();
    let r_pi = DVector::from_fn(s, |x, _| (0..m).map(|a| pi.prob(x, a) * mdp.reward(x, a)).sum());
    let v = system
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::SingularSystem("policy evaluation".into()))?;
    Ok(ValueFunction(v.iter().copied().collect()))
}
