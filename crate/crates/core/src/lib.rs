//! Solvers for equilibrium under model misspecification in finite discounted
//! MDPs: exact and entropy-regularized planning, KL consistency of subjective
//! kernels, joint-feasibility checks, and online model selection.

pub mod equilibrium;
pub mod error;
pub mod learning;
pub mod lp;
pub mod mdp;
pub mod models;
pub mod planning;
pub mod random;
pub mod soft;

pub use error::{Error, Result};
pub use mdp::{
    induced_kernel, policy_value, state_action_frequencies, stationary_distribution, Mdp, Policy,
    StateActionFrequency, StationaryDistribution, SubjectiveMdp, TransitionKernel, ValueFunction,
};
pub use models::{ConjectureSet, KernelFamily, MixtureFamily, ParamBounds, ParamLabel, SubjectiveKernel};
pub use planning::{OccupationMeasure, TieRule};
pub use soft::{SoftPlanConfig, SoftSolution};
