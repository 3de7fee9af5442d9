//! Experiment configuration: TOML schema, defaults and validation.
//!
//! Every section is optional. Missing fields take the documented defaults,
//! and the fully resolved config is what gets echoed into the run manifest,
//! so a manifest can be fed back to `run` for an exact re-run.

use std::path::{Path, PathBuf};

use berknash_core::learning::{BanditConfig, LossEstimator, Schedule, ZoomConfig};
use berknash_core::models::mixture_family;
use berknash_core::{
    ConjectureSet, Mdp, ParamBounds, SoftPlanConfig, TransitionKernel,
};
use serde::{Deserialize, Serialize};

use crate::benchmark;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CaseStudy,
    LambdaSweep,
    Zooming,
    EquilibriumReport,
    DualityAudit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CaseStudy => "case-study",
            ExperimentKind::LambdaSweep => "lambda-sweep",
            ExperimentKind::Zooming => "zooming",
            ExperimentKind::EquilibriumReport => "equilibrium-report",
            ExperimentKind::DualityAudit => "duality-audit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub instance: InstanceSpec,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(default)]
    pub soft: SoftSpec,
    #[serde(default)]
    pub bandit: BanditSpec,
    #[serde(default)]
    pub zoom: ZoomSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub equilibrium: EquilibriumSpec,
}

fn default_seed() -> u64 {
    42
}

/// Either a named builtin or inline tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    pub discount: f64,
    /// Defaults to uniform.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    /// `transitions[state][action][next]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<Vec<f64>>>>,
    /// `rewards[state][action]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<Vec<f64>>>,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            builtin: None,
            discount: benchmark::DISCOUNT,
            initial: None,
            transitions: None,
            rewards: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `(1 - eps) P + eps / S` over the listed `eps`.
    Mixture,
    /// Kernels listed explicitly.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub eps: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            kind: FamilyKind::Mixture,
            eps: benchmark::FAMILY_EPS.to_vec(),
            kernels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoftSpec {
    pub temperature: f64,
    pub fp_tol: f64,
    pub max_iters: usize,
}

impl Default for SoftSpec {
    fn default() -> Self {
        let d = SoftPlanConfig::default();
        Self {
            temperature: d.temperature,
            fp_tol: d.fp_tol,
            max_iters: d.max_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Oracle,
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditSpec {
    pub learning_rate: f64,
    pub exploration: f64,
    pub horizon: usize,
    pub estimator: EstimatorKind,
    pub rollout_horizon: usize,
    pub smoothing: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_scale: Option<f64>,
}

impl Default for BanditSpec {
    fn default() -> Self {
        let d = BanditConfig::default();
        Self {
            learning_rate: d.learning_rate,
            exploration: d.exploration,
            horizon: d.horizon,
            estimator: EstimatorKind::Oracle,
            rollout_horizon: 1000,
            smoothing: 1e-3,
            loss_scale: d.loss_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZoomSpec {
    pub interval: usize,
    pub alpha: f64,
    pub alpha_decay: f64,
    pub delta: f64,
    pub delta_decay: f64,
    pub radius: f64,
    pub radius_decay: f64,
    pub grid_size: usize,
    pub uncertainty: f64,
    pub lower: f64,
    pub upper: f64,
    /// Initial grid of `eps` values.
    pub initial: Vec<f64>,
}

impl Default for ZoomSpec {
    fn default() -> Self {
        let d = ZoomConfig::default();
        let (lower, upper) = d.bounds.0[0];
        Self {
            interval: d.interval,
            alpha: d.alpha.initial,
            alpha_decay: d.alpha.decay,
            delta: d.delta.initial,
            delta_decay: d.delta.decay,
            radius: d.radius.initial,
            radius_decay: d.radius.decay,
            grid_size: d.grid_size,
            uncertainty: d.uncertainty,
            lower,
            upper,
            initial: (0..6).map(|i| i as f64 * 0.1).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points_per_decade: usize,
    pub reference_state: usize,
    /// Conjecture whose kernel the sweep plans under.
    pub model: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lambda_min: 1e-4,
            lambda_max: 1e4,
            points_per_decade: 4,
            reference_state: 0,
            model: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumSpec {
    pub mode: ModeKind,
    pub tol: f64,
}

impl Default for EquilibriumSpec {
    fn default() -> Self {
        Self {
            mode: ModeKind::Soft,
            tol: berknash_core::equilibrium::DEFAULT_FEASIBILITY_TOL,
        }
    }
}

fn field_error(field: &str) -> impl Fn(berknash_core::Error) -> HarnessError + '_ {
    move |e| HarnessError::invalid(field, e.to_string())
}

impl ExperimentConfig {
    pub fn parse_toml(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.resolve_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the config echoed in a run manifest (`.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let parse_err = |message: String| HarnessError::Parse {
                path: path.to_path_buf(),
                message,
            };
            let manifest: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            let config = manifest
                .get("config")
                .ok_or_else(|| parse_err("manifest has no `config` entry".into()))?;
            let mut cfg: ExperimentConfig =
                serde_json::from_value(config.clone()).map_err(|e| parse_err(e.to_string()))?;
            cfg.resolve_defaults();
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::parse_toml(&text, path)
    }

    fn resolve_defaults(&mut self) {
        if self.instance.builtin.is_none() && self.instance.transitions.is_none() {
            self.instance.builtin = Some(benchmark::NAME.to_string());
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mdp = self.build_instance()?;
        let cs = self.conjectures(&mdp)?;
        self.soft_config()
            .validate()
            .map_err(field_error("soft"))?;
        self.bandit_config()
            .validate()
            .map_err(field_error("bandit"))?;
        let zoom = self.zoom_config();
        zoom.validate().map_err(field_error("zoom"))?;
        if self.kind == ExperimentKind::Zooming {
            if self.family.kind != FamilyKind::Mixture {
                return Err(HarnessError::invalid("family.kind", "zooming needs the mixture family"));
            }
            if self.zoom.initial.is_empty() || !self.zoom.initial.iter().all(|e| zoom.bounds.contains(&[*e])) {
                return Err(HarnessError::invalid(
                    "zoom.initial",
                    "initial grid must be nonempty and inside [lower, upper]",
                ));
            }
            if self.zoom.upper > 1.0 || self.zoom.lower < 0.0 {
                return Err(HarnessError::invalid("zoom.upper", "mixture weights must lie in [0, 1]"));
            }
        }
        let s = &self.sweep;
        if !(s.lambda_min > 0.0 && s.lambda_min <= s.lambda_max && s.lambda_max.is_finite()) {
            return Err(HarnessError::invalid("sweep.lambda_min", "need 0 < lambda_min <= lambda_max"));
        }
        if s.points_per_decade == 0 {
            return Err(HarnessError::invalid("sweep.points_per_decade", "must be at least 1"));
        }
        if s.reference_state >= mdp.num_states() {
            return Err(HarnessError::invalid("sweep.reference_state", "state out of range"));
        }
        if s.model >= cs.len() {
            return Err(HarnessError::invalid("sweep.model", "conjecture index out of range"));
        }
        if !(self.equilibrium.tol > 0.0) {
            return Err(HarnessError::invalid("equilibrium.tol", "must be positive"));
        }
        Ok(())
    }

    pub fn build_instance(&self) -> Result<Mdp> {
        let spec = &self.instance;
        if let Some(name) = &spec.builtin {
            if spec.transitions.is_some() || spec.rewards.is_some() {
                return Err(HarnessError::invalid(
                    "instance.builtin",
                    "give either a builtin name or inline tables, not both",
                ));
            }
            if name != benchmark::NAME {
                return Err(HarnessError::invalid(
                    "instance.builtin",
                    format!("unknown builtin `{name}` (available: {})", benchmark::NAME),
                ));
            }
            let mdp = benchmark::instance(spec.discount).map_err(field_error("instance.discount"))?;
            return match &spec.initial {
                Some(mu) => Mdp::new(mdp.kernel().clone(), mdp.rewards().to_vec(), spec.discount, mu.clone())
                    .map_err(field_error("instance.initial")),
                None => Ok(mdp),
            };
        }
        let transitions = spec
            .transitions
            .as_ref()
            .ok_or_else(|| HarnessError::invalid("instance.transitions", "missing"))?;
        let rewards = spec
            .rewards
            .as_ref()
            .ok_or_else(|| HarnessError::invalid("instance.rewards", "missing"))?;
        let kernel = TransitionKernel::from_rows(transitions).map_err(field_error("instance.transitions"))?;
        if rewards.len() != kernel.num_states() || rewards.iter().any(|r| r.len() != kernel.num_actions()) {
            return Err(HarnessError::invalid(
                "instance.rewards",
                format!(
                    "expected {} rows of {} entries",
                    kernel.num_states(),
                    kernel.num_actions()
                ),
            ));
        }
        let reward = rewards.concat();
        match &spec.initial {
            Some(mu) => Mdp::new(kernel, reward, spec.discount, mu.clone()),
            None => Mdp::with_uniform_initial(kernel, reward, spec.discount),
        }
        .map_err(field_error("instance"))
    }

    pub fn conjectures(&self, mdp: &Mdp) -> Result<ConjectureSet> {
        match self.family.kind {
            FamilyKind::Mixture => {
                if self.family.eps.is_empty() {
                    return Err(HarnessError::invalid("family.eps", "at least one value required"));
                }
                mixture_family(mdp, &self.family.eps).map_err(field_error("family.eps"))
            }
            FamilyKind::Explicit => {
                let kernels = self
                    .family
                    .kernels
                    .as_ref()
                    .ok_or_else(|| HarnessError::invalid("family.kernels", "missing"))?;
                let kernels = kernels
                    .iter()
                    .map(|k| TransitionKernel::from_rows(k))
                    .collect::<berknash_core::Result<Vec<_>>>()
                    .map_err(field_error("family.kernels"))?;
                ConjectureSet::from_kernels(kernels).map_err(field_error("family.kernels"))
            }
        }
    }

    pub fn soft_config(&self) -> SoftPlanConfig {
        SoftPlanConfig {
            temperature: self.soft.temperature,
            fp_tol: self.soft.fp_tol,
            max_iters: self.soft.max_iters,
        }
    }

    pub fn bandit_config(&self) -> BanditConfig {
        let b = &self.bandit;
        BanditConfig {
            learning_rate: b.learning_rate,
            exploration: b.exploration,
            horizon: b.horizon,
            estimator: match b.estimator {
                EstimatorKind::Oracle => LossEstimator::Oracle,
                EstimatorKind::Rollout => LossEstimator::Rollout {
                    horizon: b.rollout_horizon,
                    smoothing: b.smoothing,
                },
            },
            loss_scale: b.loss_scale,
            seed: self.seed,
        }
    }

    pub fn zoom_config(&self) -> ZoomConfig {
        let z = &self.zoom;
        ZoomConfig {
            interval: z.interval,
            alpha: Schedule {
                initial: z.alpha,
                decay: z.alpha_decay,
            },
            delta: Schedule {
                initial: z.delta,
                decay: z.delta_decay,
            },
            radius: Schedule {
                initial: z.radius,
                decay: z.radius_decay,
            },
            grid_size: z.grid_size,
            uncertainty: z.uncertainty,
            bounds: ParamBounds(vec![(z.lower, z.upper)]),
        }
    }
}
