//! Experiment pipelines and their CSV outputs.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use berknash_core::equilibrium::{
    bilevel_objective, bilevel_select, entropy_bn_select, enumerate_equilibria,
    EquilibriumProblem, PlanningMode,
};
use berknash_core::learning::{run_exp3, run_zoom_exp3, Exp3Run, ZoomRun};
use berknash_core::planning::{
    greedy_sets, policy_from_occupation, primal_slacks, solve_dual, solve_primal,
    value_iteration, DEFAULT_ACT_TOL,
};
use berknash_core::soft::soft_best_response;
use berknash_core::{
    policy_value, ConjectureSet, Mdp, MixtureFamily, Policy, SoftPlanConfig, TransitionKernel,
};
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, ModeKind, SweepSpec};
use crate::error::{HarnessError, Result, SolverContext};
use crate::output::{fmt_float, fmt_opt, write_csv};

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "BERKNASH_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Env override, then the config's `output_dir`, then `runs/<kind>`.
pub fn resolve_output_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(cfg.kind.name()))
}

/// Runs the configured experiment, writing CSVs and `manifest.json` into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunArtifacts> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    std::fs::create_dir_all(dir)
        .map_err(|e| HarnessError::io(format!("creating {}", dir.display()), e))?;
    let mdp = cfg.build_instance()?;
    let cs = cfg.conjectures(&mdp)?;
    let files = match cfg.kind {
        ExperimentKind::CaseStudy => case_study(cfg, &mdp, &cs, dir)?,
        ExperimentKind::LambdaSweep => sweep_files(cfg, &mdp, &cs, dir)?,
        ExperimentKind::Zooming => zooming(cfg, &mdp, dir)?,
        ExperimentKind::EquilibriumReport => equilibrium_report(cfg, &mdp, &cs, dir)?,
        ExperimentKind::DualityAudit => audit_files(&mdp, &cs, dir)?,
    };
    let manifest = dir.join("manifest.json");
    let names: Vec<String> = files
        .iter()
        .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let body = json!({
        "tool": "berknash",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": cfg.kind.name(),
        "seed": cfg.seed,
        "config": cfg,
        "files": names,
        "started_unix": started,
        "wall_clock_seconds": clock.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&body).expect("manifest serializes");
    std::fs::write(&manifest, text + "\n")
        .map_err(|e| HarnessError::io(format!("writing {}", manifest.display()), e))?;
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        files,
        manifest,
    })
}

fn member_param(cs: &ConjectureSet, k: usize) -> Option<f64> {
    cs.members()[k].label.scalar_value()
}

fn case_study(cfg: &ExperimentConfig, mdp: &Mdp, cs: &ConjectureSet, dir: &Path) -> Result<Vec<PathBuf>> {
    let name = "case-study";
    let soft = cfg.soft_config();
    let run = run_exp3(mdp, cs, &cfg.bandit_config(), &soft).during(name)?;
    let problem = EquilibriumProblem::new(mdp, cs).during(name)?;
    let objective = (0..cs.len())
        .map(|k| bilevel_objective(&problem, k, &soft))
        .collect::<berknash_core::Result<Vec<_>>>()
        .during(name)?;

    let freq_path = dir.join("frequencies.csv");
    let rows = (0..cs.len()).map(|k| {
        vec![
            k.to_string(),
            fmt_opt(member_param(cs, k)),
            fmt_float(run.frequencies[k]),
            fmt_float(run.final_probabilities[k]),
            fmt_float(run.oracle_losses[k]),
            fmt_float(objective[k]),
        ]
    });
    write_csv(
        &freq_path,
        &["arm", "param", "frequency", "final_probability", "normalized_loss", "objective"],
        rows,
    )?;
    let trace_path = dir.join("trace.csv");
    write_trace(&trace_path, &run)?;
    let summary_path = dir.join("summary.csv");
    write_csv(&summary_path, &["metric", "value"], case_summary(&run))?;
    Ok(vec![freq_path, trace_path, summary_path])
}

fn write_trace(path: &Path, run: &Exp3Run) -> Result<()> {
    let rows = run.trace.iter().zip(&run.running_average).map(|(r, avg)| {
        vec![
            (r.t + 1).to_string(),
            r.arm.to_string(),
            fmt_opt(r.param),
            fmt_float(r.prob),
            fmt_float(r.loss),
            fmt_float(*avg),
        ]
    });
    write_csv(path, &["t", "arm", "param", "prob", "loss", "running_mean"], rows)
}

/// `2 sqrt(e - 1) sqrt(T K ln K)`.
pub fn exp3_regret_bound(horizon: usize, arms: usize) -> f64 {
    let k = arms as f64;
    2.0 * (std::f64::consts::E - 1.0).sqrt() * (horizon as f64 * k * k.ln()).sqrt()
}

fn case_summary(run: &Exp3Run) -> Vec<Vec<String>> {
    let t = run.trace.len();
    let half = run.regret.get(t / 2 - 1).copied().unwrap_or(0.0);
    let best = run.oracle_losses.iter().copied().fold(f64::INFINITY, f64::min);
    vec![
        vec!["rounds".into(), t.to_string()],
        vec!["loss_scale".into(), fmt_float(run.loss_scale)],
        vec!["best_normalized_loss".into(), fmt_float(best)],
        vec![
            "final_running_mean".into(),
            fmt_float(run.running_average.last().copied().unwrap_or(0.0)),
        ],
        vec!["regret".into(), fmt_float(run.final_regret())],
        vec!["regret_half_horizon".into(), fmt_float(half)],
        vec!["regret_bound".into(), fmt_float(exp3_regret_bound(t, run.labels.len()))],
        vec!["most_selected_arm".into(), run.most_selected().to_string()],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub policy: Policy,
    /// Soft fixed point, per state.
    pub soft_value: Vec<f64>,
    /// Value of the softmax policy under the model kernel, without entropy.
    pub evaluation: Vec<f64>,
}

/// `points_per_decade` log-spaced temperatures from `lambda_min` to `lambda_max`.
pub fn lambda_grid(spec: &SweepSpec) -> Vec<f64> {
    let lo = spec.lambda_min.log10();
    let hi = spec.lambda_max.log10();
    let steps = ((hi - lo) * spec.points_per_decade as f64).round() as usize;
    (0..=steps)
        .map(|i| 10f64.powf(lo + i as f64 / spec.points_per_decade as f64))
        .collect()
}

pub fn lambda_sweep(
    mdp: &Mdp,
    kernel: &TransitionKernel,
    grid: &[f64],
    base: &SoftPlanConfig,
) -> berknash_core::Result<Vec<SweepRow>> {
    let view = mdp.subjective(kernel)?;
    grid.iter()
        .map(|&lambda| {
            let cfg = SoftPlanConfig {
                temperature: lambda,
                ..*base
            };
            let sol = soft_best_response(&view, &cfg)?;
            let evaluation = policy_value(mdp, kernel, &sol.policy)?;
            Ok(SweepRow {
                lambda,
                policy: sol.policy,
                soft_value: sol.value.0,
                evaluation: evaluation.0,
            })
        })
        .collect()
}

fn sweep_files(cfg: &ExperimentConfig, mdp: &Mdp, cs: &ConjectureSet, dir: &Path) -> Result<Vec<PathBuf>> {
    let grid = lambda_grid(&cfg.sweep);
    let rows = lambda_sweep(mdp, cs.kernel(cfg.sweep.model), &grid, &cfg.soft_config())
        .during("lambda-sweep")?;
    let (s, m) = (mdp.num_states(), mdp.num_actions());
    let reference = cfg.sweep.reference_state;
    let path = dir.join("sweep.csv");
    write_csv(
        &path,
        &["lambda", "log10_lambda", "state", "action", "pi", "soft_value", "evaluation", "reference"],
        rows.iter().flat_map(|r| {
            (0..s).flat_map(move |x| {
                (0..m).map(move |a| {
                    vec![
                        fmt_float(r.lambda),
                        fmt_float(r.lambda.log10()),
                        x.to_string(),
                        a.to_string(),
                        fmt_float(r.policy.prob(x, a)),
                        fmt_float(r.soft_value[x]),
                        fmt_float(r.evaluation[x]),
                        (x == reference).to_string(),
                    ]
                })
            })
        }),
    )?;
    Ok(vec![path])
}

/// Zooming run from the configured initial grid over the mixture family.
pub fn zoom_run(cfg: &ExperimentConfig, mdp: &Mdp) -> berknash_core::Result<ZoomRun> {
    let initial: Vec<Vec<f64>> = cfg.zoom.initial.iter().map(|e| vec![*e]).collect();
    run_zoom_exp3(
        mdp,
        &MixtureFamily::new(mdp.kernel().clone()),
        &initial,
        &cfg.bandit_config(),
        &cfg.zoom_config(),
        &cfg.soft_config(),
    )
}

fn zooming(cfg: &ExperimentConfig, mdp: &Mdp, dir: &Path) -> Result<Vec<PathBuf>> {
    let run = zoom_run(cfg, mdp).during("zooming")?;
    let trace_path = dir.join("trace.csv");
    write_csv(
        &trace_path,
        &["t", "arm_id", "param", "prob", "loss", "running_mean", "set_size"],
        run.trace
            .iter()
            .zip(&run.running_average)
            .zip(&run.set_sizes)
            .map(|((r, avg), size)| {
                vec![
                    (r.t + 1).to_string(),
                    r.id.to_string(),
                    fmt_opt(r.param),
                    fmt_float(r.prob),
                    fmt_float(r.loss),
                    fmt_float(*avg),
                    size.to_string(),
                ]
            }),
    )?;
    let events_path = dir.join("zoom_events.csv");
    write_csv(
        &events_path,
        &["t", "epoch", "best_mean", "incumbent", "pruned_suboptimal", "pruned_converged", "added", "set_size"],
        run.events.iter().map(|e| {
            let count = |reason| e.pruned.iter().filter(|(_, r)| *r == reason).count();
            vec![
                e.t.to_string(),
                e.epoch.to_string(),
                fmt_opt(e.best),
                fmt_opt(e.incumbent.as_ref().and_then(|l| l.scalar_value())),
                count(berknash_core::learning::PruneReason::Suboptimal).to_string(),
                count(berknash_core::learning::PruneReason::Converged).to_string(),
                e.added.len().to_string(),
                e.set_size.to_string(),
            ]
        }),
    )?;
    let final_path = dir.join("final_set.csv");
    let mut final_set: Vec<(usize, Option<f64>, f64)> = run
        .final_set
        .iter()
        .zip(&run.final_probabilities)
        .map(|(l, p)| (l.id, l.scalar_value(), *p))
        .collect();
    final_set.sort_by(|a, b| a.1.unwrap_or(0.0).total_cmp(&b.1.unwrap_or(0.0)));
    write_csv(
        &final_path,
        &["arm_id", "param", "final_probability"],
        final_set
            .into_iter()
            .map(|(id, p, prob)| vec![id.to_string(), fmt_opt(p), fmt_float(prob)]),
    )?;
    Ok(vec![trace_path, events_path, final_path])
}

fn equilibrium_report(
    cfg: &ExperimentConfig,
    mdp: &Mdp,
    cs: &ConjectureSet,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let name = "equilibrium-report";
    let problem = EquilibriumProblem::new(mdp, cs).during(name)?;
    let mode = match cfg.equilibrium.mode {
        ModeKind::Hard => PlanningMode::Hard,
        ModeKind::Soft => PlanningMode::Soft(cfg.soft_config()),
    };
    let report = enumerate_equilibria(&problem, mode, cfg.equilibrium.tol).during(name)?;
    let k = cs.len();
    let mut header: Vec<String> = ["model", "param", "response", "accepted"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..k).map(|j| format!("divergence_{j}")));
    header.extend(
        [
            "subjective_flow",
            "true_frequencies",
            "policy_consistency",
            "kl_argmin",
            "subjective_optimality",
            "note",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let path = dir.join("equilibria.csv");
    write_csv(
        &path,
        &header_refs,
        report.diagnostics.iter().map(|d| {
            let mut row = vec![
                d.model.to_string(),
                fmt_opt(member_param(cs, d.model)),
                d.response.to_string(),
                d.accepted.to_string(),
            ];
            match &d.divergences {
                Some(v) => row.extend(v.iter().map(|x| fmt_float(*x))),
                None => row.extend((0..k).map(|_| String::new())),
            }
            match &d.feasibility {
                Some(f) => {
                    row.push(fmt_float(f.subjective_flow));
                    row.push(fmt_float(f.true_frequencies));
                    row.push(fmt_float(f.policy_consistency));
                    row.push(fmt_float(f.kl_argmin));
                    row.push(fmt_opt(f.subjective_optimality));
                }
                None => row.extend((0..5).map(|_| String::new())),
            }
            row.push(d.note.clone().unwrap_or_default());
            row
        }),
    )?;

    let (selected, objective) = entropy_bn_select(&problem, &cfg.soft_config()).during(name)?;
    let bilevel = bilevel_select(&problem, cfg.equilibrium.tol).during(name)?;
    let sel_path = dir.join("selection.csv");
    write_csv(
        &sel_path,
        &["model", "param", "entropy_objective", "entropy_selected", "hard_bilevel_selected", "hard_bilevel_is_equilibrium"],
        (0..k).map(|j| {
            vec![
                j.to_string(),
                fmt_opt(member_param(cs, j)),
                fmt_float(objective[j]),
                (j == selected).to_string(),
                (j == bilevel.model).to_string(),
                if j == bilevel.model {
                    bilevel.is_equilibrium.to_string()
                } else {
                    String::new()
                },
            ]
        }),
    )?;
    let text_path = dir.join("summary.txt");
    let mut text = format!(
        "mode: {}\ntolerance: {:e}\nequilibria: {}\n",
        match cfg.equilibrium.mode {
            ModeKind::Hard => "hard",
            ModeKind::Soft => "soft",
        },
        cfg.equilibrium.tol,
        report.equilibria.len()
    );
    for eq in &report.equilibria {
        text += &format!(
            "  model {} ({}) divergence {}\n",
            eq.model,
            eq.response,
            fmt_float(eq.divergence)
        );
    }
    text += &format!(
        "entropy-regularized selection: model {selected}\nhard bilevel selection: model {} ({}, equilibrium: {})\n",
        bilevel.model, bilevel.response, bilevel.is_equilibrium
    );
    std::fs::write(&text_path, text)
        .map_err(|e| HarnessError::io(format!("writing {}", text_path.display()), e))?;
    Ok(vec![path, sel_path, text_path])
}

/// LP duality and slackness checks for one conjecture.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub model: usize,
    pub param: Option<f64>,
    pub primal_objective: f64,
    /// `sum_x V(x)` from value iteration.
    pub value_sum: f64,
    pub dual_objective: f64,
    /// `sum_x mu0(x) V(x)` from value iteration.
    pub weighted_value: f64,
    /// Worst primal slack on rows where the dual solution exceeds `1e-8`.
    pub slackness: f64,
    pub flow_residual: f64,
    /// The policy read off the dual solution only uses greedy actions.
    pub greedy: bool,
}

impl AuditRow {
    pub fn primal_gap(&self) -> f64 {
        (self.primal_objective - self.value_sum).abs()
    }

    pub fn dual_gap(&self) -> f64 {
        (self.dual_objective - self.weighted_value).abs()
    }

    pub fn passed(&self) -> bool {
        self.primal_gap() <= 1e-7
            && self.dual_gap() <= 1e-8
            && self.slackness <= 1e-8
            && self.flow_residual <= 1e-8
            && self.greedy
    }
}

pub fn audit_model(mdp: &Mdp, kernel: &TransitionKernel) -> berknash_core::Result<AuditRow> {
    let view = mdp.subjective(kernel)?;
    let v = value_iteration(&view, 1e-11);
    let (primal_v, primal) = solve_primal(&view)?;
    let (eta, dual) = solve_dual(&view)?;
    let slacks = primal_slacks(&view, &primal_v);
    let slackness = eta
        .as_slice()
        .iter()
        .zip(&slacks)
        .filter(|(e, _)| **e > 1e-8)
        .map(|(_, s)| s.abs())
        .fold(0.0, f64::max);
    let policy = policy_from_occupation(&eta, None)?;
    let sets = greedy_sets(&view, &v, DEFAULT_ACT_TOL);
    let greedy = (0..view.num_states()).all(|x| {
        (0..view.num_actions()).all(|a| policy.prob(x, a) <= 0.0 || sets[x].contains(&a))
    });
    Ok(AuditRow {
        model: 0,
        param: None,
        primal_objective: primal.objective,
        value_sum: v.0.iter().sum(),
        dual_objective: dual.objective,
        weighted_value: v.0.iter().zip(mdp.initial()).map(|(a, b)| a * b).sum(),
        slackness,
        flow_residual: eta.flow_residual(&view),
        greedy,
    })
}

pub fn duality_audit(mdp: &Mdp, cs: &ConjectureSet) -> berknash_core::Result<Vec<AuditRow>> {
    (0..cs.len())
        .map(|k| {
            let mut row = audit_model(mdp, cs.kernel(k))?;
            row.model = k;
            row.param = member_param(cs, k);
            Ok(row)
        })
        .collect()
}

fn audit_files(mdp: &Mdp, cs: &ConjectureSet, dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = duality_audit(mdp, cs).during("duality-audit")?;
    let path = dir.join("duality.csv");
    write_audit(&path, &rows)?;
    Ok(vec![path])
}

pub fn write_audit(path: &Path, rows: &[AuditRow]) -> Result<()> {
    write_csv(
        path,
        &[
            "model",
            "param",
            "primal_objective",
            "value_sum",
            "primal_gap",
            "dual_objective",
            "weighted_value",
            "dual_gap",
            "slackness",
            "flow_residual",
            "greedy",
            "passed",
        ],
        rows.iter().map(|r| {
            vec![
                r.model.to_string(),
                fmt_opt(r.param),
                fmt_float(r.primal_objective),
                fmt_float(r.value_sum),
                fmt_float(r.primal_gap()),
                fmt_float(r.dual_objective),
                fmt_float(r.weighted_value),
                fmt_float(r.dual_gap()),
                fmt_float(r.slackness),
                fmt_float(r.flow_residual),
                r.greedy.to_string(),
                r.passed().to_string(),
            ]
        }),
    )
}
