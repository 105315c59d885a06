//! Planning, replication studies and crude comparisons.

use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizer::{
    best_plan, build_plan, calibrate_sigma1, calibrate_sigma22, crude_gamma1, crude_plan, CalibrationReport,
    EstimatorPlan, PlanOverrides, Provenance,
};
use crate::rng::{GaussianStream, StreamId};
use crate::simulate::{ml2rgodic_estimate_traced, run_coarse_level_traced};

use super::config::{CalibrationConfig, Mode, RunConfig};
use super::problem::{build_problem, Problem};
use super::worker_pool;

/// Stream level of the single-level baseline (ML2R levels use 1..=R).
pub const CRUDE_STREAM_LEVEL: u32 = 0;

/// Complexities `10^3, 10^3.25, ...` not above `max`.
pub fn checkpoint_complexities(max: f64) -> Vec<f64> {
    (0..)
        .map(|j| 10f64.powf(3.0 + 0.25 * j as f64))
        .take_while(|&c| c <= max * (1.0 + 1e-12))
        .collect()
}

/// Largest coarse budget whose cost does not exceed `complexity`.
pub fn budget_for_complexity(plan: &EstimatorPlan, complexity: f64) -> u64 {
    let (mut lo, mut hi) = (0u64, 1u64);
    while plan.cost_at_budget(hi) <= complexity {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if plan.cost_at_budget(mid) <= complexity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Calibration of a problem according to the configuration, then overrides.
pub fn calibrate(cfg: &RunConfig, problem: &Problem) -> Result<CalibrationReport> {
    let mut calib = match &cfg.calibration {
        CalibrationConfig::Exact => {
            if !problem.has_exact_constants {
                return Err(Error::Config(
                    "calibration: closed-form constants exist only for model ou with function square; use pilot or defaults"
                        .into(),
                ));
            }
            CalibrationReport::exact(&problem.reference)?
        }
        CalibrationConfig::Pilot { replications, n, gamma1 } => {
            let root = cfg.root.roots()[0];
            let s1 = calibrate_sigma1(&problem.model, &problem.function, *replications, *n, *gamma1, cfg.seed)?;
            let s22 = calibrate_sigma22(&problem.model, &problem.function, root, *replications, *n, *gamma1, cfg.seed)?;
            if !(s22 > 0.0) {
                return Err(Error::InvalidParameter(format!("pilot correcting variance is {s22}")));
            }
            CalibrationReport::defaults(s1, s1 / s22, Provenance::Calibrated)?
        }
        CalibrationConfig::Defaults { sigma1_sq, theta1 } => {
            CalibrationReport::defaults(*sigma1_sq, *theta1, Provenance::Default)
                .map_err(|e| Error::Config(format!("calibration: {e}")))?
        }
    };
    let o = &cfg.overrides;
    let wrap = |e: Error| Error::Config(format!("overrides: {e}"));
    if let Some(v) = o.sigma1_sq {
        calib.set_sigma1_sq(v, Provenance::Override).map_err(wrap)?;
    }
    if let Some(v) = o.sigma22_sq {
        calib.set_sigma22_sq(v, Provenance::Override).map_err(wrap)?;
    }
    if let Some(v) = o.theta2 {
        calib.set_theta2(v, Provenance::Override).map_err(wrap)?;
    }
    if let Some(v) = o.c_abs {
        calib.set_c_abs(v, Provenance::Override).map_err(wrap)?;
    }
    Ok(calib)
}

fn plan_overrides(cfg: &RunConfig, problem: &Problem) -> PlanOverrides {
    let o = &cfg.overrides;
    PlanOverrides {
        depth: o.depth,
        gamma1: o.gamma1,
        rho: o.rho,
        q: o.q.clone(),
        kappa0: o.kappa0,
        clamp: o.clamp.or(problem.default_clamp),
        n: o.n,
    }
}

/// Plan together with what it was derived from.
#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub model: String,
    pub function: String,
    pub reference: Option<f64>,
    /// Density convention of a quadrature reference.
    pub density_convention: Option<&'static str>,
    pub calibration: CalibrationReport,
    pub plan: EstimatorPlan,
    pub weights: Vec<f64>,
}

fn plan_for(cfg: &RunConfig, problem: &Problem, calib: &CalibrationReport) -> Result<EstimatorPlan> {
    let overrides = plan_overrides(cfg, problem);
    let roots = cfg.root.roots();
    let plan = if roots.len() == 1 {
        build_plan(cfg.epsilon, roots[0], calib, &overrides)
    } else {
        best_plan(cfg.epsilon, &roots, &[], calib, &overrides)
    };
    plan.map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::Config(format!("plan: {msg}")),
        other => other,
    })
}

pub fn cmd_plan(cfg: &RunConfig) -> Result<PlanReport> {
    let problem = build_problem(cfg)?;
    let calibration = calibrate(cfg, &problem)?;
    let plan = plan_for(cfg, &problem, &calibration)?;
    let weights = plan.weights()?.weights().to_vec();
    Ok(PlanReport {
        model: problem.model.name().to_string(),
        function: problem.function.label().to_string(),
        reference: problem.metric.target(),
        density_convention: problem.convention,
        calibration,
        plan,
        weights,
    })
}

/// One row of `<prefix>_rows.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub replication: usize,
    pub n: u64,
    pub complexity: f64,
    pub estimate: f64,
    pub abs_error: f64,
}

/// Aggregates over the rows; `variance` divides by the number of rows so that
/// `rmse^2 = bias^2 + variance` holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub rmse: f64,
    pub variance: f64,
    pub ci95_half: f64,
    pub plan_json: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<Row>,
    pub summary: Summary,
    /// `(replication, complexity, estimate)` at the geometric checkpoints, when tracing.
    pub trace: Vec<(usize, f64, f64)>,
}

/// Mean, RMSE against `target`, population variance and normal 95% half-width.
pub fn aggregate(rows: &[Row], target: Option<f64>, plan_json: String) -> Summary {
    let l = rows.len() as f64;
    let mean = rows.iter().map(|r| r.estimate).sum::<f64>() / l;
    let variance = rows.iter().map(|r| (r.estimate - mean).powi(2)).sum::<f64>() / l;
    let rmse = match target {
        Some(t) => (rows.iter().map(|r| (r.estimate - t).powi(2)).sum::<f64>() / l).sqrt(),
        None => f64::NAN,
    };
    let ci95_half = if rows.len() > 1 { 1.96 * (variance * l / (l - 1.0)).sqrt() / l.sqrt() } else { f64::NAN };
    Summary { mean, rmse, variance, ci95_half, plan_json }
}

/// What `run` executes in crude mode.
#[derive(Debug, Clone, Serialize)]
struct CrudeEcho {
    mode: &'static str,
    epsilon: f64,
    a: f64,
    gamma1: f64,
    clamp: Option<f64>,
    n: u64,
    complexity: f64,
    calibration: CalibrationReport,
}

pub fn cmd_run(cfg: &RunConfig) -> Result<StudyResult> {
    if cfg.mode == Mode::Compare {
        return Err(Error::Config("mode: 'compare' runs through the compare command".into()));
    }
    let problem = build_problem(cfg)?;
    let calib = calibrate(cfg, &problem)?;
    let pool = worker_pool()?;
    let target = problem.metric.target();
    if cfg.mode == Mode::Crude {
        let mut crude = crude_plan(cfg.epsilon, calib.sigma1_sq, calib.c_abs_for(1))?;
        if let Some(g) = cfg.overrides.gamma1 {
            crude.gamma1 = g;
        }
        if let Some(n) = cfg.overrides.n {
            crude.n = n;
            crude.complexity = n as f64;
        }
        let clamp = cfg.overrides.clamp.or(problem.default_clamp);
        let sched = crude.schedule(clamp)?;
        let checkpoints: Vec<u64> = if cfg.trace {
            checkpoint_complexities(crude.complexity).iter().map(|&c| c as u64).collect()
        } else {
            Vec::new()
        };
        let outputs: Result<Vec<_>> = pool.install(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|rep| {
                    let mut stream = GaussianStream::new(cfg.seed, StreamId::new(CRUDE_STREAM_LEVEL, rep as u32));
                    run_coarse_level_traced(&problem.model, &problem.function, &sched, crude.n, &mut stream, &checkpoints)
                })
                .collect()
        });
        let outputs = outputs?;
        let echo = CrudeEcho {
            mode: "crude",
            epsilon: cfg.epsilon,
            a: crude.a,
            gamma1: crude.gamma1,
            clamp,
            n: crude.n,
            complexity: crude.complexity,
            calibration: calib,
        };
        let rows: Vec<Row> = outputs
            .iter()
            .enumerate()
            .map(|(rep, out)| {
                let (estimate, abs_error) = problem.metric.apply(&out.value);
                Row { replication: rep, n: crude.n, complexity: crude.complexity, estimate, abs_error }
            })
            .collect();
        let mut trace = Vec::new();
        for (rep, out) in outputs.iter().enumerate() {
            for (&c, v) in checkpoints.iter().zip(&out.checkpoints) {
                trace.push((rep, c as f64, problem.metric.apply(v).0));
            }
        }
        let plan_json = serde_json::to_string(&echo).expect("plan echo serializes");
        let summary = aggregate(&rows, target, plan_json);
        return Ok(StudyResult { rows, summary, trace });
    }

    let plan = plan_for(cfg, &problem, &calib)?;
    let weights = plan.weights()?;
    let (budgets, complexities): (Vec<u64>, Vec<f64>) = if cfg.trace {
        checkpoint_complexities(plan.complexity)
            .into_iter()
            .map(|c| (budget_for_complexity(&plan, c), c))
            .filter(|(b, _)| *b > 0)
            .unzip()
    } else {
        (Vec::new(), Vec::new())
    };
    let estimates: Result<Vec<_>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                ml2rgodic_estimate_traced(&problem.model, &problem.function, &plan, &weights, cfg.seed, rep as u32, &budgets)
            })
            .collect()
    });
    let estimates = estimates?;
    let rows: Vec<Row> = estimates
        .iter()
        .enumerate()
        .map(|(rep, est)| {
            let (estimate, abs_error) = problem.metric.apply(&est.value);
            Row { replication: rep, n: plan.n, complexity: plan.complexity, estimate, abs_error }
        })
        .collect();
    let mut trace = Vec::new();
    for (rep, est) in estimates.iter().enumerate() {
        for (&c, v) in complexities.iter().zip(&est.checkpoints) {
            if !v.is_empty() {
                trace.push((rep, c, problem.metric.apply(v).0));
            }
        }
    }
    let report = PlanReport {
        model: problem.model.name().to_string(),
        function: problem.function.label().to_string(),
        reference: target,
        density_convention: problem.convention,
        calibration: calib,
        plan,
        weights: weights.weights().to_vec(),
    };
    let plan_json = serde_json::to_string(&report).expect("plan report serializes");
    let summary = aggregate(&rows, target, plan_json);
    Ok(StudyResult { rows, summary, trace })
}

/// One row of the comparison CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub replication: usize,
    pub complexity: f64,
    pub crude_estimate: f64,
    pub ml2r_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
    pub plan: EstimatorPlan,
    pub crude_gamma1: f64,
    pub target: Option<f64>,
}

impl CompareResult {
    /// Mean squared error of both methods at the largest complexity, `(crude, ml2r)`.
    pub fn final_mse(&self) -> Option<(f64, f64)> {
        let target = self.target?;
        let top = self.rows.iter().map(|r| r.complexity).fold(f64::NEG_INFINITY, f64::max);
        let last: Vec<&CompareRow> = self.rows.iter().filter(|r| r.complexity == top).collect();
        let l = last.len() as f64;
        let crude = last.iter().map(|r| (r.crude_estimate - target).powi(2)).sum::<f64>() / l;
        let ml2r = last.iter().map(|r| (r.ml2r_estimate - target).powi(2)).sum::<f64>() / l;
        Some((crude, ml2r))
    }
}

/// Crude and ML2R traces at the same total complexities.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareResult> {
    let problem = build_problem(cfg)?;
    let calib = calibrate(cfg, &problem)?;
    let base_plan = plan_for(cfg, &problem, &calib)?;
    let total = cfg.complexity.unwrap_or(base_plan.complexity);
    let plan = base_plan.with_budget(budget_for_complexity(&base_plan, total));
    if plan.level_sizes.contains(&0) {
        return Err(Error::Config(format!("complexity: {total} is too small for depth {}", plan.depth)));
    }
    let weights = plan.weights()?;
    let clamp = cfg.overrides.clamp.or(problem.default_clamp);
    let gamma1 = crude_gamma1(calib.sigma1_sq, calib.c_abs_for(1));
    let crude_sched = crate::schedule::StepSchedule::with_clamp(gamma1, 1.0 / 3.0, clamp)?;
    let mut complexities = checkpoint_complexities(total);
    if complexities.last().is_none_or(|&c| c < total) {
        complexities.push(total);
    }
    let crude_points: Vec<u64> = complexities.iter().map(|&c| c.floor() as u64).collect();
    let budgets: Vec<u64> = complexities.iter().map(|&c| budget_for_complexity(&plan, c)).collect();
    let crude_n = total.floor() as u64;
    let pool = worker_pool()?;
    let runs: Result<Vec<_>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut stream = GaussianStream::new(cfg.seed, StreamId::new(CRUDE_STREAM_LEVEL, rep as u32));
                let crude =
                    run_coarse_level_traced(&problem.model, &problem.function, &crude_sched, crude_n, &mut stream, &crude_points)?;
                let ml2r =
                    ml2rgodic_estimate_traced(&problem.model, &problem.function, &plan, &weights, cfg.seed, rep as u32, &budgets)?;
                Ok((crude, ml2r))
            })
            .collect()
    });
    let mut rows = Vec::new();
    for (rep, (crude, ml2r)) in runs?.into_iter().enumerate() {
        for (j, &c) in complexities.iter().enumerate() {
            let (cv, mv) = (&crude.checkpoints[j], &ml2r.checkpoints[j]);
            if cv.is_empty() || mv.is_empty() {
                continue;
            }
            rows.push(CompareRow {
                replication: rep,
                complexity: c,
                crude_estimate: problem.metric.apply(cv).0,
                ml2r_estimate: problem.metric.apply(mv).0,
            });
        }
    }
    Ok(CompareResult { rows, plan, crude_gamma1: gamma1, target: problem.metric.target() })
}

fn csv_path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_{suffix}.csv"))
}

/// Creates the directory that will hold `path`.
pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<File>> {
    ensure_parent(path)?;
    Ok(csv::Writer::from_path(path)?)
}

/// Writes `<prefix>_rows.csv`, `<prefix>_summary.csv` and, if traced, `<prefix>_trace.csv`.
pub fn write_study(result: &StudyResult, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = csv_path(prefix, "rows");
    let mut w = writer(&path)?;
    for row in &result.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    written.push(path);

    let path = csv_path(prefix, "summary");
    let mut w = writer(&path)?;
    w.serialize(&result.summary)?;
    w.flush()?;
    written.push(path);

    if !result.trace.is_empty() {
        let path = csv_path(prefix, "trace");
        let mut w = writer(&path)?;
        w.write_record(["replication", "complexity", "estimate"])?;
        for (rep, c, v) in &result.trace {
            w.write_record([rep.to_string(), c.to_string(), v.to_string()])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `<prefix>_compare.csv`.
pub fn write_compare(result: &CompareResult, prefix: &str) -> Result<PathBuf> {
    let path = csv_path(prefix, "compare");
    let mut w = writer(&path)?;
    for row in &result.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(path)
}
