//! Choice of depth, step constant, coarse size and complexity for a target RMSE,
//! plus calibration of the unknown variance constants by short pilot runs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DiffusionModel, ReferenceData, TestFunction};
use crate::rng::{GaussianStream, StreamId};
use crate::schedule::StepSchedule;
use crate::simulate::{run_coarse_level, run_correcting_level};
use crate::weights::{psi, solve_general, solve_uniform, WeightSet, SERIES_TOLERANCE};

/// Stream level used by the pilot runs estimating the first-level variance.
pub const SIGMA1_STREAM_LEVEL: u32 = 1001;
/// Stream level used by the pilot runs estimating the correcting-level variance.
pub const SIGMA22_STREAM_LEVEL: u32 = 1002;

/// Where a constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Calibrated,
    Default,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProvenance {
    pub sigma1_sq: Provenance,
    pub sigma22_sq: Provenance,
    pub sigma21_sq: Provenance,
    pub c_abs: Provenance,
    pub c_tilde: Provenance,
}

/// Variance and bias constants feeding the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Asymptotic variance of the first level.
    pub sigma1_sq: f64,
    /// Asymptotic variance of a correcting level.
    pub sigma22_sq: f64,
    pub sigma21_sq: f64,
    /// `sigma1_sq / sigma22_sq`.
    pub theta1: f64,
    /// `sigma21_sq / sigma22_sq`.
    pub theta2: f64,
    /// Depth `R` to `|c_{R+1}|`; depths not listed use `c_abs_default`.
    pub c_abs: BTreeMap<usize, f64>,
    pub c_abs_default: f64,
    /// Growth ratio of the bias coefficients, `c_{l+1} ~ c_tilde * c_l`.
    pub c_tilde: f64,
    pub provenance: CalibrationProvenance,
}

impl CalibrationReport {
    /// Constants known in closed form; `sigma21_sq` and `c_tilde` fall back to defaults when absent.
    pub fn exact(reference: &ReferenceData) -> Result<Self> {
        let missing = |what: &str| Error::InvalidParameter(format!("reference data lacks {what}"));
        let sigma1_sq = reference.sigma1_sq.ok_or_else(|| missing("sigma1_sq"))?;
        let sigma22_sq = reference.sigma22_sq.ok_or_else(|| missing("sigma22_sq"))?;
        if reference.c_abs.is_empty() {
            return Err(missing("bias coefficients"));
        }
        let (sigma21_sq, p21) = match reference.sigma21_sq {
            Some(v) => (v, Provenance::Exact),
            None => (sigma22_sq, Provenance::Default),
        };
        let (c_tilde, pct) = match reference.c_tilde {
            Some(v) => (v, Provenance::Exact),
            None => (1.0, Provenance::Default),
        };
        Self::build(
            sigma1_sq,
            sigma22_sq,
            sigma21_sq,
            reference.c_abs.clone(),
            1.0,
            c_tilde,
            CalibrationProvenance {
                sigma1_sq: Provenance::Exact,
                sigma22_sq: Provenance::Exact,
                sigma21_sq: p21,
                c_abs: Provenance::Exact,
                c_tilde: pct,
            },
        )
    }

    /// Recommended fallbacks: `theta2 = c_tilde = |c_{R+1}| = 1` around the given variance constants.
    pub fn defaults(sigma1_sq: f64, theta1: f64, provenance: Provenance) -> Result<Self> {
        if !(theta1 > 0.0) {
            return Err(Error::InvalidParameter(format!("theta1 must be positive, got {theta1}")));
        }
        let sigma22_sq = sigma1_sq / theta1;
        Self::build(
            sigma1_sq,
            sigma22_sq,
            sigma22_sq,
            BTreeMap::new(),
            1.0,
            1.0,
            CalibrationProvenance {
                sigma1_sq: provenance,
                sigma22_sq: provenance,
                sigma21_sq: Provenance::Default,
                c_abs: Provenance::Default,
                c_tilde: Provenance::Default,
            },
        )
    }

    fn build(
        sigma1_sq: f64,
        sigma22_sq: f64,
        sigma21_sq: f64,
        c_abs: BTreeMap<usize, f64>,
        c_abs_default: f64,
        c_tilde: f64,
        provenance: CalibrationProvenance,
    ) -> Result<Self> {
        for (name, v) in [("sigma1_sq", sigma1_sq), ("sigma22_sq", sigma22_sq), ("sigma21_sq", sigma21_sq)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            sigma1_sq,
            sigma22_sq,
            sigma21_sq,
            theta1: sigma1_sq / sigma22_sq,
            theta2: sigma21_sq / sigma22_sq,
            c_abs,
            c_abs_default,
            c_tilde,
            provenance,
        })
    }

    /// `|c_{R+1}|`.
    pub fn c_abs_for(&self, depth: usize) -> f64 {
        self.c_abs.get(&depth).copied().unwrap_or(self.c_abs_default)
    }

    /// `|c_{R+2}|`, from the table when present and otherwise `c_tilde |c_{R+1}|`.
    pub fn c_abs_next(&self, depth: usize) -> f64 {
        self.c_abs.get(&(depth + 1)).copied().unwrap_or(self.c_tilde * self.c_abs_for(depth))
    }

    pub fn set_sigma1_sq(&mut self, v: f64, p: Provenance) -> Result<()> {
        *self = Self::build(v, self.sigma22_sq, self.sigma21_sq, self.c_abs.clone(), self.c_abs_default, self.c_tilde, self.provenance.clone())?;
        self.provenance.sigma1_sq = p;
        Ok(())
    }

    pub fn set_sigma22_sq(&mut self, v: f64, p: Provenance) -> Result<()> {
        *self = Self::build(self.sigma1_sq, v, self.sigma21_sq, self.c_abs.clone(), self.c_abs_default, self.c_tilde, self.provenance.clone())?;
        self.provenance.sigma22_sq = p;
        Ok(())
    }

    /// Sets `sigma21_sq = theta2 * sigma22_sq`.
    pub fn set_theta2(&mut self, theta2: f64, p: Provenance) -> Result<()> {
        let s21 = theta2 * self.sigma22_sq;
        *self = Self::build(self.sigma1_sq, self.sigma22_sq, s21, self.c_abs.clone(), self.c_abs_default, self.c_tilde, self.provenance.clone())?;
        self.provenance.sigma21_sq = p;
        Ok(())
    }

    /// Uses `c` for every depth.
    pub fn set_c_abs(&mut self, c: f64, p: Provenance) -> Result<()> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("|c| must be positive, got {c}")));
        }
        self.c_abs.clear();
        self.c_abs_default = c;
        self.provenance.c_abs = p;
        Ok(())
    }
}

/// Root of the depth equation and the depth it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSolution {
    pub x: f64,
    pub depth: usize,
}

/// `h(x) = (log M / 2) x (x - 1) + x log x + log eps`.
pub fn depth_equation(epsilon: f64, root: usize, x: f64) -> f64 {
    let lm = (root as f64).ln();
    0.5 * lm * x * (x - 1.0) + x * x.ln() + epsilon.ln()
}

/// Newton solve of the depth equation; the depth is `ceil(x)`, at least 2.
pub fn solve_depth(epsilon: f64, root: usize) -> Result<DepthSolution> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if root < 2 {
        return Err(Error::InvalidParameter(format!("root must be at least 2, got {root}")));
    }
    let lm = (root as f64).ln();
    let mut x = 1.5f64.max((2.0 * (1.0 / epsilon).ln() / lm).sqrt());
    for _ in 0..100 {
        let h = depth_equation(epsilon, root, x);
        if h.abs() < 1e-12 {
            let depth = (x.ceil() as usize).max(2);
            return Ok(DepthSolution { x, depth });
        }
        let dh = 0.5 * lm * (2.0 * x - 1.0) + x.ln() + 1.0;
        x = (x - h / dh).max(1.0);
    }
    Err(Error::NoConvergence { what: "depth equation", iterations: 100 })
}

/// Step constant minimising the first-order MSE at depth `depth`:
/// the argmin of `A/u + B u^{2R}` with `A = 2R/(2R+1) sigma1^2` and `B = 4 M^{-R(R-1)} c^2`.
pub fn optimal_gamma1(depth: usize, root: usize, sigma1_sq: f64, c_abs: f64) -> f64 {
    let r = depth as f64;
    let e = 1.0 / (2.0 * r + 1.0);
    (2.0 * r / (2.0 * r + 1.0)).powf(e)
        * (8.0 * r).powf(-e)
        * c_abs.powf(-2.0 * e)
        * sigma1_sq.sqrt().powf(2.0 * e)
        * (root as f64).powf(r * (r - 1.0) * e)
}

/// `2^{1/R} (2R+1)^{1/(2R)} |c_{R+1}|^{1/R}`.
pub fn mu_constant(depth: usize, c_abs: f64) -> f64 {
    let r = depth as f64;
    2f64.powf(1.0 / r) * (2.0 * r + 1.0).powf(1.0 / (2.0 * r)) * c_abs.powf(1.0 / r)
}

/// `((1 - rho)/rho) rho^{-1/(2R)}`, strictly decreasing from `+inf` to 0 on `(0,1)`.
fn rho_map(depth: usize, rho: f64) -> f64 {
    (1.0 - rho) / rho * rho.powf(-1.0 / (2.0 * depth as f64))
}

/// Both sides of the split equation at `rho`: `(lhs, rhs)` where `lhs` is the
/// constant `eps^{1/R} M^{(R-1)/2} R`.
pub fn rho_equation(epsilon: f64, depth: usize, root: usize, calib: &CalibrationReport, psi_rm: f64, rho: f64) -> (f64, f64) {
    let r = depth as f64;
    let m = root as f64;
    let lhs = epsilon.powf(1.0 / r) * m.powf((r - 1.0) / 2.0) * r;
    let denom = calib.theta2 / r + (1.0 - 1.0 / m) * psi_rm / r;
    let rhs = rho_map(depth, rho) * mu_constant(depth, calib.c_abs_for(depth)) * calib.theta1 / denom;
    (lhs, rhs)
}

/// Share `rho` of the squared error given to the first-order terms.
pub fn solve_rho(epsilon: f64, depth: usize, root: usize, calib: &CalibrationReport, psi_rm: f64) -> Result<f64> {
    let (lhs, unit) = rho_equation(epsilon, depth, root, calib, psi_rm, 0.5);
    let target = lhs / (unit / rho_map(depth, 0.5));
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidParameter(format!("split equation has no root (target {target})")));
    }
    // work with log rho_map for scale-free bisection
    let g = |rho: f64| rho_map(depth, rho).ln() - target.ln();
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    if g(lo) < 0.0 {
        return Ok(lo);
    }
    if g(hi) > 0.0 {
        return Ok(hi);
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut rho = 0.5 * (lo + hi);
    let k = 1.0 / (2.0 * depth as f64);
    for _ in 0..5 {
        // d/drho log rho_map = -1/(1-rho) - (1+k)/rho
        let dg = -1.0 / (1.0 - rho) - (1.0 + k) / rho;
        let next = rho - g(rho) / dg;
        if !(next > 0.0 && next < 1.0) {
            break;
        }
        rho = next;
    }
    Ok(rho)
}

fn coarse_size_real(epsilon: f64, depth: usize, root: usize, rho: f64, sigma1_sq: f64, c_abs: f64) -> f64 {
    let r = depth as f64;
    rho.powf(-(1.0 + 1.0 / (2.0 * r)))
        * mu_constant(depth, c_abs)
        * r
        * sigma1_sq
        * (root as f64).powf(-(r - 1.0) / 2.0)
        * epsilon.powf(-2.0 - 1.0 / r)
}

fn ceil_budget(n: f64) -> Result<u64> {
    let cap = 2f64.powi(62);
    if !(n.is_finite() && n <= cap) {
        return Err(Error::BudgetInfeasible(n));
    }
    Ok((n.ceil() as u64).max(1))
}

/// Number of iterations of the coarse budget: the first-order error equals `rho eps^2`.
pub fn coarse_size(epsilon: f64, depth: usize, root: usize, rho: f64, sigma1_sq: f64, c_abs: f64) -> Result<u64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (0,1), got {rho}")));
    }
    ceil_budget(coarse_size_real(epsilon, depth, root, rho, sigma1_sq, c_abs))
}

/// Cost `n (1 + M (1 - 1/R)) kappa0` of a uniform-resizer plan with coarse budget `n`.
pub fn complexity(n: u64, depth: usize, root: usize, kappa0: f64) -> f64 {
    n as f64 * (1.0 + root as f64 * (1.0 - 1.0 / depth as f64)) * kappa0
}

/// Optional user choices that replace computed plan parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanOverrides {
    pub depth: Option<usize>,
    pub gamma1: Option<f64>,
    pub rho: Option<f64>,
    pub q: Option<Vec<f64>>,
    pub kappa0: Option<f64>,
    pub clamp: Option<f64>,
    /// Fixed coarse budget instead of the one implied by `epsilon`.
    pub n: Option<u64>,
}

/// Everything needed to run the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorPlan {
    pub epsilon: f64,
    pub root: usize,
    pub depth: usize,
    /// Root of the depth equation when the depth was not overridden.
    pub depth_root: Option<f64>,
    pub a: f64,
    pub q: Vec<f64>,
    pub gamma1: f64,
    pub clamp: Option<f64>,
    pub rho: Option<f64>,
    pub n: u64,
    pub level_sizes: Vec<u64>,
    pub complexity: f64,
    pub kappa0: f64,
    pub psi: Option<f64>,
    pub provenance: BTreeMap<String, Provenance>,
}

impl EstimatorPlan {
    /// Plan with uniform resizers and given step constant and coarse budget.
    pub fn fixed(epsilon: f64, depth: usize, root: usize, gamma1: f64, n: u64) -> Self {
        let q = vec![1.0 / depth as f64; depth];
        let level_sizes = level_sizes(&q, n);
        let mut provenance = BTreeMap::new();
        provenance.insert("gamma1".to_string(), Provenance::Override);
        provenance.insert("n".to_string(), Provenance::Override);
        Self {
            epsilon,
            root,
            depth,
            depth_root: None,
            a: 1.0 / (2 * depth + 1) as f64,
            q,
            gamma1,
            clamp: None,
            rho: None,
            n,
            level_sizes,
            complexity: complexity(n, depth, root, 1.0),
            kappa0: 1.0,
            psi: None,
            provenance,
        }
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        StepSchedule::with_clamp(self.gamma1, self.a, self.clamp)
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.depth as f64;
        self.q.iter().all(|v| (v - u).abs() <= 1e-12)
    }

    /// Weights matching the plan's depth, root, exponent and resizers.
    pub fn weights(&self) -> Result<WeightSet> {
        if self.is_uniform() {
            solve_uniform(self.depth, self.root, self.a)
        } else {
            solve_general(self.depth, self.root, self.a, &self.q, SERIES_TOLERANCE)
        }
    }

    /// Same plan with a different coarse budget.
    pub fn with_budget(&self, n: u64) -> Self {
        let mut plan = self.clone();
        plan.n = n;
        plan.level_sizes = level_sizes(&plan.q, n);
        plan.complexity = plan_cost(&plan.level_sizes, plan.root, plan.kappa0);
        plan
    }

    /// Cost of running every level for `floor(q_r b)` steps.
    pub fn cost_at_budget(&self, b: u64) -> f64 {
        plan_cost(&level_sizes(&self.q, b), self.root, self.kappa0)
    }
}

fn level_sizes(q: &[f64], n: u64) -> Vec<u64> {
    q.iter().map(|qr| (qr * n as f64).floor() as u64).collect()
}

/// Level 1 costs one step per iteration; a correcting level costs `1 + M`.
fn plan_cost(sizes: &[u64], root: usize, kappa0: f64) -> f64 {
    let mut total = sizes[0] as f64;
    for &n in &sizes[1..] {
        total += (1.0 + root as f64) * n as f64;
    }
    total * kappa0
}

/// Full parameter choice for target RMSE `epsilon` and root `root`.
pub fn build_plan(epsilon: f64, root: usize, calib: &CalibrationReport, overrides: &PlanOverrides) -> Result<EstimatorPlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if root < 2 {
        return Err(Error::InvalidParameter(format!("root must be at least 2, got {root}")));
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("sigma1_sq".to_string(), calib.provenance.sigma1_sq);
    provenance.insert("sigma22_sq".to_string(), calib.provenance.sigma22_sq);
    provenance.insert("sigma21_sq".to_string(), calib.provenance.sigma21_sq);
    provenance.insert("c_abs".to_string(), calib.provenance.c_abs);
    provenance.insert("c_tilde".to_string(), calib.provenance.c_tilde);

    let (depth, depth_root) = match overrides.depth {
        Some(d) if d < 2 => return Err(Error::InvalidParameter(format!("depth must be at least 2, got {d}"))),
        Some(d) => {
            provenance.insert("depth".to_string(), Provenance::Override);
            (d, None)
        }
        None => {
            let sol = solve_depth(epsilon, root)?;
            (sol.depth, Some(sol.x))
        }
    };
    let a = 1.0 / (2 * depth + 1) as f64;
    let q = match &overrides.q {
        Some(q) => {
            provenance.insert("q".to_string(), Provenance::Override);
            q.clone()
        }
        None => vec![1.0 / depth as f64; depth],
    };
    let weights = if overrides.q.is_some() {
        solve_general(depth, root, a, &q, SERIES_TOLERANCE)?
    } else {
        solve_uniform(depth, root, a)?
    };
    let c_abs = calib.c_abs_for(depth);
    let gamma1 = match overrides.gamma1 {
        Some(g) => {
            provenance.insert("gamma1".to_string(), Provenance::Override);
            g
        }
        None => optimal_gamma1(depth, root, calib.sigma1_sq, c_abs),
    };
    let psi_rm = psi(&weights);
    let rho = match overrides.rho {
        Some(r) => {
            provenance.insert("rho".to_string(), Provenance::Override);
            r
        }
        None => solve_rho(epsilon, depth, root, calib, psi_rm)?,
    };
    let n = match overrides.n {
        Some(n) => {
            provenance.insert("n".to_string(), Provenance::Override);
            n
        }
        None => coarse_size(epsilon, depth, root, rho, calib.sigma1_sq, c_abs)?,
    };
    let kappa0 = overrides.kappa0.unwrap_or(1.0);
    let sizes = level_sizes(&q, n);
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidParameter(format!("coarse budget {n} leaves a level without steps")));
    }
    if let Some(c) = overrides.clamp {
        provenance.insert("clamp".to_string(), Provenance::Override);
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("clamp must be positive, got {c}")));
        }
    }
    let complexity = if overrides.q.is_some() { plan_cost(&sizes, root, kappa0) } else { complexity(n, depth, root, kappa0) };
    Ok(EstimatorPlan {
        epsilon,
        root,
        depth,
        depth_root,
        a,
        q,
        gamma1,
        clamp: overrides.clamp,
        rho: Some(rho),
        n,
        level_sizes: sizes,
        complexity,
        kappa0,
        psi: Some(psi_rm),
        provenance,
    })
}

/// Cheapest plan over the given roots and depths (depth from the depth equation when `depths` is empty).
pub fn best_plan(
    epsilon: f64,
    roots: &[usize],
    depths: &[usize],
    calib: &CalibrationReport,
    overrides: &PlanOverrides,
) -> Result<EstimatorPlan> {
    let mut best: Option<EstimatorPlan> = None;
    let depth_choices: Vec<Option<usize>> = if depths.is_empty() { vec![None] } else { depths.iter().map(|&d| Some(d)).collect() };
    for &root in roots {
        for depth in &depth_choices {
            let mut o = overrides.clone();
            if depth.is_some() {
                o.depth = *depth;
            }
            let plan = build_plan(epsilon, root, calib, &o)?;
            if best.as_ref().map_or(true, |b| plan.complexity < b.complexity) {
                best = Some(plan);
            }
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("empty root list".into()))
}

/// Leading and next-order terms of the mean squared error of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedMse {
    /// `n^{-2R/(2R+1)} (sigma_f^2 + m_f^2)`.
    pub first_order: f64,
    /// Variance part of the `1/n` term.
    pub second_order_variance: f64,
    /// Absolute bias part of the `1/n` term.
    pub second_order_bias: f64,
    /// `sigma_f^2`.
    pub first_order_variance_constant: f64,
    /// `m_f`.
    pub first_order_bias_constant: f64,
}

impl PredictedMse {
    pub fn second_order(&self) -> f64 {
        self.second_order_variance + self.second_order_bias
    }

    pub fn total(&self) -> f64 {
        self.first_order + self.second_order()
    }
}

/// Asymptotic MSE expansion for a uniform-resizer plan with signed `c_{R+1}` given by `calib`
/// (taken positive, only its square and absolute products enter).
pub fn predicted_mse(plan: &EstimatorPlan, calib: &CalibrationReport, weights: &WeightSet) -> Result<PredictedMse> {
    if plan.depth < 2 {
        return Err(Error::InvalidParameter("the expansion needs depth at least 2".into()));
    }
    if !plan.is_uniform() {
        return Err(Error::InvalidParameter("the expansion assumes uniform resizers".into()));
    }
    let r = plan.depth as f64;
    let m = plan.root as f64;
    let n = plan.n as f64;
    let g = plan.gamma1;
    let c = calib.c_abs_for(plan.depth);
    let c_next = calib.c_abs_next(plan.depth);
    let sign = if plan.depth % 2 == 1 { 1.0 } else { -1.0 };
    let var_const = 2.0 * r / (2.0 * r + 1.0) * r.powf(2.0 * r / (2.0 * r + 1.0)) * calib.sigma1_sq / g;
    let bias_const = 2.0 * g.powf(r) * sign * r.powf(r / (2.0 * r + 1.0)) * m.powf(-r * (r - 1.0) / 2.0) * c;
    let first_order = n.powf(-2.0 * r / (2.0 * r + 1.0)) * (var_const + bias_const * bias_const);
    let psi_rm = psi(weights);
    let variance = r * (calib.sigma21_sq + (1.0 - 1.0 / m) * psi_rm * calib.sigma22_sq);
    let bias = 4.0 * r / (r - 1.0)
        * c
        * c_next
        * g.powf(2.0 * r + 1.0)
        * r
        * m.powf(-r * (r - 1.0))
        * (1.0 - m.powf(-r))
        / (1.0 - 1.0 / m);
    Ok(PredictedMse {
        first_order,
        second_order_variance: variance / n,
        second_order_bias: bias.abs() / n,
        first_order_variance_constant: var_const,
        first_order_bias_constant: bias_const,
    })
}

/// Asymptotic variance of `n^{(1-a)/2}` times the estimator error when the bias is negligible:
/// `(1 - a) sigma1^2 / (gamma1 q_1^{1-a})`.
pub fn clt_variance(a: f64, q1: f64, gamma1: f64, sigma1_sq: f64) -> f64 {
    (1.0 - a) / gamma1 * sigma1_sq / q1.powf(1.0 - a)
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Pilot estimate of the first-level variance: `Gamma_n` times the sample variance of
/// `replications` independent first-level runs with exponent 1/2.
pub fn calibrate_sigma1(
    model: &DiffusionModel,
    f: &TestFunction,
    replications: usize,
    n: u64,
    gamma1: f64,
    seed: u64,
) -> Result<f64> {
    if replications < 2 || n == 0 {
        return Err(Error::InvalidParameter("calibration needs at least 2 replications and 1 step".into()));
    }
    let sched = StepSchedule::new(gamma1, 0.5)?;
    let values: Result<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|l| {
            let mut stream = GaussianStream::new(seed, StreamId::new(SIGMA1_STREAM_LEVEL, l as u32));
            Ok(run_coarse_level(model, f, &sched, n, &mut stream)?[0])
        })
        .collect();
    let gamma_n = sched.power_sums(n, 1).get(1);
    Ok(gamma_n * sample_variance(&values?))
}

/// Pilot estimate of the correcting-level variance: `Gamma_n^2 / Gamma_n^{(2)}` times the
/// sample variance of `replications` independent level-2 correcting runs with exponent 1/4.
pub fn calibrate_sigma22(
    model: &DiffusionModel,
    f: &TestFunction,
    root: usize,
    replications: usize,
    n: u64,
    gamma1: f64,
    seed: u64,
) -> Result<f64> {
    if replications < 2 || n == 0 {
        return Err(Error::InvalidParameter("calibration needs at least 2 replications and 1 step".into()));
    }
    let sched = StepSchedule::new(gamma1, 0.25)?;
    let values: Result<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|l| {
            let mut stream = GaussianStream::new(seed, StreamId::new(SIGMA22_STREAM_LEVEL, l as u32));
            Ok(run_correcting_level(model, f, 2, root, &sched, n, &mut stream)?[0])
        })
        .collect();
    let sums = sched.power_sums(n, 2);
    Ok(sums.get(1).powi(2) / sums.get(2) * sample_variance(&values?))
}

/// Single-level baseline with exponent 1/3 tuned for the first-order MSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrudePlan {
    pub epsilon: f64,
    pub a: f64,
    pub gamma1: f64,
    pub n: u64,
    pub complexity: f64,
}

impl CrudePlan {
    pub fn schedule(&self, clamp: Option<f64>) -> Result<StepSchedule> {
        StepSchedule::with_clamp(self.gamma1, self.a, clamp)
    }
}

/// Crude plan for target RMSE `epsilon`; `c2_abs` is the first bias coefficient `|c_2|`.
pub fn crude_plan(epsilon: f64, sigma1_sq: f64, c2_abs: f64) -> Result<CrudePlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let gamma1 = optimal_gamma1(1, 2, sigma1_sq, c2_abs);
    let n = ceil_budget(coarse_size_real(epsilon, 1, 2, 1.0, sigma1_sq, c2_abs))?;
    Ok(CrudePlan { epsilon, a: 1.0 / 3.0, gamma1, n, complexity: n as f64 })
}

/// Crude step constant alone (for runs at a prescribed complexity).
pub fn crude_gamma1(sigma1_sq: f64, c2_abs: f64) -> f64 {
    optimal_gamma1(1, 2, sigma1_sq, c2_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::make_ou;
    use approx::assert_relative_eq;

    fn ou_calib(sigma: f64) -> CalibrationReport {
        CalibrationReport::exact(&make_ou(sigma).unwrap().2).unwrap()
    }

    #[test]
    fn depth_examples() {
        let s = solve_depth(1e-2, 2).unwrap();
        assert!((s.x - 2.79).abs() < 0.005);
        assert_eq!(s.depth, 3);
        let s = solve_depth(1e-3, 3).unwrap();
        assert!((s.x - 3.06).abs() < 0.005);
        assert_eq!(s.depth, 4);
        let s = solve_depth(1e-4, 4).unwrap();
        assert!((s.x - 3.30).abs() < 0.005);
        assert_eq!(s.depth, 4);
        assert_eq!(solve_depth(0.5, 2).unwrap().depth, 2);
        assert!(solve_depth(1.0, 2).is_err());
    }

    #[test]
    fn gamma1_closed_form() {
        let g = optimal_gamma1(3, 3, 4.0, 1.0 / 64.0);
        assert!((g - 6.37).abs() < 0.01, "{g}");
        let r = 2.0;
        // A = B = 1 gives u* = (1/(2R))^{1/(2R+1)}: choose sigma1^2 and c accordingly
        let sigma1_sq = (2.0 * r + 1.0) / (2.0 * r);
        // 4 M^{-R(R-1)} c^2 = 1 with M = 2, R = 2
        let c = 1.0;
        assert_relative_eq!(optimal_gamma1(2, 2, sigma1_sq, c), 4f64.powf(-0.2), max_relative = 1e-12);
        assert_relative_eq!(
            optimal_gamma1(3, 2, 8.0, 0.1) / optimal_gamma1(3, 2, 4.0, 0.1),
            2f64.powf(1.0 / 7.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rho_solves_its_equation() {
        let calib = ou_calib(1.0);
        let psi_rm = psi(&solve_uniform(2, 2, 0.2).unwrap());
        let rho = solve_rho(1e-2, 2, 2, &calib, psi_rm).unwrap();
        let (lhs, rhs) = rho_equation(1e-2, 2, 2, &calib, psi_rm, rho);
        assert!(((lhs - rhs) / lhs).abs() < 1e-10);

        let mut doubled = calib.clone();
        doubled.set_sigma1_sq(2.0 * calib.sigma1_sq, Provenance::Override).unwrap();
        assert!(solve_rho(1e-2, 2, 2, &doubled, psi_rm).unwrap() > rho);
    }

    #[test]
    fn coarse_size_scaling() {
        let n1 = coarse_size(1e-2, 2, 2, 0.5, 4.0, 1.0 / 16.0).unwrap() as f64;
        let n2 = coarse_size(5e-3, 2, 2, 0.5, 4.0, 1.0 / 16.0).unwrap() as f64;
        assert_relative_eq!(n2 / n1, 2f64.powf(2.5), max_relative = 1e-5);
        assert!(coarse_size(1e-2, 2, 2, 0.9, 4.0, 1.0 / 16.0).unwrap() < n1 as u64);
        assert!(matches!(coarse_size(1e-9, 2, 2, 1e-9, 1e9, 1.0), Err(Error::BudgetInfeasible(_))));
    }

    #[test]
    fn coarse_size_worked_example() {
        // 0.5^{-5/4} * sqrt(2) 5^{1/4} / 4 * 2 * 4 / sqrt(2) * 1e5, evaluated at 40 digits: 711311.7640155691...
        let n = coarse_size(1e-2, 2, 2, 0.5, 4.0, 1.0 / 16.0).unwrap();
        assert_eq!(n, 711_312);
        // the often-quoted 711360 is 7e-5 away, beyond any rounding of the constants
        assert!((n as f64 - 711_360.0).abs() / 711_360.0 < 1e-4);
    }

    #[test]
    fn complexity_examples() {
        assert_eq!(complexity(1_000_000, 2, 2, 1.0), 2e6);
        assert_eq!(complexity(1_000_000, 3, 3, 1.0), 3e6);
    }

    #[test]
    fn first_order_term_matches_budget_share() {
        let calib = ou_calib(1.0);
        let plan = build_plan(1e-2, 2, &calib, &PlanOverrides { depth: Some(2), ..Default::default() }).unwrap();
        let ws = plan.weights().unwrap();
        let mse = predicted_mse(&plan, &calib, &ws).unwrap();
        let rho = plan.rho.unwrap();
        let eps2 = 1e-4;
        assert!(mse.first_order <= rho * eps2 * (1.0 + 1e-12));
        assert!(mse.first_order >= rho * eps2 * (1.0 - 1e-5));
        assert!(mse.second_order_variance <= (1.0 - rho) * eps2 * (1.0 + 1e-12));
        // at the optimal step the squared bias is a 1/(2R) share of the variance
        let c = mse.first_order_bias_constant;
        assert_relative_eq!(c * c, mse.first_order_variance_constant / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_bias_constant_leaves_pure_variance() {
        let mut calib = ou_calib(1.0);
        calib.c_abs.clear();
        calib.c_abs_default = 0.0;
        let plan = EstimatorPlan::fixed(1e-2, 2, 2, 0.5, 1000);
        let ws = plan.weights().unwrap();
        let mse = predicted_mse(&plan, &calib, &ws).unwrap();
        assert_eq!(mse.first_order_bias_constant, 0.0);
        assert_relative_eq!(
            mse.first_order,
            1000f64.powf(-0.8) * mse.first_order_variance_constant,
            max_relative = 1e-14
        );
    }

    #[test]
    fn plan_defaults_to_depth_equation() {
        let calib = ou_calib(1.0);
        let plan = build_plan(1e-2, 2, &calib, &PlanOverrides::default()).unwrap();
        assert_eq!(plan.depth, 3);
        assert_relative_eq!(plan.a, 1.0 / 7.0);
        assert_eq!(plan.level_sizes.len(), 3);
        assert_eq!(plan.complexity, complexity(plan.n, 3, 2, 1.0));
        let plan = build_plan(0.5, 2, &calib, &PlanOverrides::default()).unwrap();
        assert_eq!(plan.depth, 2);
    }

    #[test]
    fn budget_override_rebuilds_sizes() {
        let plan = EstimatorPlan::fixed(1e-2, 3, 2, 1.0, 999);
        assert_eq!(plan.level_sizes, vec![333, 333, 333]);
        let p2 = plan.with_budget(3000);
        assert_eq!(p2.level_sizes, vec![1000; 3]);
        assert_eq!(p2.complexity, complexity(3000, 3, 2, 1.0));
    }

    #[test]
    fn crude_plan_formula() {
        let p = crude_plan(1e-2, 4.0, 0.25).unwrap();
        assert_relative_eq!(p.n as f64, (2.0 * 3f64.sqrt() * 0.25 * 4.0 * 1e6).ceil(), max_relative = 1e-12);
        assert_eq!(p.a, 1.0 / 3.0);
    }

    #[test]
    fn clt_variance_formula() {
        assert_relative_eq!(clt_variance(0.25, 0.5, 1.0, 4.0), 0.75 * 4.0 / 0.5f64.powf(0.75));
    }
}
