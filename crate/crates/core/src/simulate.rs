//! Decreasing-step Euler schemes, coupled level pairs and the multilevel estimator.

use crate::error::{Error, Result};
use crate::models::{Diffusion, DiffusionModel, TestFunction};
use crate::optimizer::EstimatorPlan;
use crate::rng::{GaussianStream, StreamId};
use crate::schedule::StepSchedule;
use crate::weights::WeightSet;

/// Weighted running mean `sum eta_k v_k / sum eta_k`, updated recursively.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalAccumulator {
    weight: f64,
    value: Vec<f64>,
    count: u64,
}

impl EmpiricalAccumulator {
    pub fn new(outputs: usize) -> Self {
        Self { weight: 0.0, value: vec![0.0; outputs], count: 0 }
    }

    pub fn update(&mut self, eta: f64, values: &[f64]) {
        debug_assert!(eta > 0.0);
        debug_assert_eq!(values.len(), self.value.len());
        self.weight += eta;
        self.count += 1;
        if self.count == 1 {
            self.value.copy_from_slice(values);
            return;
        }
        let t = eta / self.weight;
        for (v, x) in self.value.iter_mut().zip(values) {
            *v = t * x + (1.0 - t) * *v;
        }
    }

    pub fn update_scalar(&mut self, eta: f64, value: f64) {
        self.update(eta, &[value]);
    }

    /// Total weight `H`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Reusable buffers for Euler steps of one model.
struct Stepper<'a> {
    model: &'a DiffusionModel,
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a DiffusionModel) -> Self {
        let sigma_len = match model.diffusion() {
            Diffusion::Scalar(_) => 0,
            Diffusion::Matrix(_) => model.dim() * model.noise_dim(),
        };
        Self { model, drift: vec![0.0; model.dim()], sigma: vec![0.0; sigma_len] }
    }

    /// `x <- x + gamma b(x) + s(x) dw`; returns false if the new state is not finite.
    #[inline]
    fn step(&mut self, x: &mut [f64], gamma: f64, dw: &[f64]) -> bool {
        self.model.drift_into(x, &mut self.drift);
        match self.model.diffusion() {
            Diffusion::Scalar(s) => {
                for ((xi, bi), wi) in x.iter_mut().zip(&self.drift).zip(dw) {
                    *xi += gamma * bi + s * wi;
                }
            }
            Diffusion::Matrix(g) => {
                g(x, &mut self.sigma);
                let q = self.model.noise_dim();
                for (i, xi) in x.iter_mut().enumerate() {
                    let row = &self.sigma[i * q..(i + 1) * q];
                    let noise: f64 = row.iter().zip(dw).map(|(s, w)| s * w).sum();
                    *xi += gamma * self.drift[i] + noise;
                }
            }
        }
        x.iter().all(|v| v.is_finite())
    }
}

/// One Euler step `x + gamma b(x) + s(x) dw`.
pub fn euler_step(model: &DiffusionModel, state: &[f64], gamma: f64, dw: &[f64]) -> Result<Vec<f64>> {
    if state.len() != model.dim() || dw.len() != model.noise_dim() {
        return Err(Error::DimensionMismatch(format!(
            "state {} / noise {} for a model of dimension {} / {}",
            state.len(),
            dw.len(),
            model.dim(),
            model.noise_dim()
        )));
    }
    let mut x = state.to_vec();
    if Stepper::new(model).step(&mut x, gamma, dw) {
        Ok(x)
    } else {
        Err(Error::BlowUp { level: 0, step: 1 })
    }
}

/// Records accumulator values after given update counts.
struct Recorder<'c> {
    at: &'c [u64],
    next: usize,
    values: Vec<Vec<f64>>,
}

impl<'c> Recorder<'c> {
    fn new(at: &'c [u64]) -> Self {
        debug_assert!(at.windows(2).all(|w| w[0] <= w[1]));
        let mut rec = Self { at, next: 0, values: Vec::with_capacity(at.len()) };
        // a checkpoint at zero steps has no estimate yet
        while rec.next < at.len() && at[rec.next] == 0 {
            rec.values.push(Vec::new());
            rec.next += 1;
        }
        rec
    }

    #[inline]
    fn observe(&mut self, acc: &EmpiricalAccumulator) {
        while self.next < self.at.len() && self.at[self.next] == acc.count() {
            self.values.push(acc.value().to_vec());
            self.next += 1;
        }
    }
}

/// Final value of a level together with intermediate values at requested step counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutput {
    pub value: Vec<f64>,
    /// One entry per requested checkpoint; empty when the checkpoint was zero steps.
    pub checkpoints: Vec<Vec<f64>>,
}

/// Weighted empirical mean `sum_k step_k f(X_{k-1}) / sum_k step_k` of the Euler scheme.
pub fn run_coarse_level(
    model: &DiffusionModel,
    f: &TestFunction,
    sched: &StepSchedule,
    n: u64,
    stream: &mut GaussianStream,
) -> Result<Vec<f64>> {
    Ok(run_coarse_level_traced(model, f, sched, n, stream, &[])?.value)
}

/// [`run_coarse_level`] that also reports the running value after each count in `checkpoints`
/// (sorted, each at most `n`).
pub fn run_coarse_level_traced(
    model: &DiffusionModel,
    f: &TestFunction,
    sched: &StepSchedule,
    n: u64,
    stream: &mut GaussianStream,
    checkpoints: &[u64],
) -> Result<LevelOutput> {
    if n == 0 {
        return Err(Error::InvalidParameter("a level needs at least one step".into()));
    }
    let level = stream.id().level as usize;
    let mut stepper = Stepper::new(model);
    let mut x = model.x0().to_vec();
    let mut dw = vec![0.0; model.noise_dim()];
    let mut fx = vec![0.0; f.outputs()];
    let mut acc = EmpiricalAccumulator::new(f.outputs());
    let mut rec = Recorder::new(checkpoints);
    for k in 1..=n {
        let gamma = sched.step(k);
        f.eval_into(&x, &mut fx);
        acc.update(gamma, &fx);
        rec.observe(&acc);
        if k == n {
            break;
        }
        stream.fill_normal(gamma, &mut dw);
        if !stepper.step(&mut x, gamma, &dw) {
            return Err(Error::BlowUp { level, step: k });
        }
    }
    Ok(LevelOutput { value: acc.value().to_vec(), checkpoints: rec.values })
}

/// Correcting measure of level `r`: coupled coarse (step `gamma_k / M^(r-2)`) and
/// fine (`M` sub-steps of a `M`-th of that) schemes driven by the same Brownian path.
pub fn run_correcting_level(
    model: &DiffusionModel,
    f: &TestFunction,
    r: usize,
    m: usize,
    base: &StepSchedule,
    n: u64,
    stream: &mut GaussianStream,
) -> Result<Vec<f64>> {
    Ok(run_correcting_level_traced(model, f, r, m, base, n, stream, &[])?.value)
}

#[allow(clippy::too_many_arguments)]
pub fn run_correcting_level_traced(
    model: &DiffusionModel,
    f: &TestFunction,
    r: usize,
    m: usize,
    base: &StepSchedule,
    n: u64,
    stream: &mut GaussianStream,
    checkpoints: &[u64],
) -> Result<LevelOutput> {
    let mut output = None;
    correcting_loop(model, f, r, m, base, n, stream, checkpoints, None, &mut output)?;
    Ok(output.expect("loop always produces an output"))
}

/// States and increments of one correcting level, kept for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectingPath {
    /// `X_0 .. X_n`.
    pub coarse_states: Vec<Vec<f64>>,
    /// `Y_0 .. Y_{nM}`.
    pub fine_states: Vec<Vec<f64>>,
    pub coarse_steps: Vec<f64>,
    pub fine_steps: Vec<f64>,
    pub coarse_increments: Vec<Vec<f64>>,
    pub fine_increments: Vec<Vec<f64>>,
    /// The correcting measure applied to `f`, as returned by [`run_correcting_level`].
    pub value: Vec<f64>,
}

/// [`run_correcting_level`] that stores the whole path.
pub fn record_correcting_path(
    model: &DiffusionModel,
    f: &TestFunction,
    r: usize,
    m: usize,
    base: &StepSchedule,
    n: u64,
    stream: &mut GaussianStream,
) -> Result<CorrectingPath> {
    let mut path = CorrectingPath {
        coarse_states: vec![model.x0().to_vec()],
        fine_states: vec![model.x0().to_vec()],
        coarse_steps: Vec::new(),
        fine_steps: Vec::new(),
        coarse_increments: Vec::new(),
        fine_increments: Vec::new(),
        value: Vec::new(),
    };
    let mut output = None;
    correcting_loop(model, f, r, m, base, n, stream, &[], Some(&mut path), &mut output)?;
    path.value = output.expect("loop always produces an output").value;
    Ok(path)
}

#[allow(clippy::too_many_arguments)]
fn correcting_loop(
    model: &DiffusionModel,
    f: &TestFunction,
    r: usize,
    m: usize,
    base: &StepSchedule,
    n: u64,
    stream: &mut GaussianStream,
    checkpoints: &[u64],
    mut path: Option<&mut CorrectingPath>,
    output: &mut Option<LevelOutput>,
) -> Result<()> {
    if r < 2 || m < 2 {
        return Err(Error::InvalidParameter(format!("correcting level needs r >= 2 and M >= 2, got r={r}, M={m}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("a level needs at least one step".into()));
    }
    let sched = base.refined(r, m);
    let q = model.noise_dim();
    let outputs = f.outputs();
    let mut coarse = Stepper::new(model);
    let mut fine = Stepper::new(model);
    let mut x = model.x0().to_vec();
    let mut y = model.x0().to_vec();
    let mut dw_fine = vec![0.0; m * q];
    let mut dw_coarse = vec![0.0; q];
    let mut fx = vec![0.0; outputs];
    let mut fy = vec![0.0; outputs];
    let mut fy_mean = vec![0.0; outputs];
    let mut diff = vec![0.0; outputs];
    let mut acc = EmpiricalAccumulator::new(outputs);
    let mut rec = Recorder::new(checkpoints);
    let inv_m = 1.0 / m as f64;
    for k in 1..=n {
        let gamma = sched.step(k);
        let fine_gamma = gamma * inv_m;
        stream.fill_normal(fine_gamma, &mut dw_fine);
        dw_coarse.fill(0.0);
        for chunk in dw_fine.chunks_exact(q) {
            for (c, w) in dw_coarse.iter_mut().zip(chunk) {
                *c += w;
            }
        }

        fy_mean.fill(0.0);
        for (sub, chunk) in dw_fine.chunks_exact(q).enumerate() {
            f.eval_into(&y, &mut fy);
            for (s, v) in fy_mean.iter_mut().zip(&fy) {
                *s += v;
            }
            if !fine.step(&mut y, fine_gamma, chunk) {
                return Err(Error::BlowUp { level: r, step: (k - 1) * m as u64 + sub as u64 + 1 });
            }
            if let Some(p) = path.as_deref_mut() {
                p.fine_states.push(y.clone());
                p.fine_steps.push(fine_gamma);
                p.fine_increments.push(chunk.to_vec());
            }
        }
        f.eval_into(&x, &mut fx);
        for ((d, s), v) in diff.iter_mut().zip(&fy_mean).zip(&fx) {
            *d = s * inv_m - v;
        }
        acc.update(gamma, &diff);
        rec.observe(&acc);
        if !coarse.step(&mut x, gamma, &dw_coarse) {
            return Err(Error::BlowUp { level: r, step: k });
        }
        if let Some(p) = path.as_deref_mut() {
            p.coarse_states.push(x.clone());
            p.coarse_steps.push(gamma);
            p.coarse_increments.push(dw_coarse.clone());
        }
    }
    *output = Some(LevelOutput { value: acc.value().to_vec(), checkpoints: rec.values });
    Ok(())
}

/// Result of one multilevel estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// `W_1 nu_{n_1}(f) + sum_r W_r mu_{n_r}(f)`.
    pub value: Vec<f64>,
    /// Unweighted level values, level 1 first.
    pub levels: Vec<Vec<f64>>,
    /// Combined value at each requested checkpoint (empty if some level had no steps yet).
    pub checkpoints: Vec<Vec<f64>>,
}

impl Estimate {
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

fn check_plan(plan: &EstimatorPlan, weights: &WeightSet) -> Result<()> {
    let same_q = plan.q.len() == weights.q().len()
        && plan.q.iter().zip(weights.q()).all(|(a, b)| (a - b).abs() <= 1e-12);
    if plan.depth != weights.depth()
        || plan.root != weights.root()
        || (plan.a - weights.exponent()).abs() > 1e-12
        || !same_q
    {
        return Err(Error::InvalidParameter("plan and weights disagree on (R, M, a, q)".into()));
    }
    if plan.level_sizes.iter().any(|&n| n == 0) {
        return Err(Error::InvalidParameter("every level needs at least one step".into()));
    }
    Ok(())
}

/// `W_1 nu_{n_1}(f) + sum_{r=2..R} W_r mu^{(r)}_{n_r}(f)` with independent level streams
/// `(r, replication)`.
pub fn ml2rgodic_estimate(
    model: &DiffusionModel,
    f: &TestFunction,
    plan: &EstimatorPlan,
    weights: &WeightSet,
    seed: u64,
    replication: u32,
) -> Result<Estimate> {
    ml2rgodic_estimate_traced(model, f, plan, weights, seed, replication, &[])
}

/// [`ml2rgodic_estimate`] also reporting the estimate at coarse budgets `budgets`
/// (sorted): level `r` contributes its running value after `floor(q_r * budget)` steps.
pub fn ml2rgodic_estimate_traced(
    model: &DiffusionModel,
    f: &TestFunction,
    plan: &EstimatorPlan,
    weights: &WeightSet,
    seed: u64,
    replication: u32,
    budgets: &[u64],
) -> Result<Estimate> {
    check_plan(plan, weights)?;
    let base = plan.schedule()?;
    let mut levels = Vec::with_capacity(plan.depth);
    let mut traces = Vec::with_capacity(plan.depth);
    for r in 1..=plan.depth {
        let n_r = plan.level_sizes[r - 1];
        let points: Vec<u64> = budgets
            .iter()
            .map(|&b| ((plan.q[r - 1] * b as f64).floor() as u64).min(n_r))
            .collect();
        let mut stream = GaussianStream::new(seed, StreamId::new(r as u32, replication));
        let out = if r == 1 {
            run_coarse_level_traced(model, f, &base, n_r, &mut stream, &points)?
        } else {
            run_correcting_level_traced(model, f, r, plan.root, &base, n_r, &mut stream, &points)?
        };
        levels.push(out.value);
        traces.push(out.checkpoints);
    }
    let combine = |vals: &[&Vec<f64>]| -> Vec<f64> {
        let mut total = vec![0.0; f.outputs()];
        for (w, v) in weights.weights().iter().zip(vals) {
            for (t, x) in total.iter_mut().zip(v.iter()) {
                *t += w * x;
            }
        }
        total
    };
    let value = combine(&levels.iter().collect::<Vec<_>>());
    let checkpoints = (0..budgets.len())
        .map(|c| {
            let vals: Vec<&Vec<f64>> = traces.iter().map(|t| &t[c]).collect();
            if vals.iter().any(|v| v.is_empty()) {
                Vec::new()
            } else {
                combine(&vals)
            }
        })
        .collect();
    Ok(Estimate { value, levels, checkpoints })
}
