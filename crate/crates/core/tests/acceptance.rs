//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 2 5 9`.

use std::time::Instant;

use ml2rgodic::harness::{cmd_compare, cmd_run, RunConfig};
use ml2rgodic::models::{make_ou, TestFunction};
use ml2rgodic::optimizer::{
    build_plan, calibrate_sigma1, calibrate_sigma22, clt_variance, crude_plan, solve_depth, CalibrationReport,
    EstimatorPlan, PlanOverrides,
};
use ml2rgodic::rng::{GaussianStream, StreamId};
use ml2rgodic::schedule::StepSchedule;
use ml2rgodic::simulate::{ml2rgodic_estimate, record_correcting_path};
use ml2rgodic::weights::{
    bias1_coefficient, psi_bold, psi_uniform, solve_general, solve_oracle, solve_uniform, system_residual,
    SERIES_TOLERANCE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Fixed before any statistical check was run; never tuned.
const SEED: u64 = 20261017;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn weight_solvers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_gap: f64 = 0.0;
    let mut worst_abs_gap: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut cases = 0;
    for depth in 2..=6 {
        let a = 1.0 / (2 * depth + 1) as f64;
        for root in [2, 3, 4] {
            let uniform = vec![1.0 / depth as f64; depth];
            let closed = solve_uniform(depth, root, a).unwrap();
            let mut qs = vec![uniform];
            while qs.len() < 51 {
                let raw: Vec<f64> = (0..depth).map(|_| rng.random_range(0.2..1.8)).collect();
                let total: f64 = raw.iter().sum();
                qs.push(raw.iter().map(|v| v / total).collect());
            }
            for (i, q) in qs.iter().enumerate() {
                let general = solve_general(depth, root, a, q, SERIES_TOLERANCE).unwrap();
                let oracle = solve_oracle(depth, root, a, q).unwrap();
                let mut sets = vec![&general, &oracle];
                if i == 0 {
                    sets.push(&closed);
                }
                for s in &sets {
                    worst_residual = worst_residual.max(system_residual(s));
                    for t in &sets {
                        for (x, y) in s.weights().iter().zip(t.weights()) {
                            // random resizers give weights up to ~1e5, so compare on that scale
                            let scale = x.abs().max(y.abs()).max(1.0);
                            worst_gap = worst_gap.max((x - y).abs() / scale);
                            worst_abs_gap = worst_abs_gap.max((x - y).abs());
                        }
                    }
                }
                cases += 1;
            }
        }
    }
    outcome(
        worst_gap <= 1e-10 && worst_residual < 1e-10,
        format!(
            "{cases} resizer vectors, max scaled solver gap {worst_gap:.1e} (absolute {worst_abs_gap:.1e}), max residual {worst_residual:.1e}"
        ),
    )
}

fn table_depth_roots() -> Outcome {
    let expected = [
        (2, [2.08, 2.79, 3.38, 3.89]),
        (3, [1.94, 2.56, 3.06, 3.50]),
        (4, [1.87, 2.44, 2.90, 3.30]),
    ];
    let mut worst: f64 = 0.0;
    for (root, row) in expected {
        for (eps, x) in [1e-1, 1e-2, 1e-3, 1e-4].into_iter().zip(row) {
            worst = worst.max((solve_depth(eps, root).unwrap().x - x).abs());
        }
    }
    outcome(worst <= 0.01 + 1e-12, format!("12 cells, max |diff| {worst:.4} (tol 0.01)"))
}

fn table_psi() -> Outcome {
    let expected = [(2, [2.133, 2.591, 2.674], 2.674), (3, [1.200, 1.278, 1.245], 1.278), (4, [0.948, 1.021, 1.024], 1.024)];
    let mut worst: f64 = 0.0;
    for (root, row, sup) in expected {
        for (depth, v) in (2..=4).zip(row) {
            worst = worst.max((psi_uniform(depth, root).unwrap() / depth as f64 - v).abs());
        }
        worst = worst.max((psi_bold(root, 40).unwrap() - sup).abs());
    }
    outcome(worst <= 0.001 + 1e-12, format!("15 values, max |diff| {worst:.5} (tol 0.001)"))
}

fn table_complexity() -> Outcome {
    let expected = [
        (1.0, [[1.09e6, 1.58e6, 2.55e6], [1.11e6, 1.43e6, 2.05e6], [1.21e6, 1.57e6, 2.27e6]]),
        (4.0, [[7.02e8, 5.23e8, 7.34e8], [7.17e8, 4.76e8, 6.10e8], [7.56e8, 4.99e8, 6.55e8]]),
    ];
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for (sigma, rows) in expected {
        let calib = CalibrationReport::exact(&make_ou(sigma).unwrap().2).unwrap();
        for (root, row) in (2..=4).zip(rows) {
            for (depth, k) in (2..=4).zip(row) {
                let overrides = PlanOverrides { depth: Some(depth), ..Default::default() };
                let got = build_plan(1e-2, root, &calib, &overrides).unwrap().complexity;
                let rel = (got - k).abs() / k;
                worst = worst.max(rel);
                failures += usize::from(rel > 0.01);
            }
        }
    }
    let mut crude = Vec::new();
    for (sigma, k) in [(1.0, 6.93e6), (4.0, 1.77e9)] {
        let calib = CalibrationReport::exact(&make_ou(sigma).unwrap().2).unwrap();
        let got = crude_plan(1e-2, calib.sigma1_sq, calib.c_abs_for(1)).unwrap().complexity;
        let rel = (got - k).abs() / k;
        worst = worst.max(rel);
        failures += usize::from(rel > 0.01);
        crude.push(format!("{got:.3e} vs {k:.2e}"));
    }
    outcome(
        failures == 0,
        format!("{failures}/20 cells off by more than 1%, max rel diff {worst:.3}; crude {}", crude.join(", ")),
    )
}

fn coupling_identities() -> Outcome {
    let (model, f, _) = make_ou(1.0).unwrap();
    let base = StepSchedule::new(0.7, 1.0 / 7.0).unwrap();
    let mut worst_identity: f64 = 0.0;
    let mut exact_sums = true;
    for (r, m) in [(2, 2), (3, 3), (4, 2)] {
        let mut stream = GaussianStream::new(SEED, StreamId::new(r as u32, 0));
        let path = record_correcting_path(&model, &f, r, m, &base, 1000, &mut stream).unwrap();
        let fine = weighted_mean(&f, &path.fine_states, &path.fine_steps);
        let coarse = weighted_mean(&f, &path.coarse_states, &path.coarse_steps);
        worst_identity = worst_identity.max((path.value[0] - (fine - coarse)).abs());
        for (k, inc) in path.coarse_increments.iter().enumerate() {
            let sum = path.fine_increments[k * m..(k + 1) * m].iter().fold(0.0, |acc, w| acc + w[0]);
            exact_sums &= sum == inc[0];
        }
    }
    outcome(
        worst_identity <= 1e-12 && exact_sums,
        format!("max |mu - (fine - coarse)| {worst_identity:.1e}, increments sum exactly: {exact_sums}"),
    )
}

fn weighted_mean(f: &TestFunction, states: &[Vec<f64>], steps: &[f64]) -> f64 {
    let num: f64 = steps.iter().zip(states).map(|(g, x)| g * f.eval(x)).sum();
    num / steps.iter().sum::<f64>()
}

fn ou_config(sigma: f64, eps: f64, extra: &str) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{"model": {{"type": "ou", "params": {{"sigma": {sigma}}}}}, "epsilon": {eps}, "M": 2, "seed": {SEED}{extra}}}"#
    ))
    .unwrap()
}

fn ou_accuracy() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (sigma, eps) in [(1.0, 1e-2), (4.0, 3e-2)] {
        let result = cmd_run(&ou_config(sigma, eps, r#", "replications": 100"#)).unwrap();
        let rmse = result.summary.rmse;
        pass &= rmse <= 2.0 * eps;
        parts.push(format!("sigma={sigma} eps={eps}: rmse {rmse:.3e} (bound {:.0e})", 2.0 * eps));
    }
    outcome(pass, parts.join("; "))
}

fn calibration_exactness() -> Outcome {
    let (model, f, _) = make_ou(1.0).unwrap();
    let s1 = calibrate_sigma1(&model, &f, 100, 100_000, 1.0, SEED).unwrap();
    let s22 = calibrate_sigma22(&model, &f, 2, 100, 100_000, 1.0, SEED).unwrap();
    let (r1, r22) = (s1 / 4.0, s22 / 4.0);
    let ok1 = (0.8..=1.2).contains(&r1);
    let ok22 = (0.75..=1.25).contains(&r22);
    outcome(
        ok1 && ok22,
        format!("sigma1^2/4 = {r1:.3} in [0.8,1.2]: {ok1}; sigma22^2/4 = {r22:.4} in [0.75,1.25]: {ok22}"),
    )
}

fn clt_variance_check() -> Outcome {
    let (model, f, _) = make_ou(1.0).unwrap();
    let n = 100_000u64;
    let a = 0.25;
    let mut plan = EstimatorPlan::fixed(0.0, 2, 2, 1.0, n);
    plan.a = a;
    let weights = solve_uniform(2, 2, a).unwrap();
    let scale = (n as f64).powf((1.0 - a) / 2.0);
    let errors: Vec<f64> = (0..200u32)
        .into_par_iter()
        .map(|rep| scale * (ml2rgodic_estimate(&model, &f, &plan, &weights, SEED, rep).unwrap().scalar() - 1.0))
        .collect();
    let l = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / l;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (l - 1.0);
    let theory = clt_variance(a, 0.5, 1.0, 4.0);
    let rel = (var - theory).abs() / theory;
    outcome(rel <= 0.25, format!("sample variance {var:.3} vs {theory:.3} (rel diff {rel:.3}, tol 0.25)"))
}

fn bias_cancellation() -> Outcome {
    let mut worst: f64 = 0.0;
    for depth in 2..=8 {
        for root in [2, 3, 4] {
            let ws = solve_uniform(depth, root, 1.0 / (2 * depth + 1) as f64).unwrap();
            for l in 2..=depth {
                worst = worst.max(bias1_coefficient(&ws, l).abs());
            }
        }
    }
    outcome(worst < 1e-12, format!("max |coefficient| {worst:.1e} over R<=8, M in 2..=4"))
}

const MATCHED_COMPLEXITY: f64 = 1e7;

fn compare_ou4(calibration: &str) -> ml2rgodic::harness::CompareResult {
    let extra = format!(r#", "mode": "compare", "replications": 50, "complexity": {MATCHED_COMPLEXITY:e}{calibration}"#);
    cmd_compare(&ou_config(4.0, 3e-2, &extra)).unwrap()
}

fn robustness(exact_mse: f64) -> Outcome {
    let defaults = compare_ou4(r#", "calibration": {"kind": "pilot", "replications": 100, "n": 100000, "gamma1": 1.0}"#);
    let (_, default_mse) = defaults.final_mse().unwrap();
    let ratio = (default_mse / exact_mse).sqrt();
    outcome(
        ratio <= 3.0,
        format!(
            "rmse with defaults {:.3e} vs exact constants {:.3e} at K={MATCHED_COMPLEXITY:.0e} (ratio {ratio:.2}, tol 3)",
            default_mse.sqrt(),
            exact_mse.sqrt()
        ),
    )
}

fn dominance(result: &ml2rgodic::harness::CompareResult) -> Outcome {
    let (crude, ml2r) = result.final_mse().unwrap();
    outcome(ml2r < crude, format!("K={MATCHED_COMPLEXITY:.0e}, 50 replications: ml2r mse {ml2r:.3e} vs crude {crude:.3e}"))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: usize| selected.is_empty() || selected.contains(&id);
    let titles = [
        "weight solvers agree",
        "depth roots table",
        "variance ratio table",
        "complexity table and crude baselines",
        "coupling identities",
        "OU statistical accuracy",
        "calibration on OU",
        "CLT variance",
        "first-order bias cancellation",
        "robustness to default constants",
        "dominance over the crude estimator",
    ];
    let mut failed = Vec::new();
    let mut report = |id: usize, started: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{tag}] {}: {} ({:.1}s)", titles[id - 1], o.detail, started.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(id);
        }
    };
    let checks: [(usize, fn() -> Outcome); 8] = [
        (1, weight_solvers),
        (2, table_depth_roots),
        (3, table_psi),
        (4, table_complexity),
        (5, coupling_identities),
        (6, ou_accuracy),
        (7, calibration_exactness),
        (8, clt_variance_check),
    ];
    for (id, check) in checks {
        if wanted(id) {
            let t = Instant::now();
            report(id, t, check());
        }
    }
    if wanted(9) {
        let t = Instant::now();
        report(9, t, bias_cancellation());
    }
    if wanted(10) || wanted(11) {
        let t = Instant::now();
        let exact = compare_ou4("");
        if wanted(11) {
            report(11, t, dominance(&exact));
        }
        if wanted(10) {
            let t = Instant::now();
            report(10, t, robustness(exact.final_mse().unwrap().1));
        }
    }
    if failed.is_empty() {
        println!("all selected criteria passed");
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
