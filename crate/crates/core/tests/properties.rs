//! Property-based checks of the numerical building blocks against test-side oracles.

use ml2rgodic::models::{gibbs_quadrature, DensityConvention};
use ml2rgodic::optimizer::{depth_equation, optimal_gamma1, solve_depth};
use ml2rgodic::rng::{GaussianStream, StreamId};
use ml2rgodic::schedule::{PowerSums, StepSchedule};
use ml2rgodic::simulate::EmpiricalAccumulator;
use ml2rgodic::weights::{solve_general, solve_oracle, solve_uniform, system_residual, vandermonde_power_solution, SERIES_TOLERANCE};
use proptest::prelude::*;

/// Plain Gaussian elimination with partial pivoting.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Weights `W_2..W_R` from the bias equations written directly: for `j = 1..R-1`,
/// `q_1^{-aj} + (M^{-j} - 1) sum_{r>=2} W_r M^{-(r-2)j} q_r^{-aj} = 0`.
fn weights_by_elimination(depth: usize, root: usize, a: f64, q: &[f64]) -> Vec<f64> {
    let m = root as f64;
    let n = depth - 1;
    let mut rows = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for j in 1..=n {
        let jf = j as f64;
        let factor = m.powf(-jf) - 1.0;
        rows.push((2..=depth).map(|r| factor * m.powf(-((r - 2) as f64) * jf) * q[r - 1].powf(-a * jf)).collect());
        rhs.push(-q[0].powf(-a * jf));
    }
    let mut w = vec![1.0];
    w.extend(gauss(rows, rhs));
    w
}

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn close(x: f64, y: f64, rel: f64) -> bool {
    (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_solvers_match_direct_elimination(
        depth in 2usize..=5,
        root in 2usize..=4,
        raw in prop::collection::vec(0.3f64..1.7, 5),
    ) {
        let a = 1.0 / (2 * depth + 1) as f64;
        let q = normalized(raw[..depth].to_vec());
        let expected = weights_by_elimination(depth, root, a, &q);
        let general = solve_general(depth, root, a, &q, SERIES_TOLERANCE).unwrap();
        let oracle = solve_oracle(depth, root, a, &q).unwrap();
        for r in 0..depth {
            prop_assert!(close(general.weights()[r], expected[r], 1e-9), "general r={} {} vs {}", r, general.weights()[r], expected[r]);
            prop_assert!(close(oracle.weights()[r], expected[r], 1e-9), "oracle r={} {} vs {}", r, oracle.weights()[r], expected[r]);
        }
        prop_assert!(system_residual(&general) < 1e-9);
    }

    #[test]
    fn uniform_small_weights_sum_to_one(depth in 2usize..=10, root in 2usize..=5) {
        let ws = solve_uniform(depth, root, 1.0 / (2 * depth + 1) as f64).unwrap();
        let total: f64 = ws.small_weights().unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert_eq!(ws.weights()[0], 1.0);
    }

    #[test]
    fn power_sums_grow_by_step_powers(g in 0.05f64..5.0, a in 0.05f64..0.95, n in 1u64..400, l_max in 1usize..5) {
        let sched = StepSchedule::new(g, a).unwrap();
        let before = sched.power_sums(n, l_max);
        let mut after = before.clone();
        let next = sched.step(n + 1);
        after.push(next);
        prop_assert_eq!(after.len(), n + 1);
        for l in 1..=l_max {
            let inc = after.get(l) - before.get(l);
            prop_assert!((inc - next.powi(l as i32)).abs() <= 1e-12 * after.get(l));
            // against a naive sum
            let naive: f64 = (1..=n).map(|k| sched.step(k).powi(l as i32)).sum();
            prop_assert!((before.get(l) - naive).abs() <= 1e-12 * naive);
        }
    }

    #[test]
    fn refined_schedule_is_scaled(g in 0.05f64..5.0, a in 0.05f64..0.95, r in 2usize..6, m in 2usize..5, k in 1u64..10_000) {
        let sched = StepSchedule::new(g, a).unwrap();
        let fine = sched.refined(r, m);
        let factor = (m as f64).powi(r as i32 - 2);
        prop_assert!((fine.step(k) * factor - sched.step(k)).abs() <= 1e-14 * sched.step(k));
    }

    #[test]
    fn accumulator_is_weighted_mean(values in prop::collection::vec((0.001f64..3.0, -10.0f64..10.0), 1..200)) {
        let mut acc = EmpiricalAccumulator::new(1);
        for &(eta, v) in &values {
            acc.update_scalar(eta, v);
        }
        let num: f64 = values.iter().map(|(e, v)| e * v).sum();
        let den: f64 = values.iter().map(|(e, _)| e).sum();
        prop_assert!((acc.value()[0] - num / den).abs() <= 1e-11 * (1.0 + (num / den).abs()));
        prop_assert!((acc.weight() - den).abs() <= 1e-12 * den);
    }

    #[test]
    fn quadrature_ignores_constant_shift(sigma in 0.5f64..3.0, quartic in 0.0f64..1.0, quadratic in 0.1f64..2.0) {
        let v = move |x: f64| quartic * x.powi(4) + quadratic * x * x;
        let shifted = move |x: f64| v(x) + 7.0;
        let f = |x: f64| x * x;
        let a = gibbs_quadrature(&v, sigma, &f, DensityConvention::Langevin).unwrap();
        let b = gibbs_quadrature(&shifted, sigma, &f, DensityConvention::Langevin).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn quadrature_matches_gaussian_moments(sigma in 0.3f64..4.0, k in 0.2f64..3.0) {
        // V = k x^2 / 2 gives density exp(-k x^2 / sigma^2), variance sigma^2 / (2k)
        let v = move |x: f64| 0.5 * k * x * x;
        let second = gibbs_quadrature(&v, sigma, &|x| x * x, DensityConvention::Langevin).unwrap();
        prop_assert!((second - sigma * sigma / (2.0 * k)).abs() <= 1e-9 * second);
        let fourth = gibbs_quadrature(&v, sigma, &|x| x.powi(4), DensityConvention::Langevin).unwrap();
        prop_assert!((fourth - 3.0 * (sigma * sigma / (2.0 * k)).powi(2)).abs() <= 1e-9 * fourth);
    }

    #[test]
    fn vandermonde_power_identities(
        raw in prop::collection::vec(0.05f64..1.0, 2..6),
        c in -1.5f64..1.5,
    ) {
        // spread the nodes so they stay distinct
        let nodes: Vec<f64> = raw.iter().enumerate().map(|(i, x)| x + i as f64 * 1.1).collect();
        let y = vandermonde_power_solution(&nodes, c);
        let n = nodes.len() as i32;
        let moment = |p: i32| -> f64 { y.iter().zip(&nodes).map(|(yr, xr)| yr * xr.powi(p)).sum() };
        let scale = |p: i32| -> f64 { y.iter().zip(&nodes).map(|(yr, xr)| (yr * xr.powi(p)).abs()).sum::<f64>().max(1.0) };
        for p in 0..n {
            prop_assert!((moment(p) - c.powi(p)).abs() <= 1e-10 * scale(p));
        }
        let prod: f64 = nodes.iter().map(|x| c - x).product();
        let sum: f64 = nodes.iter().sum();
        prop_assert!((moment(n) - (c.powi(n) - prod)).abs() <= 1e-10 * scale(n));
        prop_assert!((moment(n + 1) - (c.powi(n + 1) - (sum + c) * prod)).abs() <= 1e-10 * scale(n + 1));
    }

    #[test]
    fn optimal_step_minimizes_first_order_error(depth in 1usize..6, root in 2usize..5, s1 in 0.1f64..500.0, c in 0.001f64..2.0) {
        let r = depth as f64;
        let a_coef = 2.0 * r / (2.0 * r + 1.0) * s1;
        let b_coef = 4.0 * (root as f64).powf(-r * (r - 1.0)) * c * c;
        let objective = |u: f64| a_coef / u + b_coef * u.powf(2.0 * r);
        // golden-section search on log u
        let (mut lo, mut hi) = (-20.0f64, 20.0f64);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = hi - phi * (hi - lo);
            let x2 = lo + phi * (hi - lo);
            if objective(x1.exp()) < objective(x2.exp()) { hi = x2 } else { lo = x1 }
        }
        let numeric = (0.5 * (lo + hi)).exp();
        let g = optimal_gamma1(depth, root, s1, c);
        prop_assert!((g - numeric).abs() <= 1e-6 * numeric, "{} vs {}", g, numeric);
    }

    #[test]
    fn depth_root_is_monotone_and_bounded(log_eps in -12.0f64..-0.1, root in 2usize..6) {
        let eps = 10f64.powf(log_eps);
        let sol = solve_depth(eps, root).unwrap();
        prop_assert!(depth_equation(eps, root, sol.x).abs() < 1e-9);
        let bound = 0.5 + (0.25 + 2.0 * (1.0 / eps).ln() / (root as f64).ln()).sqrt();
        prop_assert!(sol.x <= bound + 1e-9);
        prop_assert_eq!(sol.depth, (sol.x.ceil() as usize).max(2));
        let smaller = solve_depth(eps / 10.0, root).unwrap();
        prop_assert!(smaller.x > sol.x);
        if root > 2 {
            prop_assert!(solve_depth(eps, root - 1).unwrap().x >= sol.x);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct(seed in any::<u64>(), level in 0u32..10, rep in 0u32..1000) {
        let mut a = GaussianStream::new(seed, StreamId::new(level, rep));
        let mut b = GaussianStream::new(seed, StreamId::new(level, rep));
        let mut c = GaussianStream::new(seed, StreamId::new(level, rep + 1));
        let xa: Vec<f64> = (0..8).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.standard_normal()).collect();
        let xc: Vec<f64> = (0..8).map(|_| c.standard_normal()).collect();
        prop_assert_eq!(&xa, &xb);
        prop_assert_ne!(&xa, &xc);
    }
}

#[test]
fn power_sums_match_closed_form_for_constant_steps() {
    let sched = StepSchedule::with_clamp(1.0, 0.5, Some(0.25)).unwrap();
    // steps are min(k^{-1/2}, 1/4) = 1/4 up to k = 16
    let sums: PowerSums = sched.power_sums(16, 2);
    assert_eq!(sums.get(1), 4.0);
    assert_eq!(sums.get(2), 1.0);
}
