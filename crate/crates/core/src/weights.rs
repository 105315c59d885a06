//! Weights cancelling the first `R - 1` bias terms of the multilevel estimator.
//!
//! For depth `R`, root `M`, step exponent `a` and resizers `q` (level `r` runs
//! `q_r n` steps), the weights solve `W_1 = 1` and, for `l = 2..R`,
//! `W_1 q_1^{-a(l-1)} + (M^{1-l} - 1) sum_{r>=2} W_r M^{-(r-2)(l-1)} q_r^{-a(l-1)} = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::compensated_sum;

/// Series truncation threshold used by [`solve_general`] by default.
pub const SERIES_TOLERANCE: f64 = 1e-14;
const SERIES_CAP: usize = 200;
const ADMISSIBILITY_GAP: f64 = 1e-9;

/// Solved weights and the residual bias coefficients of orders `R+1` and `R+2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    depth: usize,
    root: usize,
    a: f64,
    q: Vec<f64>,
    weights: Vec<f64>,
    small_weights: Option<Vec<f64>>,
    tilde: [f64; 2],
}

impl WeightSet {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn exponent(&self) -> f64 {
        self.a
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `W_1 .. W_R`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `w_1 .. w_R` with `W_r = w_r + .. + w_R`, for uniform resizers only.
    pub fn small_weights(&self) -> Option<&[f64]> {
        self.small_weights.as_deref()
    }

    /// Bias coefficient of order `R+1`.
    pub fn tilde_next(&self) -> f64 {
        self.tilde[0]
    }

    /// Bias coefficient of order `R+2`.
    pub fn tilde_second(&self) -> f64 {
        self.tilde[1]
    }

    /// Overwrites a weight; meant for perturbation tests.
    pub fn with_weight(mut self, r: usize, value: f64) -> Self {
        self.weights[r - 1] = value;
        self
    }
}

fn check_common(depth: usize, root: usize, a: f64) -> Result<()> {
    if depth < 2 {
        return Err(Error::InvalidParameter(format!("depth must be at least 2, got {depth}")));
    }
    if root < 2 {
        return Err(Error::InvalidParameter(format!("root must be at least 2, got {root}")));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!("step exponent must lie in (0,1), got {a}")));
    }
    Ok(())
}

fn check_resizers(depth: usize, root: usize, a: f64, q: &[f64]) -> Result<()> {
    if q.len() != depth {
        return Err(Error::DimensionMismatch(format!("{} resizers for depth {depth}", q.len())));
    }
    if q.iter().any(|v| !(*v > 0.0)) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::NotAdmissible("resizers must be positive and sum to one".into()));
    }
    let m = root as f64;
    let keys: Vec<f64> = q.iter().enumerate().map(|(i, qr)| qr * m.powf(-((i + 1) as f64) / a)).collect();
    for i in 0..depth {
        for j in i + 1..depth {
            if (keys[i] - keys[j]).abs() <= ADMISSIBILITY_GAP * keys[i].abs().max(keys[j].abs()) {
                return Err(Error::NotAdmissible(format!(
                    "q_{}/M^({}/a) and q_{}/M^({}/a) coincide",
                    i + 1,
                    i + 1,
                    j + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// `(-1)^k` as a float.
fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Closed-form weights for uniform resizers `q_r = 1/R`.
pub fn solve_uniform(depth: usize, root: usize, a: f64) -> Result<WeightSet> {
    check_common(depth, root, a)?;
    let m = root as f64;
    let small: Vec<f64> = (1..=depth)
        .map(|r| {
            (1..=depth)
                .filter(|&s| s != r)
                .map(|s| 1.0 / (1.0 - m.powi(s as i32 - r as i32)))
                .product()
        })
        .collect();
    let weights: Vec<f64> = (1..=depth).map(|r| compensated_sum(small[r - 1..].iter().copied())).collect();
    let rf = depth as f64;
    let half = m.powf(-(rf * (rf - 1.0)) / 2.0);
    let tilde = [
        sign(depth - 1) * rf.powf(a * rf) * half,
        sign(depth - 1) * rf.powf(a * (rf + 1.0)) * half * (1.0 - m.powi(-(depth as i32))) / (1.0 - 1.0 / m),
    ];
    let mut ws = WeightSet {
        depth,
        root,
        a,
        q: vec![1.0 / rf; depth],
        weights,
        small_weights: Some(small),
        tilde,
    };
    // W_1 = w_1 + .. + w_R is one analytically
    ws.weights[0] = 1.0;
    Ok(ws)
}

/// Sums `term(k)` for `k >= 0` until terms stay below `tol` times the partial sum.
///
/// Terms may vanish for small `k`, so stopping is only considered once `k > min_terms`.
fn series<F: FnMut(usize) -> f64>(mut term: F, tol: f64, min_terms: usize, what: &'static str) -> Result<f64> {
    let mut parts = Vec::with_capacity(64);
    let mut small_run = 0;
    for k in 0..SERIES_CAP {
        let t = term(k);
        parts.push(t);
        let partial = compensated_sum(parts.iter().copied());
        if k > min_terms && t.abs() <= tol * partial.abs() {
            small_run += 1;
            if small_run >= 2 {
                return Ok(partial);
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::NoConvergence { what, iterations: SERIES_CAP })
}

/// Weights for general admissible resizers, from their series representation.
pub fn solve_general(depth: usize, root: usize, a: f64, q: &[f64], tol: f64) -> Result<WeightSet> {
    check_common(depth, root, a)?;
    check_resizers(depth, root, a, q)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("series tolerance must be positive, got {tol}")));
    }
    let m = root as f64;
    let ratio = |s: usize, r: usize| (q[s - 1] / q[r - 1]).powf(a);
    let mut weights = vec![1.0];
    for r in 2..=depth {
        let sum = series(
            |k| {
                let mut p = m.powi(-(k as i32));
                for s in 2..=depth {
                    if s != r {
                        p *= (1.0 - m.powi(s as i32 - 2 - k as i32) * ratio(s, 1))
                            / (1.0 - m.powi(s as i32 - r as i32) * ratio(s, r));
                    }
                }
                p
            },
            tol,
            depth + 1,
            "weight series",
        )?;
        weights.push(m.powi(r as i32 - 2) * ratio(r, 1) * sum);
    }

    // nodes M^{-r} (q_1/q_{r+2})^a, r = 0..R-2
    let nodes: Vec<f64> = (0..depth - 1).map(|r| m.powi(-(r as i32)) * ratio(1, r + 2)).collect();
    let rf = depth as f64;
    let t1 = series(
        |k| {
            let t = m.powi(-(k as i32));
            t * nodes.iter().map(|x| t - x).product::<f64>()
        },
        tol,
        depth + 1,
        "order R+1 bias series",
    )?;
    let t2 = series(
        |k| {
            let t = m.powi(-(k as i32));
            t * (t + nodes.iter().sum::<f64>()) * nodes.iter().map(|x| t - x).product::<f64>()
        },
        tol,
        depth + 1,
        "order R+2 bias series",
    )?;
    let tilde = [
        (1.0 - m.powf(-rf)) / q[0].powf(a * rf) * t1,
        (1.0 - m.powf(-rf - 1.0)) / q[0].powf(a * (rf + 1.0)) * t2,
    ];
    Ok(WeightSet { depth, root, a, q: q.to_vec(), weights, small_weights: None, tilde })
}

/// Weights by direct elimination on the rescaled Vandermonde system.
///
/// With nodes `x_r = M^{-(r-1)} (q_1/q_{r+1})^a` and unknowns `V_r = x_r W_{r+1}`,
/// the system reads `sum_r V_r x_r^{j-1} = 1 / (1 - M^{-j})`, `j = 1..R-1`.
pub fn solve_oracle(depth: usize, root: usize, a: f64, q: &[f64]) -> Result<WeightSet> {
    check_common(depth, root, a)?;
    check_resizers(depth, root, a, q)?;
    let m = root as f64;
    let n = depth - 1;
    let nodes: Vec<f64> = (1..=n).map(|r| m.powi(-(r as i32 - 1)) * (q[0] / q[r]).powf(a)).collect();
    let mut matrix = vec![0.0; n * n];
    for j in 0..n {
        for r in 0..n {
            matrix[j * n + r] = nodes[r].powi(j as i32);
        }
    }
    let rhs: Vec<f64> = (1..=n).map(|j| 1.0 / (1.0 - m.powi(-(j as i32)))).collect();
    let scaled = solve_dense(matrix, rhs)?;
    let mut weights = vec![1.0];
    weights.extend(scaled.iter().zip(&nodes).map(|(v, x)| v / x));
    let mut ws = WeightSet { depth, root, a, q: q.to_vec(), weights, small_weights: None, tilde: [0.0; 2] };
    ws.tilde = [tilde_from_definition(&ws, 1), tilde_from_definition(&ws, 2)];
    Ok(ws)
}

/// Bias coefficient of order `R+i`:
/// `W_1 q_1^{-a j} + (M^{-j} - 1) sum_{r>=2} W_r M^{-(r-2) j} q_r^{-a j}` with `j = R+i-1`.
pub fn tilde_from_definition(ws: &WeightSet, i: usize) -> f64 {
    let j = (ws.depth + i - 1) as i32;
    system_row(ws, j)
}

/// Left-hand side of the system row of power `j` (`j = l - 1`).
fn system_row(ws: &WeightSet, j: i32) -> f64 {
    let m = ws.root as f64;
    let a = ws.a;
    let tail = compensated_sum(
        (2..=ws.depth).map(|r| ws.weights[r - 1] * m.powi(-(r as i32 - 2) * j) * ws.q[r - 1].powf(-a * j as f64)),
    );
    ws.weights[0] * ws.q[0].powf(-a * j as f64) + (m.powi(-j) - 1.0) * tail
}

/// Largest absolute violation of the linear system, including `|W_1 - 1|`.
pub fn system_residual(ws: &WeightSet) -> f64 {
    (2..=ws.depth)
        .map(|l| system_row(ws, l as i32 - 1).abs())
        .fold((ws.weights[0] - 1.0).abs(), f64::max)
}

/// `4R^2/(4R^2-1) sum_{r>=2} W_r^2`.
pub fn psi(ws: &WeightSet) -> f64 {
    let r2 = (ws.depth * ws.depth) as f64;
    4.0 * r2 / (4.0 * r2 - 1.0) * compensated_sum(ws.weights[1..].iter().map(|w| w * w))
}

/// `psi` of the uniform weights of depth `depth` and root `root`.
pub fn psi_uniform(depth: usize, root: usize) -> Result<f64> {
    Ok(psi(&solve_uniform(depth, root, 1.0 / (2 * depth + 1) as f64)?))
}

/// Supremum over depths `2..=depth_cap` of `psi(R, M) / R`.
///
/// Fails if the maximum is still moving within the last ten depths.
pub fn psi_bold(root: usize, depth_cap: usize) -> Result<f64> {
    if depth_cap < 12 {
        return Err(Error::InvalidParameter(format!("depth cap must be at least 12, got {depth_cap}")));
    }
    let mut running = Vec::with_capacity(depth_cap);
    let mut best = f64::NEG_INFINITY;
    for depth in 2..=depth_cap {
        best = best.max(psi_uniform(depth, root)? / depth as f64);
        running.push(best);
    }
    let settled = running[running.len() - 10..].iter().all(|v| (v - best).abs() <= 1e-9);
    if !settled {
        return Err(Error::NoConvergence { what: "supremum of psi(R, M) / R", iterations: depth_cap });
    }
    Ok(best)
}

/// `W_1 + sum_{r>=2} W_r (M^{1-l} - 1) M^{-(r-2)(l-1)}`, the coefficient of the common
/// first-order bias bracket of order `l`; zero for uniform resizers.
pub fn bias1_coefficient(ws: &WeightSet, l: usize) -> f64 {
    assert!(l >= 2 && l <= ws.depth, "order must lie in 2..=R");
    let m = ws.root as f64;
    let j = l as i32 - 1;
    ws.weights[0]
        + compensated_sum(
            (2..=ws.depth).map(|r| ws.weights[r - 1] * (m.powi(-j) - 1.0) * m.powi(-(r as i32 - 2) * j)),
        )
}

/// Bound `B_inf / a_inf` on uniform weights, where `a_r = prod_{k<=r} (1 - M^{-k})` and
/// `B_inf = sum_{r>=0} M^{-r(r-1)/2} / a_r`.
pub fn uniform_weight_bound(root: usize) -> f64 {
    let m = root as f64;
    let mut a_r = 1.0;
    let mut b_sum = 1.0;
    for r in 1..200 {
        a_r *= 1.0 - m.powi(-r);
        let b = m.powf(-((r * (r - 1)) as f64) / 2.0) / a_r;
        b_sum += b;
        if b < 1e-18 {
            break;
        }
    }
    let a_inf: f64 = (1..200).map(|k| 1.0 - m.powi(-k)).product();
    b_sum / a_inf
}

/// Solution of `sum_r y_r x_r^(l-1) = c^(l-1)`, `l = 1..n`, by Lagrange interpolation.
pub fn vandermonde_power_solution(nodes: &[f64], c: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|r| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(s, _)| s != r)
                .map(|(_, xs)| (c - xs) / (nodes[r] - xs))
                .product()
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a row-major square system.
pub fn solve_dense(mut matrix: Vec<f64>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    if matrix.len() != n * n {
        return Err(Error::DimensionMismatch(format!("{}-entry matrix for {n} unknowns", matrix.len())));
    }
    let scale = matrix.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| matrix[i * n + col].abs().total_cmp(&matrix[j * n + col].abs()))
            .expect("non-empty range");
        if matrix[pivot * n + col].abs() <= 1e-300_f64.max(scale * f64::EPSILON * 1e-3) {
            return Err(Error::Singular);
        }
        if pivot != col {
            for k in 0..n {
                matrix.swap(col * n + k, pivot * n + k);
            }
            rhs.swap(col, pivot);
        }
        let diag = matrix[col * n + col];
        for row in col + 1..n {
            let factor = matrix[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                matrix[row * n + k] -= factor * matrix[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| matrix[row * n + k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / matrix[row * n + row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_small_cases() {
        let ws = solve_uniform(2, 2, 0.2).unwrap();
        assert_eq!(ws.small_weights().unwrap(), &[-1.0, 2.0]);
        assert_eq!(ws.weights(), &[1.0, 2.0]);

        let ws = solve_uniform(3, 2, 0.2).unwrap();
        let w = ws.small_weights().unwrap();
        assert_relative_eq!(w[0], 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(w[1], -2.0, max_relative = 1e-14);
        assert_relative_eq!(w[2], 8.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(ws.weights()[1], 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(ws.weights()[2], 8.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn uniform_tilde_closed_form() {
        let ws = solve_uniform(2, 2, 0.2).unwrap();
        assert_relative_eq!(ws.tilde_next(), -(2f64.powf(0.4)) / 2.0, max_relative = 1e-14);
        assert_relative_eq!(ws.tilde_next(), -0.659754, max_relative = 1e-6);
        for depth in 2..=6 {
            for root in 2..=4 {
                let ws = solve_uniform(depth, root, 0.15).unwrap();
                assert_relative_eq!(ws.tilde_next(), tilde_from_definition(&ws, 1), max_relative = 1e-10, epsilon = 1e-12);
                assert_relative_eq!(ws.tilde_second(), tilde_from_definition(&ws, 2), max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_level_general_weight() {
        let ws = solve_general(2, 2, 0.2, &[0.7, 0.3], SERIES_TOLERANCE).unwrap();
        assert_relative_eq!(ws.weights()[1], 2.0 * (3.0f64 / 7.0).powf(0.2), max_relative = 1e-13);
        assert_relative_eq!(ws.weights()[1], 1.688242, max_relative = 1e-6);
        let oracle = solve_oracle(2, 2, 0.2, &[0.7, 0.3]).unwrap();
        assert_relative_eq!(oracle.weights()[1], ws.weights()[1], max_relative = 1e-13);
    }

    #[test]
    fn general_matches_uniform() {
        for depth in 2..=6 {
            for root in 2..=4 {
                let a = 1.0 / 7.0;
                let u = solve_uniform(depth, root, a).unwrap();
                let g = solve_general(depth, root, a, u.q(), SERIES_TOLERANCE).unwrap();
                for (x, y) in u.weights().iter().zip(g.weights()) {
                    assert!((x - y).abs() < 1e-12, "R={depth} M={root}: {x} vs {y}");
                }
                assert!((u.tilde_next() - g.tilde_next()).abs() < 1e-10);
                assert!((u.tilde_second() - g.tilde_second()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn oracle_residual() {
        let ws = solve_oracle(3, 2, 1.0 / 7.0, &[0.5, 0.3, 0.2]).unwrap();
        assert!(system_residual(&ws) < 1e-12);
        let g = solve_general(3, 2, 1.0 / 7.0, &[0.5, 0.3, 0.2], SERIES_TOLERANCE).unwrap();
        for (x, y) in ws.weights().iter().zip(g.weights()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_detects_perturbation() {
        let ws = solve_uniform(2, 2, 0.2).unwrap();
        assert!(system_residual(&ws) < 1e-10);
        let w2 = ws.weights()[1];
        assert!(system_residual(&ws.with_weight(2, w2 + 0.1)) >= 0.01);
        assert!(system_residual(&solve_uniform(4, 3, 0.2).unwrap()) < 1e-10);
    }

    #[test]
    fn psi_values() {
        let ws = solve_uniform(2, 2, 0.2).unwrap();
        assert_relative_eq!(psi(&ws), 64.0 / 15.0, max_relative = 1e-14);
        let ws = solve_uniform(3, 2, 0.2).unwrap();
        assert_relative_eq!(psi(&ws), 272.0 / 35.0, max_relative = 1e-13);
        assert!((psi_uniform(3, 3).unwrap() / 3.0 - 1.278).abs() < 5e-4);
    }

    #[test]
    fn psi_bold_values() {
        assert!((psi_bold(2, 40).unwrap() - 2.674).abs() < 5e-4);
        assert!((psi_bold(3, 40).unwrap() - 1.278).abs() < 5e-4);
        assert!((psi_bold(4, 40).unwrap() - 1.024).abs() < 5e-4);
    }

    #[test]
    fn bias_coefficients_by_hand() {
        let ws = solve_uniform(2, 2, 0.2).unwrap();
        assert_eq!(bias1_coefficient(&ws, 2), 0.0);
        let ws = solve_uniform(3, 2, 0.2).unwrap();
        assert!(bias1_coefficient(&ws, 3).abs() < 1e-15);
        let g = solve_general(3, 2, 0.2, &[0.5, 0.3, 0.2], SERIES_TOLERANCE).unwrap();
        assert!(bias1_coefficient(&g, 2).abs() > 1e-6);
    }

    #[test]
    fn uniform_weights_are_bounded() {
        for root in 2..=4 {
            let bound = uniform_weight_bound(root);
            for depth in 2..=12 {
                let ws = solve_uniform(depth, root, 0.1).unwrap();
                assert!(ws.weights().iter().all(|w| w.abs() <= bound), "M={root} R={depth}");
            }
        }
    }

    #[test]
    fn uniform_weights_ignore_exponent() {
        let a = solve_uniform(5, 3, 0.1).unwrap();
        let b = solve_uniform(5, 3, 0.3).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn inadmissible_resizers_rejected() {
        // q_r / M^{r/a} equal for r = 1, 2 when q_2 = q_1 M^{1/a}
        let a = 0.5;
        let q1 = 1.0 / 5.0;
        let q = [q1, q1 * 4.0];
        assert!(matches!(solve_general(2, 2, a, &q, SERIES_TOLERANCE), Err(Error::NotAdmissible(_))));
        assert!(solve_oracle(2, 2, 0.2, &[0.6, 0.6]).is_err());
    }

    #[test]
    fn dense_solver_pivots() {
        let x = solve_dense(vec![0.0, 1.0, 1.0, 1.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        assert!(matches!(solve_dense(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0]), Err(Error::Singular)));
    }

    #[test]
    fn vandermonde_identities() {
        let nodes = [0.3, -1.2, 2.5, 0.9];
        let c = 0.7;
        let y = vandermonde_power_solution(&nodes, c);
        let prod: f64 = nodes.iter().map(|x| c - x).product();
        let s4: f64 = y.iter().zip(&nodes).map(|(y, x)| y * x.powi(4)).sum();
        let s5: f64 = y.iter().zip(&nodes).map(|(y, x)| y * x.powi(5)).sum();
        assert_relative_eq!(s4, c.powi(4) - prod, max_relative = 1e-12);
        assert_relative_eq!(s5, c.powi(5) - (nodes.iter().sum::<f64>() + c) * prod, max_relative = 1e-12);
    }
}
