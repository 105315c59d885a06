//! Depth roots, variance ratios and complexities over parameter grids.

use std::path::PathBuf;

use serde::Serialize;

use crate::error::Result;
use crate::models::{make_ou, MAX_TABULATED_DEPTH};
use crate::optimizer::{build_plan, crude_plan, solve_depth, CalibrationReport, PlanOverrides};
use crate::weights::{psi_bold, psi_uniform};

use super::config::TablesConfig;

/// Reference values from the literature, `(M, eps, x)`.
pub const PUBLISHED_DEPTH_ROOTS: [(usize, f64, f64); 12] = [
    (2, 1e-1, 2.08),
    (2, 1e-2, 2.79),
    (2, 1e-3, 3.38),
    (2, 1e-4, 3.89),
    (3, 1e-1, 1.94),
    (3, 1e-2, 2.56),
    (3, 1e-3, 3.06),
    (3, 1e-4, 3.50),
    (4, 1e-1, 1.87),
    (4, 1e-2, 2.44),
    (4, 1e-3, 2.90),
    (4, 1e-4, 3.30),
];

/// `(M, R, psi(R, M) / R)`.
pub const PUBLISHED_PSI_RATIOS: [(usize, usize, f64); 9] = [
    (2, 2, 2.133),
    (2, 3, 2.591),
    (2, 4, 2.674),
    (3, 2, 1.200),
    (3, 3, 1.278),
    (3, 4, 1.245),
    (4, 2, 0.948),
    (4, 3, 1.021),
    (4, 4, 1.024),
];

/// `(M, sup_R psi(R, M) / R)`.
pub const PUBLISHED_PSI_SUPREMA: [(usize, f64); 3] = [(2, 2.674), (3, 1.278), (4, 1.024)];

/// OU complexities at `eps = 1e-2`, `(sigma, M, R, K)`.
pub const PUBLISHED_COMPLEXITIES: [(f64, usize, usize, f64); 18] = [
    (1.0, 2, 2, 1.09e6),
    (1.0, 2, 3, 1.58e6),
    (1.0, 2, 4, 2.55e6),
    (1.0, 3, 2, 1.11e6),
    (1.0, 3, 3, 1.43e6),
    (1.0, 3, 4, 2.05e6),
    (1.0, 4, 2, 1.21e6),
    (1.0, 4, 3, 1.57e6),
    (1.0, 4, 4, 2.27e6),
    (4.0, 2, 2, 7.02e8),
    (4.0, 2, 3, 5.23e8),
    (4.0, 2, 4, 7.34e8),
    (4.0, 3, 2, 7.17e8),
    (4.0, 3, 3, 4.76e8),
    (4.0, 3, 4, 6.10e8),
    (4.0, 4, 2, 7.56e8),
    (4.0, 4, 3, 4.99e8),
    (4.0, 4, 4, 6.55e8),
];

/// Crude single-level complexities at `eps = 1e-2`, `(sigma, K)`.
pub const PUBLISHED_CRUDE: [(f64, f64); 2] = [(1.0, 6.93e6), (4.0, 1.77e9)];

pub const DEPTH_ROOT_TOLERANCE: f64 = 0.01;
pub const PSI_TOLERANCE: f64 = 0.001;
pub const COMPLEXITY_RELATIVE_TOLERANCE: f64 = 0.01;

/// One cell of the output CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub table: &'static str,
    pub root: usize,
    /// Depth, or 0 where the cell does not depend on it.
    pub depth: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub value: f64,
}

/// Comparison of one computed cell with a reference value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCheck {
    pub table: &'static str,
    pub label: String,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub relative: bool,
    pub pass: bool,
}

impl CellCheck {
    fn new(table: &'static str, label: String, computed: f64, expected: f64, tolerance: f64, relative: bool) -> Self {
        let diff = (computed - expected).abs();
        let pass = if relative { diff <= tolerance * expected.abs() } else { diff <= tolerance + 1e-12 };
        Self { table, label, computed, expected, tolerance, relative, pass }
    }
}

pub fn depth_root(epsilon: f64, root: usize) -> Result<f64> {
    Ok(solve_depth(epsilon, root)?.x)
}

pub fn psi_ratio(depth: usize, root: usize) -> Result<f64> {
    Ok(psi_uniform(depth, root)? / depth as f64)
}

pub fn psi_supremum(root: usize) -> Result<f64> {
    psi_bold(root, MAX_TABULATED_DEPTH.max(40))
}

/// Optimized OU complexity with exact constants and the depth fixed.
pub fn ou_complexity(sigma: f64, epsilon: f64, root: usize, depth: usize) -> Result<f64> {
    let calib = CalibrationReport::exact(&make_ou(sigma)?.2)?;
    let overrides = PlanOverrides { depth: Some(depth), ..Default::default() };
    Ok(build_plan(epsilon, root, &calib, &overrides)?.complexity)
}

/// Optimized single-level OU complexity with exact constants.
pub fn ou_crude_complexity(sigma: f64, epsilon: f64) -> Result<f64> {
    let calib = CalibrationReport::exact(&make_ou(sigma)?.2)?;
    Ok(crude_plan(epsilon, calib.sigma1_sq, calib.c_abs_for(1))?.complexity)
}

pub fn compute_tables(cfg: &TablesConfig) -> Result<Vec<TableCell>> {
    let mut cells = Vec::new();
    let cell = |table, root, depth, epsilon, sigma, value| TableCell { table, root, depth, epsilon, sigma, value };
    for &m in &cfg.roots {
        for &eps in &cfg.epsilons {
            cells.push(cell("depth_root", m, 0, eps, f64::NAN, depth_root(eps, m)?));
        }
    }
    for &m in &cfg.roots {
        for &r in &cfg.depths {
            cells.push(cell("psi_ratio", m, r, f64::NAN, f64::NAN, psi_ratio(r, m)?));
        }
        cells.push(cell("psi_supremum", m, 0, f64::NAN, f64::NAN, psi_supremum(m)?));
    }
    let eps = cfg.complexity_epsilon;
    for &sigma in &cfg.sigmas {
        for &m in &cfg.roots {
            for &r in &cfg.depths {
                cells.push(cell("complexity", m, r, eps, sigma, ou_complexity(sigma, eps, m, r)?));
            }
        }
        cells.push(cell("crude_complexity", 0, 1, eps, sigma, ou_crude_complexity(sigma, eps)?));
    }
    Ok(cells)
}

/// Recomputes every published cell and compares it within the per-table tolerance.
pub fn self_test() -> Result<Vec<CellCheck>> {
    let mut checks = Vec::new();
    for (m, eps, x) in PUBLISHED_DEPTH_ROOTS {
        let label = format!("M={m} eps={eps:e}");
        checks.push(CellCheck::new("depth_root", label, depth_root(eps, m)?, x, DEPTH_ROOT_TOLERANCE, false));
    }
    for (m, r, v) in PUBLISHED_PSI_RATIOS {
        checks.push(CellCheck::new("psi_ratio", format!("M={m} R={r}"), psi_ratio(r, m)?, v, PSI_TOLERANCE, false));
    }
    for (m, v) in PUBLISHED_PSI_SUPREMA {
        checks.push(CellCheck::new("psi_supremum", format!("M={m}"), psi_supremum(m)?, v, PSI_TOLERANCE, false));
    }
    for (sigma, m, r, k) in PUBLISHED_COMPLEXITIES {
        let label = format!("sigma={sigma} M={m} R={r}");
        let computed = ou_complexity(sigma, 1e-2, m, r)?;
        checks.push(CellCheck::new("complexity", label, computed, k, COMPLEXITY_RELATIVE_TOLERANCE, true));
    }
    for (sigma, k) in PUBLISHED_CRUDE {
        let computed = ou_crude_complexity(sigma, 1e-2)?;
        checks.push(CellCheck::new("crude_complexity", format!("sigma={sigma}"), computed, k, COMPLEXITY_RELATIVE_TOLERANCE, true));
    }
    Ok(checks)
}

pub struct TablesOutput {
    pub cells: Vec<TableCell>,
    pub checks: Vec<CellCheck>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_tables(cfg: &TablesConfig, prefix: Option<&str>) -> Result<TablesOutput> {
    let cells = compute_tables(cfg)?;
    let checks = if cfg.self_test { self_test()? } else { Vec::new() };
    let mut files = Vec::new();
    if let Some(prefix) = prefix.or(cfg.output.as_deref()) {
        let path = PathBuf::from(format!("{prefix}_tables.csv"));
        let mut w = super::study::writer(&path)?;
        for c in &cells {
            w.serialize(c)?;
        }
        w.flush()?;
        files.push(path);
        if !checks.is_empty() {
            let path = PathBuf::from(format!("{prefix}_selftest.csv"));
            let mut w = super::study::writer(&path)?;
            for c in &checks {
                w.serialize(c)?;
            }
            w.flush()?;
            files.push(path);
        }
    }
    Ok(TablesOutput { cells, checks, files })
}
