//! Weights, depth roots and variance ratios for a few (R, M).
//!
//! cargo run --release --example weights_tables

use ml2rgodic::harness::tables::{depth_root, psi_ratio, psi_supremum};
use ml2rgodic::weights::{solve_general, solve_uniform, system_residual, SERIES_TOLERANCE};

fn main() -> ml2rgodic::Result<()> {
    for root in [2, 3, 4] {
        for depth in 2..=5 {
            let a = 1.0 / (2 * depth + 1) as f64;
            let ws = solve_uniform(depth, root, a)?;
            println!(
                "M={root} R={depth}: W = {:?}  residual {:.1e}",
                ws.weights().iter().map(|w| format!("{w:.5}")).collect::<Vec<_>>(),
                system_residual(&ws)
            );
        }
    }

    // non-uniform resizers go through the series solver
    let q = [0.5, 0.3, 0.2];
    let ws = solve_general(3, 2, 1.0 / 7.0, &q, SERIES_TOLERANCE)?;
    println!("q = {q:?}: W = {:?}", ws.weights());

    println!("\ndepth roots x(eps, M)");
    for root in [2, 3, 4] {
        let row: Vec<String> = [1e-1, 1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&e| depth_root(e, root).map(|x| format!("{x:.2}")))
            .collect::<ml2rgodic::Result<_>>()?;
        println!("M={root}: {}", row.join("  "));
    }

    println!("\nvariance ratios psi(R, M)/R for R = 2, 3, 4 and their supremum");
    for root in [2, 3, 4] {
        let row: Vec<String> = (2..=4).map(|r| psi_ratio(r, root).map(|v| format!("{v:.3}"))).collect::<ml2rgodic::Result<_>>()?;
        println!("M={root}: {}  sup {:.3}", row.join("  "), psi_supremum(root)?);
    }
    Ok(())
}
