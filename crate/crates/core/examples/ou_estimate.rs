//! A handful of independent estimates of E[X^2] = 1 under the OU invariant law.
//!
//! cargo run --release --example ou_estimate

use ml2rgodic::models::make_ou;
use ml2rgodic::optimizer::{build_plan, CalibrationReport, PlanOverrides};
use ml2rgodic::simulate::ml2rgodic_estimate;

fn main() -> ml2rgodic::Result<()> {
    let (model, f, reference) = make_ou(1.0)?;
    let calib = CalibrationReport::exact(&reference)?;
    let plan = build_plan(1e-2, 2, &calib, &PlanOverrides::default())?;
    let weights = plan.weights()?;
    println!("R={} n={} K={:.3e} weights {:?}", plan.depth, plan.n, plan.complexity, weights.weights());
    let mut sq = 0.0;
    let runs = 10;
    for rep in 0..runs {
        let est = ml2rgodic_estimate(&model, &f, &plan, &weights, 2024, rep)?;
        println!("replication {rep}: {:.6}  levels {:?}", est.scalar(), est.levels);
        sq += (est.scalar() - 1.0).powi(2);
    }
    println!("empirical rmse {:.4} (target 1e-2)", (sq / runs as f64).sqrt());
    Ok(())
}
