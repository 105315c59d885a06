//! Optimized plans for the Ornstein-Uhlenbeck process with closed-form constants.
//!
//! cargo run --release --example plan_ou

use ml2rgodic::models::make_ou;
use ml2rgodic::optimizer::{best_plan, build_plan, crude_plan, predicted_mse, CalibrationReport, PlanOverrides};

fn main() -> ml2rgodic::Result<()> {
    for sigma in [1.0, 4.0] {
        let (_, _, reference) = make_ou(sigma)?;
        let calib = CalibrationReport::exact(&reference)?;
        println!("sigma = {sigma}");
        for eps in [1e-1, 1e-2, 1e-3] {
            let plan = build_plan(eps, 2, &calib, &PlanOverrides::default())?;
            let mse = predicted_mse(&plan, &calib, &plan.weights()?)?;
            println!(
                "  eps {eps:.0e}: R={} gamma1={:.3} rho={:.3} n={} levels={:?} K={:.3e}  predicted rmse {:.2e}",
                plan.depth,
                plan.gamma1,
                plan.rho.unwrap_or(f64::NAN),
                plan.n,
                plan.level_sizes,
                plan.complexity,
                mse.total().sqrt()
            );
        }
        let best = best_plan(1e-2, &[2, 3, 4], &[2, 3, 4], &calib, &PlanOverrides::default())?;
        let crude = crude_plan(1e-2, calib.sigma1_sq, calib.c_abs_for(1))?;
        println!(
            "  cheapest at eps 1e-2: M={} R={} K={:.3e} (single level: {:.3e})",
            best.root, best.depth, best.complexity, crude.complexity
        );
    }
    Ok(())
}
