//! Langevin diffusion in a non-convex potential with pilot-calibrated constants.
//!
//! cargo run --release --example double_well

use ml2rgodic::models::{double_well_potential, gibbs_quadrature, make_double_well, DensityConvention};
use ml2rgodic::optimizer::{build_plan, calibrate_sigma1, calibrate_sigma22, CalibrationReport, PlanOverrides, Provenance};
use ml2rgodic::simulate::ml2rgodic_estimate;

fn main() -> ml2rgodic::Result<()> {
    let sigma = 2.0;
    let (model, f, reference) = make_double_well(sigma)?;
    let nu = reference.nu_f.unwrap();
    let other = gibbs_quadrature(&double_well_potential, sigma, &|x| x * x, DensityConvention::OverTwoSigmaSquared)?;
    println!("reference {nu:.5} (density exp(-V/(2 sigma^2)) would give {other:.5})");

    let s1 = calibrate_sigma1(&model, &f, 50, 20_000, 0.5, 1)?;
    let s22 = calibrate_sigma22(&model, &f, 2, 50, 20_000, 0.5, 1)?;
    let calib = CalibrationReport::defaults(s1, s1 / s22, Provenance::Calibrated)?;
    let overrides = PlanOverrides { clamp: Some(0.5), ..Default::default() };
    let plan = build_plan(2e-2, 2, &calib, &overrides)?;
    let weights = plan.weights()?;
    println!("plan: R={} gamma1={:.3} n={} K={:.3e}", plan.depth, plan.gamma1, plan.n, plan.complexity);
    for rep in 0..5 {
        let est = ml2rgodic_estimate(&model, &f, &plan, &weights, 99, rep)?;
        println!("replication {rep}: {:.5} (error {:+.4})", est.scalar(), est.scalar() - nu);
    }
    Ok(())
}
