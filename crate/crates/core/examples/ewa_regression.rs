//! Posterior mean of a sparse linear regression by a 500-dimensional Langevin diffusion.
//!
//! cargo run --release --example ewa_regression

use ml2rgodic::models::{make_ewa, EwaData};
use ml2rgodic::optimizer::EstimatorPlan;
use ml2rgodic::simulate::ml2rgodic_estimate_traced;

fn main() -> ml2rgodic::Result<()> {
    let data = EwaData::generate(1, 500, 100, 15)?;
    let theta0 = data.theta0.clone().unwrap();
    let (model, f, _) = make_ewa(&data)?;
    let mut plan = EstimatorPlan::fixed(0.05, 3, 2, 1.0, 30_000);
    plan.clamp = Some(1.0 / data.p as f64);
    let weights = plan.weights()?;
    let budgets = [1_000, 3_000, 10_000, 30_000];
    let est = ml2rgodic_estimate_traced(&model, &f, &plan, &weights, 5, 0, &budgets)?;
    for (b, theta) in budgets.iter().zip(&est.checkpoints) {
        let dist = theta.iter().zip(&theta0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        println!("coarse budget {b:>6}: |theta - theta0| = {dist:.3}");
    }
    Ok(())
}
