//! A user-defined two-dimensional diffusion with multiplicative noise.
//!
//! cargo run --release --example custom_model

use std::sync::Arc;

use ml2rgodic::models::{Diffusion, DiffusionModel, TestFunction};
use ml2rgodic::optimizer::EstimatorPlan;
use ml2rgodic::simulate::ml2rgodic_estimate;

fn main() -> ml2rgodic::Result<()> {
    // gradient flow of |x|^4 / 4 + |x|^2 / 2 with noise scaled by 1 + x_1^2 / 10
    let drift = Arc::new(|x: &[f64], out: &mut [f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        out[0] = -(1.0 + r2) * x[0];
        out[1] = -(1.0 + r2) * x[1];
    });
    let diffusion = Diffusion::Matrix(Arc::new(|x: &[f64], out: &mut [f64]| {
        let s = 1.0 + 0.1 * x[0] * x[0];
        out.copy_from_slice(&[s, 0.0, 0.0, 1.0]);
    }));
    let model = DiffusionModel::new("quartic_2d", vec![0.0, 0.0], 2, drift, diffusion)?;
    let radius = TestFunction::scalar("radius_sq", |x| x[0] * x[0] + x[1] * x[1]);

    let mut plan = EstimatorPlan::fixed(0.01, 3, 2, 0.5, 200_000);
    plan.clamp = Some(0.1);
    let weights = plan.weights()?;
    for rep in 0..4 {
        let est = ml2rgodic_estimate(&model, &radius, &plan, &weights, 8, rep)?;
        println!("replication {rep}: E|X|^2 ~ {:.5}", est.scalar());
    }
    Ok(())
}
