//! Pilot estimates of the variance constants, compared with their OU values.
//!
//! cargo run --release --example calibration

use ml2rgodic::models::make_ou;
use ml2rgodic::optimizer::{calibrate_sigma1, calibrate_sigma22};

fn main() -> ml2rgodic::Result<()> {
    let (model, f, reference) = make_ou(1.0)?;
    let s1 = calibrate_sigma1(&model, &f, 100, 100_000, 1.0, 17)?;
    let s22 = calibrate_sigma22(&model, &f, 2, 100, 100_000, 1.0, 17)?;
    println!("first level   sigma1^2  = {s1:.4}  (closed form {})", reference.sigma1_sq.unwrap());
    println!("correcting    sigma22^2 = {s22:.4}");
    println!("ratio theta1 = {:.2}", s1 / s22);
    // With additive noise the fine/coarse martingale terms cancel, so the
    // correcting variance is far smaller than the first-level one.
    Ok(())
}
