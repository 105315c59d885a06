//! Single-level versus multilevel estimates at the same total complexity.
//!
//! cargo run --release --example compare_crude

use ml2rgodic::harness::{cmd_compare, RunConfig};

fn main() -> ml2rgodic::Result<()> {
    let cfg = RunConfig::from_json(
        r#"{"model": {"type": "ou", "params": {"sigma": 4}}, "epsilon": 0.03, "mode": "compare",
            "replications": 8, "seed": 3, "complexity": 3e6}"#,
    )?;
    let result = cmd_compare(&cfg)?;
    let target = result.target.unwrap();
    let mut complexities: Vec<f64> = result.rows.iter().map(|r| r.complexity).collect();
    complexities.dedup();
    println!("{:>12} {:>14} {:>14}", "complexity", "crude mse", "ml2r mse");
    for c in complexities {
        let rows: Vec<_> = result.rows.iter().filter(|r| r.complexity == c).collect();
        let l = rows.len() as f64;
        let crude = rows.iter().map(|r| (r.crude_estimate - target).powi(2)).sum::<f64>() / l;
        let ml2r = rows.iter().map(|r| (r.ml2r_estimate - target).powi(2)).sum::<f64>() / l;
        println!("{c:>12.3e} {crude:>14.4e} {ml2r:>14.4e}");
    }
    Ok(())
}
