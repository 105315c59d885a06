use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ml2rgodic::harness::{self, RunConfig, TablesConfig};
use ml2rgodic::Error;

#[derive(Parser)]
#[command(version, about = "Multilevel Richardson-Romberg estimates of invariant-measure integrals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the estimator plan without simulating.
    Plan(Common),
    /// Replication study of the planned estimator.
    Run(Common),
    /// Crude and multilevel estimates at matched complexity.
    Compare(Common),
    /// Depth roots, variance ratios and complexity tables.
    Tables {
        #[command(flatten)]
        common: Common,
        /// Diff against the reference values and fail on mismatch.
        #[arg(long)]
        self_test: bool,
    },
}

fn load(common: &Common) -> ml2rgodic::Result<RunConfig> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn prefix(cfg: &RunConfig) -> String {
    cfg.output.clone().unwrap_or_else(|| "ml2rgodic".to_string())
}

fn execute(cli: Cli) -> ml2rgodic::Result<bool> {
    match cli.command {
        Command::Plan(common) => {
            let cfg = load(&common)?;
            let report = harness::cmd_plan(&cfg)?;
            let json = serde_json::to_string_pretty(&report).expect("plan report serializes");
            println!("{json}");
            if let Some(out) = &cfg.output {
                let path = PathBuf::from(format!("{out}_plan.json"));
                harness::ensure_parent(&path)?;
                std::fs::write(path, json + "\n")?;
            }
        }
        Command::Run(common) => {
            let cfg = load(&common)?;
            let result = harness::cmd_run(&cfg)?;
            for path in harness::write_study(&result, &prefix(&cfg))? {
                eprintln!("wrote {}", path.display());
            }
            let s = &result.summary;
            println!("mean {:.6e}  rmse {:.6e}  variance {:.6e}  ci95 ±{:.3e}", s.mean, s.rmse, s.variance, s.ci95_half);
        }
        Command::Compare(common) => {
            let cfg = load(&common)?;
            let result = harness::cmd_compare(&cfg)?;
            let path = harness::write_compare(&result, &prefix(&cfg))?;
            eprintln!("wrote {}", path.display());
            if let Some((crude, ml2r)) = result.final_mse() {
                println!("complexity {:.3e}: crude mse {crude:.4e}, ml2r mse {ml2r:.4e}", result.plan.complexity);
            }
        }
        Command::Tables { common, self_test } => {
            let mut cfg = match &common.config {
                Some(path) => TablesConfig::from_path(path)?,
                None => TablesConfig::default(),
            };
            cfg.self_test |= self_test;
            let out = harness::cmd_tables(&cfg, common.out.as_deref())?;
            for c in &out.cells {
                println!("{:<17} M={} R={} eps={:e} sigma={} -> {:.6}", c.table, c.root, c.depth, c.epsilon, c.sigma, c.value);
            }
            let failed: Vec<_> = out.checks.iter().filter(|c| !c.pass).collect();
            for c in &failed {
                eprintln!("mismatch {} {}: computed {:.6} expected {}", c.table, c.label, c.computed, c.expected);
            }
            if !out.checks.is_empty() {
                eprintln!("self-test: {}/{} cells within tolerance", out.checks.len() - failed.len(), out.checks.len());
            }
            return Ok(failed.is_empty());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter(_) => ExitCode::from(2),
                Error::BlowUp { .. } => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
