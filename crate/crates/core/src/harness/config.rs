//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Ou {
        sigma: f64,
    },
    DoubleWell {
        sigma: f64,
    },
    Ewa {
        /// CSV with one observation per row, response in the last column.
        #[serde(default)]
        data: Option<String>,
        #[serde(default)]
        sigma_noise: Option<f64>,
        #[serde(default = "default_p")]
        p: usize,
        #[serde(default = "default_n_obs")]
        n_obs: usize,
        #[serde(default = "default_sparsity")]
        sparsity: usize,
        #[serde(default)]
        data_seed: u64,
    },
    /// One-dimensional `dX = P(X) dt + sigma dW` with polynomial drift coefficients
    /// (constant term first).
    Custom {
        drift: Vec<f64>,
        sigma: f64,
        #[serde(default)]
        x0: f64,
        /// Known value of the integral, if any.
        #[serde(default)]
        reference: Option<f64>,
    },
}

fn default_p() -> usize {
    500
}
fn default_n_obs() -> usize {
    100
}
fn default_sparsity() -> usize {
    15
}

/// `"M": 3` or `"M": "sweep"` (tries 2, 3 and 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RootChoice {
    Fixed(usize),
    Named(RootKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKeyword {
    Sweep,
}

impl Default for RootChoice {
    fn default() -> Self {
        Self::Fixed(2)
    }
}

impl RootChoice {
    pub fn roots(self) -> Vec<usize> {
        match self {
            Self::Fixed(m) => vec![m],
            Self::Named(RootKeyword::Sweep) => vec![2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Ml2r,
    Crude,
    Compare,
}

/// How the unknown constants are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CalibrationConfig {
    /// Closed-form constants of the model (OU only).
    Exact,
    /// Pilot runs for the two variances; the rest defaults to one.
    Pilot {
        #[serde(default = "default_pilot_replications")]
        replications: usize,
        #[serde(default = "default_pilot_steps")]
        n: u64,
        #[serde(default = "default_pilot_gamma1")]
        gamma1: f64,
    },
    /// Given or unit variance constants; the rest defaults to one.
    Defaults {
        #[serde(default = "one")]
        sigma1_sq: f64,
        #[serde(default = "one")]
        theta1: f64,
    },
}

fn default_pilot_replications() -> usize {
    100
}
fn default_pilot_steps() -> u64 {
    100_000
}
fn default_pilot_gamma1() -> f64 {
    1.0
}
fn one() -> f64 {
    1.0
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self::Exact
    }
}

/// Replacements for computed plan or calibration values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(rename = "R", default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub gamma1: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma1_sq: Option<f64>,
    #[serde(default)]
    pub sigma22_sq: Option<f64>,
    #[serde(default)]
    pub theta2: Option<f64>,
    #[serde(default)]
    pub c_abs: Option<f64>,
    #[serde(default)]
    pub clamp: Option<f64>,
    #[serde(default)]
    pub kappa0: Option<f64>,
    /// Coarse budget `n` instead of the one implied by `epsilon`.
    #[serde(default)]
    pub n: Option<u64>,
}

/// Top-level configuration of `plan`, `run` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// `square` (default), `coordinates` or `power<k>`.
    #[serde(default = "default_function")]
    pub function: String,
    pub epsilon: f64,
    #[serde(rename = "M", default)]
    pub root: RootChoice,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub overrides: Overrides,
    /// Output path prefix for CSV files.
    #[serde(default)]
    pub output: Option<String>,
    /// Also write running estimates at geometric complexity checkpoints.
    #[serde(default)]
    pub trace: bool,
    /// Total complexity per method in `compare` (defaults to the plan's).
    #[serde(default)]
    pub complexity: Option<f64>,
}

fn default_function() -> String {
    "square".to_string()
}
fn default_replications() -> usize {
    1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("{field}: {why}")));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon", format!("must lie in (0,1), got {}", self.epsilon));
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if let RootChoice::Fixed(m) = self.root {
            if m < 2 {
                return bad("M", format!("must be at least 2, got {m}"));
            }
        }
        if let Some(d) = self.overrides.depth {
            if d < 2 {
                return bad("overrides.R", format!("must be at least 2, got {d}"));
            }
        }
        if let Some(c) = self.complexity {
            if !(c >= 1.0) {
                return bad("complexity", format!("must be at least 1, got {c}"));
            }
        }
        match &self.model {
            ModelConfig::Ou { sigma } | ModelConfig::DoubleWell { sigma } | ModelConfig::Custom { sigma, .. }
                if !(*sigma > 0.0) =>
            {
                bad("model.params.sigma", format!("must be positive, got {sigma}"))
            }
            ModelConfig::Custom { drift, .. } if drift.is_empty() => {
                bad("model.params.drift", "needs at least one coefficient".into())
            }
            _ => Ok(()),
        }
    }
}

/// Configuration of the `tables` command; every list has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesConfig {
    #[serde(default = "default_table_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(rename = "M", default = "default_table_roots")]
    pub roots: Vec<usize>,
    #[serde(rename = "R", default = "default_table_depths")]
    pub depths: Vec<usize>,
    /// Noise levels of the OU complexity table.
    #[serde(default = "default_table_sigmas")]
    pub sigmas: Vec<f64>,
    /// Target RMSE of the complexity table.
    #[serde(default = "default_complexity_epsilon")]
    pub complexity_epsilon: f64,
    #[serde(default)]
    pub output: Option<String>,
    /// Also diff against the reference values of the literature.
    #[serde(default)]
    pub self_test: bool,
}

fn default_table_epsilons() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}
fn default_table_roots() -> Vec<usize> {
    vec![2, 3, 4]
}
fn default_table_depths() -> Vec<usize> {
    vec![2, 3, 4]
}
fn default_table_sigmas() -> Vec<f64> {
    vec![1.0, 4.0]
}
fn default_complexity_epsilon() -> f64 {
    1e-2
}

impl Default for TablesConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TablesConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}
