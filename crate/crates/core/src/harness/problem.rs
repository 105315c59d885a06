//! Turning a model configuration into a simulable problem.

use crate::error::{Error, Result};
use crate::models::{
    double_well_potential, gibbs_quadrature, make_ewa, DensityConvention, EwaData, make_double_well, make_ou, make_polynomial, power_function, DiffusionModel, ReferenceData,
    TestFunction,
};

use super::config::{ModelConfig, RunConfig};

/// How a (possibly vector) estimate is reduced to the reported number.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// First output, compared with a known value if there is one.
    Scalar { reference: Option<f64> },
    /// Euclidean distance of the whole vector to a target; the error is the distance itself.
    DistanceTo(Vec<f64>),
    /// Euclidean norm, no reference.
    Norm,
}

impl Metric {
    /// `(estimate, abs_error)`; the error is NaN when nothing is known.
    pub fn apply(&self, value: &[f64]) -> (f64, f64) {
        match self {
            Self::Scalar { reference } => {
                let v = value[0];
                (v, reference.map_or(f64::NAN, |r| (v - r).abs()))
            }
            Self::DistanceTo(target) => {
                let d = value.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (d, d)
            }
            Self::Norm => (value.iter().map(|a| a * a).sum::<f64>().sqrt(), f64::NAN),
        }
    }

    /// Value the estimate column should approach.
    pub fn target(&self) -> Option<f64> {
        match self {
            Self::Scalar { reference } => *reference,
            Self::DistanceTo(_) => Some(0.0),
            Self::Norm => None,
        }
    }
}

/// Model, test function, known constants and reporting conventions.
#[derive(Clone)]
pub struct Problem {
    pub model: DiffusionModel,
    pub function: TestFunction,
    pub reference: ReferenceData,
    pub metric: Metric,
    /// Step cap applied unless overridden.
    pub default_clamp: Option<f64>,
    /// Density convention behind a quadrature reference, if one was used.
    pub convention: Option<&'static str>,
    /// Whether `reference` carries the constants of the configured function.
    pub has_exact_constants: bool,
}

enum FunctionChoice {
    Power(i32),
    Coordinates,
}

fn parse_function(name: &str) -> Result<FunctionChoice> {
    match name {
        "square" => Ok(FunctionChoice::Power(2)),
        "identity" => Ok(FunctionChoice::Power(1)),
        "coordinates" => Ok(FunctionChoice::Coordinates),
        _ => name
            .strip_prefix("power")
            .and_then(|k| k.parse::<i32>().ok())
            .filter(|k| (1..=16).contains(k))
            .map(FunctionChoice::Power)
            .ok_or_else(|| {
                Error::Config(format!("function: unknown '{name}' (square, identity, coordinates, power1..power16)"))
            }),
    }
}

fn gaussian_moment(variance: f64, k: i32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let double_factorial: f64 = (1..k).step_by(2).map(f64::from).product();
    variance.powi(k / 2) * double_factorial
}

fn scalar_only(choice: FunctionChoice, model: &str) -> Result<i32> {
    match choice {
        FunctionChoice::Power(k) => Ok(k),
        FunctionChoice::Coordinates => {
            Err(Error::Config(format!("function: 'coordinates' is only meaningful for model ewa, not {model}")))
        }
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let choice = parse_function(&cfg.function)?;
    match &cfg.model {
        ModelConfig::Ou { sigma } => {
            let k = scalar_only(choice, "ou")?;
            let (model, square, reference) = make_ou(*sigma)?;
            let (function, reference, exact) = if k == 2 {
                (square, reference, true)
            } else {
                let nu = gaussian_moment(sigma * sigma, k);
                (power_function(k), ReferenceData { nu_f: Some(nu), ..Default::default() }, false)
            };
            let metric = Metric::Scalar { reference: reference.nu_f };
            Ok(Problem { model, function, reference, metric, default_clamp: None, convention: None, has_exact_constants: exact })
        }
        ModelConfig::DoubleWell { sigma } => {
            let k = scalar_only(choice, "double_well")?;
            let (model, square, reference) = make_double_well(*sigma)?;
            let (function, reference) = if k == 2 {
                (square, reference)
            } else {
                let nu = gibbs_quadrature(&double_well_potential, *sigma, &|x| x.powi(k), DensityConvention::Langevin)?;
                (power_function(k), ReferenceData { nu_f: Some(nu), ..Default::default() })
            };
            let metric = Metric::Scalar { reference: reference.nu_f };
            Ok(Problem {
                model,
                function,
                reference,
                metric,
                default_clamp: None,
                convention: Some("langevin"),
                has_exact_constants: false,
            })
        }
        ModelConfig::Custom { drift, sigma, x0, reference } => {
            let k = scalar_only(choice, "custom")?;
            let model = make_polynomial(drift.clone(), *sigma, *x0).map_err(|e| Error::Config(format!("model.params: {e}")))?;
            let (nu, convention) = match reference {
                Some(v) => (Some(*v), None),
                None => {
                    // potential V = -integral of the drift polynomial
                    let coeffs = drift.clone();
                    let potential = move |x: f64| -> f64 {
                        -coeffs.iter().enumerate().rev().fold(0.0, |acc, (i, c)| acc * x + c / (i + 1) as f64) * x
                    };
                    match gibbs_quadrature(&potential, *sigma, &|x| x.powi(k), DensityConvention::Langevin) {
                        Ok(v) => (Some(v), Some("langevin")),
                        Err(_) => (None, None),
                    }
                }
            };
            Ok(Problem {
                model,
                function: power_function(k),
                reference: ReferenceData { nu_f: nu, ..Default::default() },
                metric: Metric::Scalar { reference: nu },
                default_clamp: None,
                convention,
                has_exact_constants: false,
            })
        }
        ModelConfig::Ewa { data, sigma_noise, p, n_obs, sparsity, data_seed } => {
            if !matches!(choice, FunctionChoice::Coordinates) {
                return Err(Error::Config(format!("function: model ewa estimates the posterior mean, use 'coordinates' not '{}'", cfg.function)));
            }
            let data = match data {
                Some(path) => {
                    let noise = sigma_noise
                        .ok_or_else(|| Error::Config("model.params.sigma_noise: required with a data file".into()))?;
                    EwaData::from_csv(std::path::Path::new(path), noise)?
                }
                None => EwaData::generate(*data_seed, *p, *n_obs, *sparsity)
                    .map_err(|e| Error::Config(format!("model.params: {e}")))?,
            };
            let metric = match &data.theta0 {
                Some(t) => Metric::DistanceTo(t.clone()),
                None => Metric::Norm,
            };
            let clamp = 1.0 / data.p as f64;
            let (model, function, reference) = make_ewa(&data)?;
            Ok(Problem { model, function, reference, metric, default_clamp: Some(clamp), convention: None, has_exact_constants: false })
        }
    }
}
