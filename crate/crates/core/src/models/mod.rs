//! Diffusion models, test functions and known reference quantities.

mod ewa;
mod quadrature;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ewa::{make_ewa, EwaData};
pub use quadrature::{gibbs_quadrature, integrate, DensityConvention};

/// Vector field `x -> out`, both of length `dim`.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Diffusion coefficient of a model.
#[derive(Clone)]
pub enum Diffusion {
    /// `s * I`; requires `noise_dim == dim`.
    Scalar(f64),
    /// State-dependent `dim x noise_dim` matrix written row-major into the output slice.
    Matrix(VectorField),
}

/// `dX = b(X) dt + s(X) dW` with `X` in `R^dim` and `W` in `R^noise_dim`.
#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    dim: usize,
    noise_dim: usize,
    x0: Vec<f64>,
    drift: VectorField,
    diffusion: Diffusion,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("x0", &self.x0)
            .finish_non_exhaustive()
    }
}

impl DiffusionModel {
    pub fn new(
        name: impl Into<String>,
        x0: Vec<f64>,
        noise_dim: usize,
        drift: VectorField,
        diffusion: Diffusion,
    ) -> Result<Self> {
        let dim = x0.len();
        if dim == 0 || noise_dim == 0 {
            return Err(Error::DimensionMismatch("model dimensions must be positive".into()));
        }
        if matches!(diffusion, Diffusion::Scalar(_)) && noise_dim != dim {
            return Err(Error::DimensionMismatch(format!(
                "scalar diffusion needs noise_dim == dim, got {noise_dim} and {dim}"
            )));
        }
        Ok(Self { name: name.into(), dim, noise_dim, x0, drift, diffusion })
    }

    /// One-dimensional model from scalar drift and diffusion functions.
    pub fn scalar<B, S>(name: impl Into<String>, x0: f64, drift: B, diffusion: S) -> Self
    where
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim: 1,
            noise_dim: 1,
            x0: vec![x0],
            drift: Arc::new(move |x, out| out[0] = drift(x[0])),
            diffusion: Diffusion::Matrix(Arc::new(move |x, out| out[0] = diffusion(x[0]))),
        }
    }

    /// One-dimensional model with additive noise.
    pub fn scalar_additive<B>(name: impl Into<String>, x0: f64, drift: B, sigma: f64) -> Self
    where
        B: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim: 1,
            noise_dim: 1,
            x0: vec![x0],
            drift: Arc::new(move |x, out| out[0] = drift(x[0])),
            diffusion: Diffusion::Scalar(sigma),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "initial state has length {}, model dimension is {}",
                x0.len(),
                self.dim
            )));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        out
    }

    /// Diffusion matrix at `x`, row-major `dim x noise_dim`.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.noise_dim];
        match &self.diffusion {
            Diffusion::Scalar(s) => {
                for i in 0..self.dim {
                    out[i * self.noise_dim + i] = *s;
                }
            }
            Diffusion::Matrix(g) => g(x, &mut out),
        }
        out
    }
}

/// Vector-valued test function; scalar functions have `outputs == 1`.
#[derive(Clone)]
pub struct TestFunction {
    label: String,
    outputs: usize,
    eval: VectorField,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("outputs", &self.outputs)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn scalar<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { label: label.into(), outputs: 1, eval: Arc::new(move |x, out| out[0] = f(x)) }
    }

    pub fn vector(label: impl Into<String>, outputs: usize, eval: VectorField) -> Self {
        assert!(outputs >= 1);
        Self { label: label.into(), outputs, eval }
    }

    /// The coordinate maps `x -> x_j`, `j = 0..dim`.
    pub fn coordinates(dim: usize) -> Self {
        Self::vector("coordinates", dim, Arc::new(|x, out| out.copy_from_slice(x)))
    }

    pub fn constant(c: f64) -> Self {
        Self::scalar("constant", move |_| c)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    /// First output at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut out = vec![0.0; self.outputs];
        self.eval_into(x, &mut out);
        out[0]
    }
}

/// Known values attached to a model/function pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub nu_f: Option<f64>,
    pub sigma1_sq: Option<f64>,
    pub sigma22_sq: Option<f64>,
    pub sigma21_sq: Option<f64>,
    /// Depth `R` to `|c_{R+1}|`.
    pub c_abs: BTreeMap<usize, f64>,
    pub c_tilde: Option<f64>,
}

impl ReferenceData {
    pub fn c_abs_for(&self, depth: usize) -> Option<f64> {
        self.c_abs.get(&depth).copied()
    }
}

/// Largest depth for which closed-form bias coefficients are tabulated.
pub const MAX_TABULATED_DEPTH: usize = 24;

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")))
    }
}

/// Ornstein-Uhlenbeck process `dX = -X/2 dt + sigma dW` with `f(x) = x^2`.
pub fn make_ou(sigma: f64) -> Result<(DiffusionModel, TestFunction, ReferenceData)> {
    check_sigma(sigma)?;
    let model = DiffusionModel::scalar_additive("ou", 0.0, |x| -0.5 * x, sigma);
    let f = TestFunction::scalar("square", |x| x[0] * x[0]);
    let s2 = sigma * sigma;
    let s4 = s2 * s2;
    let reference = ReferenceData {
        nu_f: Some(s2),
        sigma1_sq: Some(4.0 * s4),
        sigma22_sq: Some(4.0 * s4),
        sigma21_sq: Some(5.0 * s4),
        c_abs: (1..=MAX_TABULATED_DEPTH).map(|r| (r, s2 / 4f64.powi(r as i32))).collect(),
        c_tilde: Some(0.25),
    };
    Ok((model, f, reference))
}

/// Non-convex potential `x^2 - log(1 + x^2)`.
pub fn double_well_potential(x: f64) -> f64 {
    x * x - (x * x).ln_1p()
}

/// Langevin diffusion in the double-well potential, `f(x) = x^2`.
///
/// The reference value is the quadrature of `x^2` against the invariant
/// density `exp(-2V/sigma^2)` of `dX = -V'(X) dt + sigma dW`.
pub fn make_double_well(sigma: f64) -> Result<(DiffusionModel, TestFunction, ReferenceData)> {
    check_sigma(sigma)?;
    let model = DiffusionModel::scalar_additive(
        "double_well",
        0.0,
        |x| -2.0 * x + 2.0 * x / (1.0 + x * x),
        sigma,
    );
    let f = TestFunction::scalar("square", |x| x[0] * x[0]);
    let nu = gibbs_quadrature(&double_well_potential, sigma, &|x| x * x, DensityConvention::Langevin)?;
    let reference = ReferenceData { nu_f: Some(nu), ..Default::default() };
    Ok((model, f, reference))
}

/// One-dimensional model with polynomial drift `sum_i coeffs[i] x^i` and constant diffusion.
pub fn make_polynomial(
    drift_coeffs: Vec<f64>,
    sigma: f64,
    x0: f64,
) -> Result<DiffusionModel> {
    check_sigma(sigma)?;
    if drift_coeffs.is_empty() {
        return Err(Error::InvalidParameter("drift polynomial has no coefficients".into()));
    }
    Ok(DiffusionModel::scalar_additive(
        "polynomial",
        x0,
        move |x| drift_coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
        sigma,
    ))
}

/// `x -> x^power` on the first coordinate.
pub fn power_function(power: i32) -> TestFunction {
    TestFunction::scalar(format!("power{power}"), move |x| x[0].powi(power))
}
