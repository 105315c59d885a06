//! Sparse linear regression posterior sampled by Langevin dynamics.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Diffusion, DiffusionModel, ReferenceData, TestFunction, VectorField};
use crate::error::{Error, Result};

/// Design matrix (row-major, `n_obs x p`), responses and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct EwaData {
    pub n_obs: usize,
    pub p: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma_noise: f64,
    /// Ground-truth coefficients when the data were simulated.
    pub theta0: Option<Vec<f64>>,
}

impl EwaData {
    pub fn new(n_obs: usize, p: usize, x: Vec<f64>, y: Vec<f64>, sigma_noise: f64) -> Result<Self> {
        if n_obs == 0 || p == 0 {
            return Err(Error::DimensionMismatch("empty design matrix".into()));
        }
        if x.len() != n_obs * p {
            return Err(Error::DimensionMismatch(format!(
                "design has {} entries, expected {n_obs} x {p}",
                x.len()
            )));
        }
        if y.len() != n_obs {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {n_obs} observations",
                y.len()
            )));
        }
        if !(sigma_noise > 0.0) {
            return Err(Error::InvalidParameter(format!("noise level must be positive, got {sigma_noise}")));
        }
        Ok(Self { n_obs, p, x, y, sigma_noise, theta0: None })
    }

    /// Rademacher design, `theta0 = (1,..,1,0,..,0)` with `sparsity` ones and
    /// Gaussian noise of variance `sparsity / 9`.
    pub fn generate(seed: u64, p: usize, n_obs: usize, sparsity: usize) -> Result<Self> {
        if sparsity == 0 || sparsity > p {
            return Err(Error::InvalidParameter(format!("sparsity {sparsity} must lie in 1..={p}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n_obs * p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let theta0: Vec<f64> = (0..p).map(|j| if j < sparsity { 1.0 } else { 0.0 }).collect();
        let sigma_noise = (sparsity as f64 / 9.0).sqrt();
        let y = (0..n_obs)
            .map(|i| {
                let signal: f64 = x[i * p..(i + 1) * p].iter().zip(&theta0).map(|(a, b)| a * b).sum();
                signal + sigma_noise * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let mut data = Self::new(n_obs, p, x, y, sigma_noise)?;
        data.theta0 = Some(theta0);
        Ok(data)
    }

    /// Reads rows of `x_1, .., x_p, y`; a non-numeric first row is treated as a header.
    pub fn from_csv(path: &Path, sigma_noise: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(|s| s.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(Error::InvalidParameter(format!("{}: row {}: {e}", path.display(), i + 1)))
                }
            }
        }
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if width < 2 {
            return Err(Error::DimensionMismatch("need at least one feature and a response column".into()));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::DimensionMismatch("rows have different lengths".into()));
        }
        let p = width - 1;
        let n_obs = rows.len();
        let mut x = Vec::with_capacity(n_obs * p);
        let mut y = Vec::with_capacity(n_obs);
        for row in rows {
            x.extend_from_slice(&row[..p]);
            y.push(row[p]);
        }
        Self::new(n_obs, p, x, y, sigma_noise)
    }

    /// `(beta, tau)` of the potential: `beta = 4 sigma^2`, `tau = 4 sigma / sqrt(tr(X'X))`.
    pub fn temperatures(&self) -> (f64, f64) {
        let trace: f64 = self.x.iter().map(|v| v * v).sum();
        (4.0 * self.sigma_noise * self.sigma_noise, 4.0 * self.sigma_noise / trace.sqrt())
    }

    fn residual(&self, theta: &[f64], out: &mut [f64]) {
        for (i, r) in out.iter_mut().enumerate() {
            let row = &self.x[i * self.p..(i + 1) * self.p];
            *r = self.y[i] - row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `|Y - X theta|^2 / beta + sum_j log(tau^2 + theta_j^2)`.
    pub fn potential(&self, theta: &[f64]) -> f64 {
        let (beta, tau) = self.temperatures();
        let mut r = vec![0.0; self.n_obs];
        self.residual(theta, &mut r);
        r.iter().map(|v| v * v).sum::<f64>() / beta
            + theta.iter().map(|t| (tau * tau + t * t).ln()).sum::<f64>()
    }

    /// Minus the gradient of [`EwaData::potential`].
    pub fn drift_into(&self, theta: &[f64], out: &mut [f64]) {
        let (beta, tau) = self.temperatures();
        self.drift_with(beta, tau, theta, out);
    }

    fn drift_with(&self, beta: f64, tau: f64, theta: &[f64], out: &mut [f64]) {
        let mut r = vec![0.0; self.n_obs];
        self.residual(theta, &mut r);
        let tau2 = tau * tau;
        for (j, (o, t)) in out.iter_mut().zip(theta).enumerate() {
            let mut g = 0.0;
            for (i, ri) in r.iter().enumerate() {
                g += self.x[i * self.p + j] * ri;
            }
            *o = 2.0 / beta * g - 2.0 * t / (tau2 + t * t);
        }
    }
}

/// Langevin diffusion `d theta = -grad V(theta) dt + sqrt(2) dW` started at zero;
/// the test function is the vector of coordinates.
pub fn make_ewa(data: &EwaData) -> Result<(DiffusionModel, TestFunction, ReferenceData)> {
    let shared = Arc::new(data.clone());
    let (beta, tau) = data.temperatures();
    let drift: VectorField = Arc::new(move |theta, out| shared.drift_with(beta, tau, theta, out));
    let model = DiffusionModel::new("ewa", vec![0.0; data.p], data.p, drift, Diffusion::Scalar(2f64.sqrt()))?;
    Ok((model, TestFunction::coordinates(data.p), ReferenceData::default()))
}
