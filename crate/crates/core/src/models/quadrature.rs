//! Adaptive Gauss-Kronrod quadrature and Gibbs-density expectations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the potential `V` and noise level `sigma` define the density `exp(-c V)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityConvention {
    /// `c = 1 / (2 sigma^2)`.
    OverTwoSigmaSquared,
    /// `c = 2 / sigma^2`, the invariant density of `dX = -V'(X) dt + sigma dW`.
    Langevin,
}

impl DensityConvention {
    pub fn inverse_temperature(self, sigma: f64) -> f64 {
        match self {
            Self::OverTwoSigmaSquared => 1.0 / (2.0 * sigma * sigma),
            Self::Langevin => 2.0 / (sigma * sigma),
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod estimate and error estimate on `[a, b]`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive G7/K15 integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_PIECES: usize = 20_000;
    let (value, err) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    let (mut total, mut total_err) = (value, err);
    while total_err > tol {
        if heap.len() >= MAX_PIECES {
            return Err(Error::NoConvergence { what: "adaptive quadrature", iterations: MAX_PIECES });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gk15(&f, worst.a, mid);
        let (rv, re) = gk15(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: lv, err: le });
        heap.push(Piece { a: mid, b: worst.b, value: rv, err: re });
        if !total.is_finite() {
            return Err(Error::InvalidParameter("integrand is not finite".into()));
        }
    }
    // re-add in a fixed order to shed accumulated drift from the running updates
    let mut pieces: Vec<Piece> = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    Ok(crate::schedule::compensated_sum(pieces.iter().map(|p| p.value)))
}

/// `int f exp(-c V) / int exp(-c V)` on the real line, with `c` fixed by the convention.
pub fn gibbs_quadrature(
    potential: &dyn Fn(f64) -> f64,
    sigma: f64,
    f: &dyn Fn(f64) -> f64,
    convention: DensityConvention,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let c = convention.inverse_temperature(sigma);

    let mut half_width = 1.0;
    let (shift, half_width) = loop {
        if half_width > 1e8 {
            return Err(Error::InvalidParameter("density is not integrable".into()));
        }
        let grid = 4001;
        let shift = (0..grid)
            .map(|i| potential(-half_width + 2.0 * half_width * i as f64 / (grid - 1) as f64))
            .fold(f64::INFINITY, f64::min);
        let tail = |x: f64| (-c * (potential(x) - shift)).exp() * (1.0 + f(x).abs()) * x.abs().max(1.0);
        let outer = 2.0 * half_width;
        if tail(half_width).max(tail(-half_width)) < 1e-16
            && tail(outer).max(tail(-outer)) <= tail(half_width).max(tail(-half_width))
        {
            break (shift, half_width * 1.5);
        }
        half_width *= 2.0;
    };

    let density = |x: f64| (-c * (potential(x) - shift)).exp();
    let z = integrate(density, -half_width, half_width, 1e-13)?;
    let num = integrate(|x| f(x) * density(x), -half_width, half_width, 1e-13 * z.max(1.0))?;
    Ok(num / z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = integrate(|x| x.powi(6) - 2.0 * x, 0.0, 2.0, 1e-14).unwrap();
        assert_relative_eq!(v, 128.0 / 7.0 - 4.0, max_relative = 1e-14);
    }

    #[test]
    fn integrates_peaked_functions() {
        let v = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 / 1e-2 * (1.0 / 1e-2f64).atan();
        assert_relative_eq!(v, exact, max_relative = 1e-10);
    }

    #[test]
    fn gaussian_second_moments() {
        let sq = |x: f64| x * x;
        let v = gibbs_quadrature(&sq, 1.0, &sq, DensityConvention::OverTwoSigmaSquared).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-10);
        let v = gibbs_quadrature(&sq, 2.0, &sq, DensityConvention::OverTwoSigmaSquared).unwrap();
        assert_relative_eq!(v, 4.0, max_relative = 1e-10);
        let v = gibbs_quadrature(&sq, 2.0, &sq, DensityConvention::Langevin).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn rejects_non_integrable_density() {
        let flat = |_: f64| 0.0;
        assert!(gibbs_quadrature(&flat, 1.0, &|x| x, DensityConvention::Langevin).is_err());
    }
}
