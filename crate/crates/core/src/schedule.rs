//! Polynomial decreasing step sequences and their power sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step sequence `gamma1 * k^(-a)`, optionally capped at `clamp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    gamma1: f64,
    a: f64,
    clamp: Option<f64>,
}

impl StepSchedule {
    pub fn new(gamma1: f64, a: f64) -> Result<Self> {
        Self::with_clamp(gamma1, a, None)
    }

    pub fn with_clamp(gamma1: f64, a: f64, clamp: Option<f64>) -> Result<Self> {
        if !(gamma1 > 0.0 && gamma1.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma1 must be positive, got {gamma1}")));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!("step exponent must lie in (0,1), got {a}")));
        }
        if let Some(c) = clamp {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("clamp must be positive, got {c}")));
            }
        }
        Ok(Self { gamma1, a, clamp })
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn exponent(&self) -> f64 {
        self.a
    }

    pub fn clamp(&self) -> Option<f64> {
        self.clamp
    }

    /// Step length used at iteration `k` (1-based).
    #[inline]
    pub fn step(&self, k: u64) -> f64 {
        debug_assert!(k >= 1);
        let raw = self.gamma1 * (k as f64).powf(-self.a);
        match self.clamp {
            Some(c) => raw.min(c),
            None => raw,
        }
    }

    /// Schedule of the coarse scheme of correcting level `r`: `gamma1` divided by `m^(r-2)`.
    ///
    /// The clamp is scaled the same way so that the refined steps stay
    /// proportional to the base ones.
    pub fn refined(&self, r: usize, m: usize) -> Self {
        assert!(r >= 2 && m >= 2, "refined schedule needs r >= 2 and M >= 2");
        let factor = (m as f64).powi(r as i32 - 2);
        Self {
            gamma1: self.gamma1 / factor,
            a: self.a,
            clamp: self.clamp.map(|c| c / factor),
        }
    }

    pub fn power_sums(&self, n: u64, l_max: usize) -> PowerSums {
        let mut sums = PowerSums::new(l_max);
        for k in 1..=n {
            sums.push(self.step(k));
        }
        sums
    }
}

/// Running power sums `sum_k step_k^l` for `l = 1..=l_max`, with Neumaier compensation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSums {
    n: u64,
    sums: Vec<f64>,
    comp: Vec<f64>,
}

impl PowerSums {
    pub fn new(l_max: usize) -> Self {
        assert!(l_max >= 1);
        Self { n: 0, sums: vec![0.0; l_max], comp: vec![0.0; l_max] }
    }

    pub fn push(&mut self, step: f64) {
        let mut p = step;
        for (s, c) in self.sums.iter_mut().zip(self.comp.iter_mut()) {
            neumaier_add(s, c, p);
            p *= step;
        }
        self.n += 1;
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn l_max(&self) -> usize {
        self.sums.len()
    }

    /// `sum_k step_k^l`; `l` is 1-based.
    pub fn get(&self, l: usize) -> f64 {
        assert!(l >= 1 && l <= self.sums.len(), "power {l} out of range");
        self.sums[l - 1] + self.comp[l - 1]
    }
}

#[inline]
pub(crate) fn neumaier_add(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Compensated sum of a sequence.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for x in it {
        neumaier_add(&mut s, &mut c, x);
    }
    s + c
}
