//! Free-probability numerics over empirical spectra: Stieltjes, R- and
//! S-transforms with safeguarded real-branch inversion, free cumulants,
//! additive/multiplicative free-convolution checks and the
//! asymptotic-freeness tester.

mod convolution;
mod cumulants;
mod freeness;
mod transforms;

pub use convolution::{
    additive_convolution_check, multiplicative_convolution_check, symmetrized_product_spectrum,
    ConvolutionCheck, TransformGrid,
};
pub use cumulants::{free_cumulants_from_moments, moments_from_free_cumulants, r_series};
pub use freeness::{freeness_score, FreenessReport, WordTrace};
pub use transforms::{r_inverse_relation_check, r_transform, s_transform, BracketConfig};
pub(crate) use transforms::invert_stieltjes as invert_stieltjes_real;

use ndarray::Array1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Sorted sample of real eigenvalues (or squared singular values) with
/// uniform weight `1/n`. The normalized trace of `f(A)` is the sample mean
/// of `f` over the values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSpectrum {
    values: Vec<f64>,
}

impl EmpiricalSpectrum {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::InvalidParameter("empty spectrum".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("spectrum values"));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { values })
    }

    pub fn from_array(values: &Array1<f64>) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Normalized trace of the sample itself (first moment).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Normalized trace of the p-th power.
    pub fn moment(&self, p: u32) -> f64 {
        self.values.iter().map(|v| v.powi(p as i32)).sum::<f64>() / self.len() as f64
    }

    /// First `p` moments `m_1 .. m_p`.
    pub fn moments(&self, p: u32) -> Vec<f64> {
        (1..=p).map(|q| self.moment(q)).collect()
    }

    /// Spectrum of the inverse matrix; requires strictly positive values.
    pub fn inverse_spectrum(&self) -> Result<EmpiricalSpectrum> {
        if self.min() <= 0.0 {
            return Err(CoreError::InvalidParameter(
                "inverse spectrum needs strictly positive values".into(),
            ));
        }
        EmpiricalSpectrum::new(self.values.iter().map(|v| 1.0 / v).collect())
    }

    /// Stieltjes transform `(1/n) sum 1/(x_i - z)`.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        let mut min_dist = f64::INFINITY;
        let mut acc = Complex64::new(0.0, 0.0);
        for &x in &self.values {
            let d = Complex64::new(x, 0.0) - z;
            min_dist = min_dist.min(d.norm());
            acc += d.inv();
        }
        if min_dist < 1e-14 {
            return Err(CoreError::PoleHit(min_dist));
        }
        Ok(acc / self.len() as f64)
    }

    /// Stieltjes transform at a real argument off the spectrum support.
    pub(crate) fn stieltjes_real(&self, x: f64) -> f64 {
        self.values.iter().map(|&v| 1.0 / (v - x)).sum::<f64>() / self.len() as f64
    }

    /// Derivative of the real-argument Stieltjes transform.
    pub(crate) fn stieltjes_real_deriv(&self, x: f64) -> f64 {
        self.values
            .iter()
            .map(|&v| {
                let d = v - x;
                1.0 / (d * d)
            })
            .sum::<f64>()
            / self.len() as f64
    }

    /// Max minus min of the sample; zero spread means a point mass.
    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }
}
