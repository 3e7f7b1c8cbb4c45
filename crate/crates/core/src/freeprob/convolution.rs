//! Grid checks of the additive free convolution (R-transforms add) and the
//! multiplicative free convolution (S-transforms multiply).

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use super::transforms::{r_transform, s_transform, BracketConfig};
use super::EmpiricalSpectrum;
use crate::error::{CoreError, Result};

/// Sampled transform evaluations along a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformGrid {
    pub s_values: Vec<f64>,
    pub outputs: Vec<f64>,
    pub converged_flags: Vec<bool>,
}

impl TransformGrid {
    pub fn evaluate_r(spec: &EmpiricalSpectrum, grid: &[f64], cfg: &BracketConfig) -> Self {
        let mut outputs = Vec::with_capacity(grid.len());
        let mut flags = Vec::with_capacity(grid.len());
        for &s in grid {
            match r_transform(spec, s, cfg) {
                Ok(v) => {
                    outputs.push(v);
                    flags.push(true);
                }
                Err(_) => {
                    outputs.push(f64::NAN);
                    flags.push(false);
                }
            }
        }
        Self {
            s_values: grid.to_vec(),
            outputs,
            converged_flags: flags,
        }
    }

    pub fn evaluate_s(spec: &EmpiricalSpectrum, grid: &[f64], cfg: &BracketConfig) -> Self {
        let mut outputs = Vec::with_capacity(grid.len());
        let mut flags = Vec::with_capacity(grid.len());
        for &w in grid {
            match s_transform(spec, w, cfg) {
                Ok(v) => {
                    outputs.push(v);
                    flags.push(true);
                }
                Err(_) => {
                    outputs.push(f64::NAN);
                    flags.push(false);
                }
            }
        }
        Self {
            s_values: grid.to_vec(),
            outputs,
            converged_flags: flags,
        }
    }
}

/// Result of a convolution check over a grid. Grid points where a transform
/// inversion left its domain are excluded and counted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvolutionCheck {
    pub grid: Vec<f64>,
    pub residuals: Vec<Option<f64>>,
    pub max_residual: f64,
    pub excluded: usize,
}

fn check_same_dimension(
    a: &EmpiricalSpectrum,
    b: &EmpiricalSpectrum,
    c: &EmpiricalSpectrum,
) -> Result<()> {
    if a.len() != b.len() || a.len() != c.len() {
        return Err(CoreError::DimensionMismatch {
            what: "spectra",
            expected: a.len(),
            got: if a.len() != b.len() { b.len() } else { c.len() },
        });
    }
    Ok(())
}

/// `max_s |R_sum(s) - R_A(s) - R_B(s)|` over the grid.
pub fn additive_convolution_check(
    spec_a: &EmpiricalSpectrum,
    spec_b: &EmpiricalSpectrum,
    spec_sum: &EmpiricalSpectrum,
    s_grid: &[f64],
    cfg: &BracketConfig,
) -> Result<ConvolutionCheck> {
    check_same_dimension(spec_a, spec_b, spec_sum)?;
    let mut residuals = Vec::with_capacity(s_grid.len());
    let mut max_residual = 0.0_f64;
    let mut excluded = 0;
    let mut any = false;
    for &s in s_grid {
        let point = (|| -> Result<f64> {
            let ra = r_transform(spec_a, s, cfg)?;
            let rb = r_transform(spec_b, s, cfg)?;
            let rs = r_transform(spec_sum, s, cfg)?;
            Ok((rs - ra - rb).abs())
        })();
        match point {
            Ok(r) => {
                max_residual = max_residual.max(r);
                residuals.push(Some(r));
                any = true;
            }
            Err(_) => {
                residuals.push(None);
                excluded += 1;
            }
        }
    }
    if !any {
        return Err(CoreError::OutOfDomain(
            "every grid point left the transform domain".into(),
        ));
    }
    Ok(ConvolutionCheck {
        grid: s_grid.to_vec(),
        residuals,
        max_residual,
        excluded,
    })
}

/// `max_w |S_prod(w) - S_A(w) S_B(w)|` over the grid. The product spectrum
/// should come from the symmetrized product (see
/// [`symmetrized_product_spectrum`]), which shares its nonzero spectrum with
/// the plain product for positive factors.
pub fn multiplicative_convolution_check(
    spec_a: &EmpiricalSpectrum,
    spec_b: &EmpiricalSpectrum,
    spec_prod: &EmpiricalSpectrum,
    omega_grid: &[f64],
    cfg: &BracketConfig,
) -> Result<ConvolutionCheck> {
    check_same_dimension(spec_a, spec_b, spec_prod)?;
    let scale_a = spec_a.max().abs().max(spec_a.min().abs()).max(1.0);
    if spec_a.mean().abs() < 1e-12 * scale_a {
        return Err(CoreError::ZeroMean);
    }
    let scale_b = spec_b.max().abs().max(spec_b.min().abs()).max(1.0);
    if spec_b.mean().abs() < 1e-12 * scale_b {
        return Err(CoreError::ZeroMean);
    }
    let mut residuals = Vec::with_capacity(omega_grid.len());
    let mut max_residual = 0.0_f64;
    let mut excluded = 0;
    let mut any = false;
    for &w in omega_grid {
        let point = (|| -> Result<f64> {
            let sa = s_transform(spec_a, w, cfg)?;
            let sb = s_transform(spec_b, w, cfg)?;
            let sp = s_transform(spec_prod, w, cfg)?;
            Ok((sp - sa * sb).abs())
        })();
        match point {
            Ok(r) => {
                max_residual = max_residual.max(r);
                residuals.push(Some(r));
                any = true;
            }
            Err(_) => {
                residuals.push(None);
                excluded += 1;
            }
        }
    }
    if !any {
        return Err(CoreError::OutOfDomain(
            "every grid point left the transform domain".into(),
        ));
    }
    Ok(ConvolutionCheck {
        grid: omega_grid.to_vec(),
        residuals,
        max_residual,
        excluded,
    })
}

/// Eigenvalues of `A^{1/2} B A^{1/2}` for a positive diagonal `A` (given by
/// its diagonal) and symmetric `B`. The symmetrized product is symmetric
/// and shares the nonzero spectrum of `A B`.
pub fn symmetrized_product_spectrum(
    a_diag: &Array1<f64>,
    b: &Array2<f64>,
) -> Result<EmpiricalSpectrum> {
    let n = a_diag.len();
    if b.nrows() != n || b.ncols() != n {
        return Err(CoreError::DimensionMismatch {
            what: "symmetrized product",
            expected: n,
            got: b.nrows(),
        });
    }
    if a_diag.iter().any(|&v| v < 0.0) {
        return Err(CoreError::InvalidParameter(
            "symmetrized product needs a nonnegative diagonal factor".into(),
        ));
    }
    let sqrt_a: Array1<f64> = a_diag.mapv(f64::sqrt);
    let mut m = b.clone();
    for ((i, j), v) in m.indexed_iter_mut() {
        *v *= sqrt_a[i] * sqrt_a[j];
    }
    let eig = crate::linalg::symmetric_eigenvalues(&m)?;
    EmpiricalSpectrum::from_array(&eig)
}
