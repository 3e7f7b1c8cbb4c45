//! Numerical verification harness for the resolvent local law and its
//! supporting identities:
//!
//! - implied per-entry site precisions from `((L1 + J)^{-1})_ii` against the
//!   deterministic scalar `R_J(-chi)` (L2 concentration experiments),
//! - the exact Neumann decomposition of the resolvent difference
//!   `D = (L1 + J)^{-1} - Y^{-1}` into centered-factor series,
//! - Rademacher trace checks for the centered factors,
//! - the two-block GLM system: spectral predictions for the scalar
//!   Gaussian-side precisions and their consistency relations,
//! - effective scalar replacements of diagonal site matrices through R- and
//!   S-transforms, cross-checked between two algebraically equivalent
//!   formulations,
//! - Woodbury identities tying the z-side resolvent diagonals together.

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::freeprob::{
    r_transform, s_transform, BracketConfig, EmpiricalSpectrum,
};
use crate::linalg;
use crate::randmat::{self, DiagLaw};
use crate::solver_diag::projection_parts;

/// One local-law run: implied per-entry precisions, the spectral prediction
/// and the mean-square deviation between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalLawReport {
    pub n: usize,
    pub lambda2_predicted: f64,
    pub lambda2_diagonal: Vec<f64>,
    pub l2_deviation: f64,
    pub chi: f64,
    pub seed: u64,
}

/// Truncated-series reconstruction report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub n: usize,
    pub truncation_order: usize,
    pub spectral_radius_ejey: f64,
    /// Max-norm reconstruction error; set to infinity when the series
    /// diverges (spectral radius >= 1).
    pub reconstruction_error: f64,
    pub phi_e_j: f64,
    pub phi_e_y: f64,
    pub chi: f64,
    pub lambda2: f64,
}

/// Per-entry site precisions implied by matching resolvent diagonals:
/// `L2_ii = 1/((L1 + J)^{-1})_ii - L1_ii`, plus the normalized trace `chi`
/// of the resolvent.
pub fn implied_lambda2_diagonal(
    lambda1: &Array1<f64>,
    j: &Array2<f64>,
) -> Result<(Array1<f64>, f64)> {
    let n = lambda1.len();
    if j.nrows() != n || j.ncols() != n {
        return Err(CoreError::DimensionMismatch {
            what: "shift matrix",
            expected: n,
            got: j.nrows(),
        });
    }
    let mut m = j.clone();
    for i in 0..n {
        m[[i, i]] += lambda1[i];
    }
    let inv = linalg::dense_inverse(&m)?;
    let mut lambda2 = Array1::zeros(n);
    let mut chi = 0.0;
    for i in 0..n {
        let d = inv[[i, i]];
        if d == 0.0 {
            return Err(CoreError::ZeroDiagonal(i));
        }
        lambda2[i] = 1.0 / d - lambda1[i];
        chi += d;
    }
    Ok((lambda2, chi / n as f64))
}

/// Ensembles for the shift matrix `J` in local-law experiments.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum JEnsemble {
    /// `J = shift I`: the implied diagonal is exactly constant.
    ConstantShift { shift: f64 },
    /// `J = U diag(d) U^T` with Haar `U`; spectrum known by construction.
    HaarRotated { law: DiagLaw },
    /// Negative control: `J = diag(L1) + noise_scale * U diag(d) U^T` with
    /// `d ~ Uniform[0, 1]`, strongly dependent on `L1`.
    DependentShift { noise_scale: f64 },
}

fn haar_rotated(n: usize, law: DiagLaw, seed_diag: u64, seed_haar: u64) -> Result<(Array2<f64>, Array1<f64>)> {
    let d = randmat::diag_from_law(n, law, seed_diag)?;
    let u = randmat::haar_orthogonal(n, seed_haar);
    let mut scaled = u.clone();
    for (mut col, &dv) in scaled.columns_mut().into_iter().zip(d.iter()) {
        col.mapv_inplace(|v| v * dv);
    }
    Ok((scaled.dot(&u.t()), d))
}

/// Build one `J` draw; returns the matrix and its spectrum (computed by
/// eigendecomposition only when not known by construction).
fn build_j(
    ensemble: JEnsemble,
    lambda1: &Array1<f64>,
    n: usize,
    seed: u64,
) -> Result<(Array2<f64>, EmpiricalSpectrum)> {
    match ensemble {
        JEnsemble::ConstantShift { shift } => Ok((
            Array2::from_diag(&Array1::from_elem(n, shift)),
            EmpiricalSpectrum::new(vec![shift; n])?,
        )),
        JEnsemble::HaarRotated { law } => {
            let (j, d) = haar_rotated(n, law, randmat::derive_seed(seed, 2), randmat::derive_seed(seed, 3))?;
            Ok((j, EmpiricalSpectrum::from_array(&d)?))
        }
        JEnsemble::DependentShift { noise_scale } => {
            let (noise, _) = haar_rotated(
                n,
                DiagLaw::Uniform { a: 0.0, b: 1.0 },
                randmat::derive_seed(seed, 2),
                randmat::derive_seed(seed, 3),
            )?;
            let mut j = noise * noise_scale;
            for i in 0..n {
                j[[i, i]] += lambda1[i];
            }
            let spec = EmpiricalSpectrum::from_array(&linalg::symmetric_eigenvalues(&j)?)?;
            Ok((j, spec))
        }
    }
}

/// Outcome of a sweep over `(size, seed)` cells. Runs whose R-transform
/// argument left the admissible domain are excluded and reported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalLawRuns {
    pub reports: Vec<LocalLawReport>,
    pub excluded: Vec<(usize, u64, String)>,
}

/// For each `(size, seed)`: draw `L1` and `J`, compute the implied
/// per-entry precisions and `chi`, predict the scalar as the R-transform of
/// the empirical `J` spectrum at `-chi`, and record the mean-square
/// deviation.
pub fn local_law_experiment(
    lambda1_law: DiagLaw,
    j_ensemble: JEnsemble,
    sizes: &[usize],
    seeds: &[u64],
) -> Result<LocalLawRuns> {
    let cfg = BracketConfig::default();
    let mut reports = Vec::new();
    let mut excluded = Vec::new();
    for &n in sizes {
        for &seed in seeds {
            let lambda1 = randmat::diag_from_law(n, lambda1_law, randmat::derive_seed(seed, 1))?;
            let (j, spectrum) = build_j(j_ensemble, &lambda1, n, seed)?;
            let (lambda2, chi) = implied_lambda2_diagonal(&lambda1, &j)?;
            let predicted = match r_transform(&spectrum, -chi, &cfg) {
                Ok(v) => v,
                Err(e @ (CoreError::OutOfDomain(_) | CoreError::NoBracket(_))) => {
                    excluded.push((n, seed, e.to_string()));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let l2 = lambda2
                .iter()
                .map(|&v| (v - predicted) * (v - predicted))
                .sum::<f64>()
                / n as f64;
            reports.push(LocalLawReport {
                n,
                lambda2_predicted: predicted,
                lambda2_diagonal: lambda2.to_vec(),
                l2_deviation: l2,
                chi,
                seed,
            });
        }
    }
    Ok(LocalLawRuns { reports, excluded })
}

/// Centered resolvent factor `E_M = I - (1/chi) (M - B_M(chi) I)^{-1}`,
/// whose normalized trace vanishes by construction of `B_M`.
fn centered_factor(
    m: &Array2<f64>,
    spectrum: &EmpiricalSpectrum,
    chi: f64,
    cfg: &BracketConfig,
) -> Result<Array2<f64>> {
    let n = m.nrows();
    let b = crate::freeprob::invert_stieltjes_real(spectrum, chi, cfg)?;
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[[i, i]] -= b;
    }
    let inv = linalg::dense_inverse(&shifted)?;
    let mut e = inv * (-1.0 / chi);
    for i in 0..n {
        e[[i, i]] += 1.0;
    }
    Ok(e)
}

/// Exact finite-size decomposition check of
/// `D = (L1 + J)^{-1} - (L1 + lambda2 I)^{-1}` as
/// `chi (A + B - E_J)` with truncated Neumann sums for `A` and `B`.
///
/// `chi` is solved self-consistently so that `phi(Y^{-1}) = chi` with
/// `Y = L1 + R_J(-chi) I`; this is the condition under which the
/// decomposition is exact algebra at finite size, and it reproduces the
/// resolvent trace `phi((L1 + J)^{-1})` only in the large-size limit (that
/// gap is precisely what the local-law experiments measure). Point-mass `J`
/// spectra are rejected: the centered factors degenerate there.
pub fn resolvent_decomposition_check(
    lambda1: &Array1<f64>,
    j: &Array2<f64>,
    truncation: usize,
) -> Result<DecompositionReport> {
    let n = lambda1.len();
    if j.nrows() != n || j.ncols() != n {
        return Err(CoreError::DimensionMismatch {
            what: "shift matrix",
            expected: n,
            got: j.nrows(),
        });
    }
    if truncation == 0 {
        return Err(CoreError::InvalidParameter("truncation must be >= 1".into()));
    }
    let jspec = EmpiricalSpectrum::from_array(&linalg::symmetric_eigenvalues(j)?)?;
    if jspec.spread() < 1e-10 * jspec.max().abs().max(1.0) {
        return Err(CoreError::DegenerateSpectrum(
            "point-mass J spectrum; centered factor undefined".into(),
        ));
    }
    let cfg = BracketConfig::default();

    // self-consistent chi: mean(1/(L1_i + R_J(-chi))) = chi
    let lambda2_of = |chi: f64| -> Result<f64> { r_transform(&jspec, -chi, &cfg) };
    let h = |chi: f64| -> Result<f64> {
        let l2 = lambda2_of(chi)?;
        let mut acc = 0.0;
        for &l1 in lambda1.iter() {
            let d = l1 + l2;
            if d <= 0.0 {
                return Err(CoreError::SingularMatrix(format!(
                    "nonpositive shifted precision {d}"
                )));
            }
            acc += 1.0 / d;
        }
        Ok(acc / n as f64 - chi)
    };
    let mut lo = 1e-6;
    let mut h_lo = h(lo)?;
    if h_lo < 0.0 {
        // extremely small resolvent trace; widen downward
        for _ in 0..40 {
            lo *= 0.1;
            h_lo = h(lo)?;
            if h_lo >= 0.0 {
                break;
            }
        }
        if h_lo < 0.0 {
            return Err(CoreError::NoBracket("self-consistent chi".into()));
        }
    }
    let mut hi = 1.0;
    let mut tries = 0;
    while h(hi)? > 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(CoreError::NoBracket("self-consistent chi".into()));
        }
    }
    let mut chi = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = h(chi)?;
        if v.abs() < 1e-14 {
            break;
        }
        if v > 0.0 {
            lo = chi;
        } else {
            hi = chi;
        }
        chi = 0.5 * (lo + hi);
    }

    let lambda2 = lambda2_of(chi)?;
    let y = lambda1.mapv(|v| v + lambda2);
    let yspec = EmpiricalSpectrum::from_array(&y)?;

    let e_j = centered_factor(j, &jspec, chi, &cfg)?;
    // Y is diagonal, so its centered factor is diagonal
    let b_y = crate::freeprob::invert_stieltjes_real(&yspec, chi, &cfg)?;
    let e_y_diag = y.mapv(|v| 1.0 - 1.0 / (chi * (v - b_y)));

    let phi_e_j = e_j.diag().sum() / n as f64;
    let phi_e_y = e_y_diag.sum() / n as f64;

    // P = E_J E_Y (column scaling)
    let mut p = e_j.clone();
    for (mut col, &e) in p.columns_mut().into_iter().zip(e_y_diag.iter()) {
        col.mapv_inplace(|v| v * e);
    }

    use ndarray_linalg::EigVals;
    let eigs = p
        .eigvals()
        .map_err(|e| CoreError::SingularMatrix(format!("eigvals failed: {e}")))?;
    let spectral_radius = eigs.iter().map(|c| c.norm()).fold(0.0, f64::max);

    if spectral_radius >= 1.0 {
        return Ok(DecompositionReport {
            n,
            truncation_order: truncation,
            spectral_radius_ejey: spectral_radius,
            reconstruction_error: f64::INFINITY,
            phi_e_j,
            phi_e_y,
            chi,
            lambda2,
        });
    }

    // S = sum_{m=1..T} P^m ; the mirrored sum for B is S^T because both
    // centered factors are symmetric
    let mut acc = p.clone();
    let mut series = p.clone();
    for _ in 2..=truncation {
        acc = acc.dot(&p);
        series += &acc;
    }
    // A = (I - E_Y) S (row scaling), B = (I - E_J) S^T
    let mut a_term = series.clone();
    for (mut row, &e) in a_term.rows_mut().into_iter().zip(e_y_diag.iter()) {
        row.mapv_inplace(|v| v * (1.0 - e));
    }
    let mut i_minus_ej = -e_j.clone();
    for i in 0..n {
        i_minus_ej[[i, i]] += 1.0;
    }
    let b_term = i_minus_ej.dot(&series.t());

    let mut m = j.clone();
    for i in 0..n {
        m[[i, i]] += lambda1[i];
    }
    let mut d_exact = linalg::dense_inverse(&m)?;
    for i in 0..n {
        d_exact[[i, i]] -= 1.0 / y[i];
    }

    let mut d_rec = a_term + b_term - &e_j;
    d_rec *= chi;
    let reconstruction_error = linalg::max_abs_diff(&d_exact, &d_rec);

    Ok(DecompositionReport {
        n,
        truncation_order: truncation,
        spectral_radius_ejey: spectral_radius,
        reconstruction_error,
        phi_e_j,
        phi_e_y,
        chi,
        lambda2,
    })
}

/// Monte-Carlo check that the centered diagonal factor is uncorrelated with
/// independent Rademacher signs: averages of `|phi(E_Y Z)|` and
/// `|phi(E_Y Z E_Y)|` over seeds. Both decay like `n^{-1/2}`.
pub fn rademacher_trace_check(e_y: &Array2<f64>, seeds: &[u64]) -> (f64, f64) {
    let n = e_y.nrows();
    let diag: Vec<f64> = (0..n).map(|i| e_y[[i, i]]).collect();
    // diag of E_Y^2 for the sandwiched trace (E_Y symmetric)
    let sq_diag: Vec<f64> = (0..n).map(|j| e_y.column(j).dot(&e_y.column(j))).collect();
    let mut acc1 = 0.0;
    let mut acc2 = 0.0;
    for &seed in seeds {
        let z = randmat::rademacher_diag(n, seed);
        let t1: f64 = diag.iter().zip(z.iter()).map(|(d, s)| d * s).sum();
        let t2: f64 = sq_diag.iter().zip(z.iter()).map(|(d, s)| d * s).sum();
        acc1 += (t1 / n as f64).abs();
        acc2 += (t2 / n as f64).abs();
    }
    (acc1 / seeds.len() as f64, acc2 / seeds.len() as f64)
}

/// Spectral predictions for the two-block GLM system at fixed diagonal
/// first-group precisions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GlmLocalLawReport {
    pub lambda2w: f64,
    pub lambda2z: f64,
    pub chi_w: f64,
    pub chi_z: f64,
    /// Mean-square deviation of the implied w-side diagonal from `lambda2w`.
    pub residual_w: f64,
    /// Mean-square deviation of the implied z-side diagonal from `lambda2z`.
    pub residual_z: f64,
    /// `|l2w chi_w - alpha (1 - l2z chi_z)|`.
    pub conj_residual: f64,
}

/// w-side scalar from the R-transform of the empirical spectrum of
/// `X^T L1z X` at `-chi_w`; z-side scalar from the reciprocal R-transform
/// of `X L1w^{-1} X^T` at the induced trace argument, solved
/// self-consistently through `chi~_z = l2z (1 - l2z chi_z)`.
pub fn glm_local_law_check(
    lambda1w: &Array1<f64>,
    lambda1z: &Array1<f64>,
    x: &Array2<f64>,
) -> Result<GlmLocalLawReport> {
    let (n, k) = (x.nrows(), x.ncols());
    if lambda1w.len() != k {
        return Err(CoreError::DimensionMismatch {
            what: "lambda1w",
            expected: k,
            got: lambda1w.len(),
        });
    }
    if lambda1z.len() != n {
        return Err(CoreError::DimensionMismatch {
            what: "lambda1z",
            expected: n,
            got: lambda1z.len(),
        });
    }
    if lambda1w.iter().any(|&v| v <= 0.0) || lambda1z.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::InvalidParameter(
            "first-group precisions must be strictly positive".into(),
        ));
    }
    let alpha = n as f64 / k as f64;
    let cfg = BracketConfig::default();

    let proj = projection_parts(x, lambda1w, lambda1z, &Array1::zeros(k), &Array1::zeros(n))?;
    let chi_w = proj.sigma_diag.sum() / k as f64;
    let chi_z = proj.z_var_diag.sum() / n as f64;

    // spectrum of X^T L1z X via singular values of sqrt(L1z) X, zero-padded
    let mut b = x.clone();
    for (mut row, &l) in b.rows_mut().into_iter().zip(lambda1z.iter()) {
        let s = l.sqrt();
        row.mapv_inplace(|v| v * s);
    }
    let sv = linalg::singular_values(&b)?;
    let mut mw_values = vec![0.0; k];
    for (i, s) in sv.iter().enumerate() {
        mw_values[i] = s * s;
    }
    let spec_mw = EmpiricalSpectrum::new(mw_values)?;
    let lambda2w = r_transform(&spec_mw, -chi_w, &cfg)?;

    // spectrum of X L1w^{-1} X^T via singular values of X / sqrt(L1w)
    let mut c = x.clone();
    for (mut col, &l) in c.columns_mut().into_iter().zip(lambda1w.iter()) {
        let s = 1.0 / l.sqrt();
        col.mapv_inplace(|v| v * s);
    }
    let sv = linalg::singular_values(&c)?;
    let mut mz_values = vec![0.0; n];
    for (i, s) in sv.iter().enumerate() {
        if i < n {
            mz_values[i] = s * s;
        }
    }
    let spec_mz = EmpiricalSpectrum::new(mz_values)?;

    // direct trace of (L1z^{-1} + X L1w^{-1} X^T)^{-1} through the
    // Woodbury diagonal identity, used to initialize the scalar solve
    let mut chi_tilde_direct = 0.0;
    for i in 0..n {
        chi_tilde_direct += lambda1z[i] - lambda1z[i] * lambda1z[i] * proj.z_var_diag[i];
    }
    chi_tilde_direct /= n as f64;

    let lambda2z = solve_z_scalar(&spec_mz, chi_z, chi_tilde_direct, &cfg)?;

    let mut residual_w = 0.0;
    for i in 0..k {
        let implied = 1.0 / proj.sigma_diag[i] - lambda1w[i];
        residual_w += (implied - lambda2w) * (implied - lambda2w);
    }
    residual_w /= k as f64;
    let mut residual_z = 0.0;
    for i in 0..n {
        let implied = 1.0 / proj.z_var_diag[i] - lambda1z[i];
        residual_z += (implied - lambda2z) * (implied - lambda2z);
    }
    residual_z /= n as f64;

    let conj_residual = (lambda2w * chi_w - alpha * (1.0 - lambda2z * chi_z)).abs();
    Ok(GlmLocalLawReport {
        lambda2w,
        lambda2z,
        chi_w,
        chi_z,
        residual_w,
        residual_z,
        conj_residual,
    })
}

/// Solve `l * R_Mz(-l (1 - l chi_z)) = 1` for `l` in `(0, 1/chi_z)`,
/// starting from the value implied by the directly computed trace.
fn solve_z_scalar(
    spec_mz: &EmpiricalSpectrum,
    chi_z: f64,
    chi_tilde_direct: f64,
    cfg: &BracketConfig,
) -> Result<f64> {
    let f = |l: f64| -> Result<f64> {
        let arg = l * (1.0 - l * chi_z);
        if arg <= 0.0 {
            return Err(CoreError::OutOfDomain(format!(
                "z trace argument {arg} nonpositive at l = {l}"
            )));
        }
        Ok(l * r_transform(spec_mz, -arg, cfg)? - 1.0)
    };
    let upper = 1.0 / chi_z;
    let init = if chi_tilde_direct > 0.0 {
        (1.0 / r_transform(spec_mz, -chi_tilde_direct, cfg)?).clamp(1e-12, upper * (1.0 - 1e-9))
    } else {
        0.5 * upper
    };

    // bracket around the initial guess, falling back to a grid scan
    let mut lo = None;
    let mut hi = None;
    let mut prev: Option<(f64, f64)> = None;
    let factors = [0.5, 0.8, 0.95, 1.0, 1.05, 1.25, 2.0];
    for &fac in &factors {
        let l = (init * fac).clamp(1e-12, upper * (1.0 - 1e-9));
        if let Ok(v) = f(l) {
            if let Some((pl, pv)) = prev {
                if pv <= 0.0 && v >= 0.0 {
                    lo = Some(pl);
                    hi = Some(l);
                    break;
                }
            }
            prev = Some((l, v));
        }
    }
    if lo.is_none() {
        let grid_n = 128;
        let mut prev: Option<(f64, f64)> = None;
        for i in 1..grid_n {
            let l = upper * i as f64 / grid_n as f64;
            match f(l) {
                Ok(v) => {
                    if let Some((pl, pv)) = prev {
                        if pv <= 0.0 && v >= 0.0 {
                            lo = Some(pl);
                            hi = Some(l);
                            break;
                        }
                    }
                    prev = Some((l, v));
                }
                Err(_) => {
                    prev = None;
                }
            }
        }
    }
    let (mut lo, mut hi) = match (lo, hi) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(CoreError::OutOfDomain(
                "no bracket for the z-side scalar fixed point".into(),
            ))
        }
    };
    let mut l = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = f(l)?;
        if v.abs() < 1e-12 {
            return Ok(l);
        }
        if v > 0.0 {
            hi = l;
        } else {
            lo = l;
        }
        l = 0.5 * (lo + hi);
    }
    Ok(l)
}

/// Effective scalar replacements for diagonal first-group precisions,
/// solved by damped fixed-point iteration over the squared-singular-value
/// spectrum, with the mirrored (second formulation) scalars attached for
/// cross-checking.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EffectiveScalars {
    pub lambda1w_eff: f64,
    pub lambda1z_eff: f64,
    pub chi_w: f64,
    pub chi_z: f64,
    pub lambda2w: f64,
    pub lambda2z: f64,
    pub iterations: usize,
    /// Mirrored-formulation value that should reproduce `lambda1w_eff`.
    pub remark2_lambda1w: f64,
    /// Mirrored-formulation value that should reproduce `lambda1z_eff`.
    pub remark2_lambda1z: f64,
}

/// Solve the coupled effective-scalar system (damping 0.5, up to 10^4
/// iterations): given `(l1w, l1z)`, the block traces follow from the
/// t-spectrum sums, the Gaussian-side scalars from `l2s = 1/chi_s - l1s`,
/// and the refreshed effective scalars from `R_{L1w}(-chi_w)` and the
/// S-transform relation `l1z = 1/S_{L1z}(-l2w chi_w / alpha)`.
pub fn solve_effective_scalars(
    lambda1w_spec: &EmpiricalSpectrum,
    lambda1z_spec: &EmpiricalSpectrum,
    t_spectrum: &Array1<f64>,
    alpha: f64,
    tol: f64,
) -> Result<EffectiveScalars> {
    if tol <= 0.0 {
        return Err(CoreError::InvalidParameter("tol must be > 0".into()));
    }
    if lambda1w_spec.min() <= 0.0 || lambda1z_spec.min() <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "effective-scalar solve needs strictly positive precision spectra".into(),
        ));
    }
    let k = t_spectrum.len();
    let n = (alpha * k as f64).round().max(1.0) as usize;
    let cfg = BracketConfig::default();
    let traces = |l1w: f64, l1z: f64| -> Result<(f64, f64)> {
        let mut sw = 0.0;
        let mut sz = 0.0;
        for &t in t_spectrum.iter() {
            let d = l1w + l1z * t;
            if d <= 0.0 {
                return Err(CoreError::SingularMatrix(format!(
                    "nonpositive spectral denominator {d}"
                )));
            }
            sw += 1.0 / d;
            sz += t / d;
        }
        Ok((sw / k as f64, sz / n as f64))
    };

    let mut l1w = lambda1w_spec.mean();
    let mut l1z = lambda1z_spec.mean();
    let damping = 0.5;
    let max_iter = 10_000;
    let mut iterations = 0;
    let mut converged = false;
    let mut chi_w = 0.0;
    let mut chi_z = 0.0;
    while iterations < max_iter {
        iterations += 1;
        let (cw, cz) = traces(l1w, l1z)?;
        chi_w = cw;
        chi_z = cz;
        let l2w = 1.0 / chi_w - l1w;
        let target_w = r_transform(lambda1w_spec, -chi_w, &cfg)?;
        let target_z = 1.0 / s_transform(lambda1z_spec, -l2w * chi_w / alpha, &cfg)?;
        let residual = (target_w - l1w).abs().max((target_z - l1z).abs());
        l1w += damping * (target_w - l1w);
        l1z += damping * (target_z - l1z);
        if residual < tol {
            converged = true;
            let (cw, cz) = traces(l1w, l1z)?;
            chi_w = cw;
            chi_z = cz;
            break;
        }
    }
    if !converged {
        return Err(CoreError::NotConverged(format!(
            "effective scalars did not reach tol {tol} in {max_iter} iterations"
        )));
    }
    let lambda2w = 1.0 / chi_w - l1w;
    let lambda2z = 1.0 / chi_z - l1z;

    // mirrored formulation
    let chi_tilde_z = lambda2z * (1.0 - lambda2z * chi_z);
    let remark2_lambda1z = r_transform(lambda1z_spec, -chi_z, &cfg)?;
    let inv_w_spec = lambda1w_spec.inverse_spectrum()?;
    let remark2_lambda1w = s_transform(&inv_w_spec, -alpha * chi_tilde_z / lambda2z, &cfg)?;

    Ok(EffectiveScalars {
        lambda1w_eff: l1w,
        lambda1z_eff: l1z,
        chi_w,
        chi_z,
        lambda2w,
        lambda2z,
        iterations,
        remark2_lambda1w,
        remark2_lambda1z,
    })
}

/// Entrywise residuals of the z-side Woodbury identities: the diagonal of
/// `(L1z^{-1} + X L1w^{-1} X^T)^{-1}` against both closed forms, plus the
/// scalar-shift identity
/// `(L1z^{-1} + l^{-1} I)^{-1} = l I - l^2 (L1z + l I)^{-1}`.
pub fn woodbury_identity_check(
    lambda1w: &Array1<f64>,
    lambda1z: &Array1<f64>,
    x: &Array2<f64>,
) -> Result<f64> {
    let (n, k) = (x.nrows(), x.ncols());
    if lambda1w.len() != k || lambda1z.len() != n {
        return Err(CoreError::DimensionMismatch {
            what: "precision diagonals",
            expected: k,
            got: lambda1w.len(),
        });
    }
    if lambda1w.iter().any(|&v| v <= 0.0) || lambda1z.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::InvalidParameter(
            "precisions must be strictly positive".into(),
        ));
    }
    let proj = projection_parts(x, lambda1w, lambda1z, &Array1::zeros(k), &Array1::zeros(n))?;
    if proj.z_var_diag.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::DegenerateSpectrum(
            "zero z-side variance; implied site precision is infinite".into(),
        ));
    }

    // Sigma~ = (L1z^{-1} + X L1w^{-1} X^T)^{-1}
    let mut xw = x.clone();
    for (mut col, &l) in xw.columns_mut().into_iter().zip(lambda1w.iter()) {
        col.mapv_inplace(|v| v / l);
    }
    let mut m = xw.dot(&x.t());
    for i in 0..n {
        m[[i, i]] += 1.0 / lambda1z[i];
    }
    let sigma_tilde = linalg::dense_inverse(&m)?;

    let mut max_resid = 0.0_f64;
    let mut lambda2z_sum = 0.0;
    for i in 0..n {
        let l1 = lambda1z[i];
        let zv = proj.z_var_diag[i];
        let lhs = sigma_tilde[[i, i]];
        let via_projection = l1 - l1 * l1 * zv;
        let l2 = 1.0 / zv - l1;
        lambda2z_sum += l2;
        let via_harmonic = 1.0 / (1.0 / l1 + 1.0 / l2);
        max_resid = max_resid.max((lhs - via_projection).abs());
        max_resid = max_resid.max((lhs - via_harmonic).abs());
    }

    // scalar-shift identity at the block-average implied precision
    let l = lambda2z_sum / n as f64;
    for i in 0..n {
        let lhs = 1.0 / (1.0 / lambda1z[i] + 1.0 / l);
        let rhs = l - l * l / (lambda1z[i] + l);
        max_resid = max_resid.max((lhs - rhs).abs());
    }
    Ok(max_resid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn implied_constant_shift_is_exact() {
        let l1 = randmat::diag_from_law(16, DiagLaw::Uniform { a: 1.0, b: 2.0 }, 3).unwrap();
        let j = Array2::from_diag(&Array1::from_elem(16, 0.7));
        let (l2, chi) = implied_lambda2_diagonal(&l1, &j).unwrap();
        for v in l2.iter() {
            assert_abs_diff_eq!(*v, 0.7, epsilon = 1e-12);
        }
        let expect: f64 = l1.iter().map(|v| 1.0 / (v + 0.7)).sum::<f64>() / 16.0;
        assert_abs_diff_eq!(chi, expect, epsilon = 1e-13);
    }

    #[test]
    fn implied_zero_shift_is_zero() {
        let l1 = Array1::from_elem(8, 1.5);
        let j = Array2::zeros((8, 8));
        let (l2, _) = implied_lambda2_diagonal(&l1, &j).unwrap();
        assert!(linalg::max_abs(&l2) < 1e-13);
    }

    #[test]
    fn implied_matches_dense_oracle() {
        let l1 = randmat::diag_from_law(6, DiagLaw::Uniform { a: 1.0, b: 2.0 }, 5).unwrap();
        let (j, _) = haar_rotated(6, DiagLaw::Uniform { a: 0.0, b: 1.0 }, 6, 7).unwrap();
        let (l2, chi) = implied_lambda2_diagonal(&l1, &j).unwrap();
        let mut m = j.clone();
        for i in 0..6 {
            m[[i, i]] += l1[i];
        }
        let inv = linalg::dense_inverse(&m).unwrap();
        for i in 0..6 {
            assert_abs_diff_eq!(l2[i], 1.0 / inv[[i, i]] - l1[i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(chi, inv.diag().sum() / 6.0, epsilon = 1e-13);
    }

    #[test]
    fn constant_shift_experiment_has_zero_deviation() {
        let runs = local_law_experiment(
            DiagLaw::Uniform { a: 1.0, b: 2.0 },
            JEnsemble::ConstantShift { shift: 0.5 },
            &[32, 64],
            &[1, 2, 3],
        )
        .unwrap();
        assert_eq!(runs.reports.len(), 6);
        assert!(runs.excluded.is_empty());
        for r in &runs.reports {
            assert!(r.l2_deviation < 1e-20, "dev={}", r.l2_deviation);
            assert_abs_diff_eq!(r.lambda2_predicted, 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn decomposition_rejects_point_mass() {
        let l1 = Array1::from_elem(16, 1.2);
        let j = Array2::from_diag(&Array1::from_elem(16, 0.4));
        assert!(matches!(
            resolvent_decomposition_check(&l1, &j, 8),
            Err(CoreError::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn decomposition_reconstructs_small_instance() {
        let n = 48;
        let l1 = randmat::diag_from_law(n, DiagLaw::Uniform { a: 1.0, b: 2.0 }, 11).unwrap();
        let (j, _) = haar_rotated(n, DiagLaw::Uniform { a: 0.0, b: 1.0 }, 12, 13).unwrap();
        let rep = resolvent_decomposition_check(&l1, &j, 64).unwrap();
        assert!(rep.spectral_radius_ejey < 1.0, "{rep:?}");
        assert!(rep.reconstruction_error < 1e-8, "{rep:?}");
        assert!(rep.phi_e_j.abs() < 1e-10, "{rep:?}");
        assert!(rep.phi_e_y.abs() < 1e-10, "{rep:?}");
    }

    #[test]
    fn rademacher_zero_factor() {
        let (a, b) = rademacher_trace_check(&Array2::zeros((16, 16)), &[1, 2, 3]);
        assert_eq!(a, 0.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn rademacher_identity_factor_scales() {
        let n = 4096;
        let seeds: Vec<u64> = (0..50).collect();
        let (a, _) = rademacher_trace_check(&Array2::eye(n), &seeds);
        // mean |phi(Z)| ~ sqrt(2/(pi n))
        assert!(a < 4.0 / (n as f64).sqrt(), "a={a}");
    }

    #[test]
    fn glm_check_orthogonal_design_is_exact() {
        let k = 24;
        let x = randmat::haar_orthogonal(k, 17);
        let lambda1w = Array1::from_elem(k, 0.8);
        let lambda1z = Array1::from_elem(k, 1.9);
        let rep = glm_local_law_check(&lambda1w, &lambda1z, &x).unwrap();
        assert_abs_diff_eq!(rep.lambda2w, 1.9, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.lambda2z, 0.8, epsilon = 1e-9);
        assert!(rep.residual_w < 1e-18, "{rep:?}");
        assert!(rep.residual_z < 1e-18, "{rep:?}");
        assert!(rep.conj_residual < 1e-10, "{rep:?}");
    }

    #[test]
    fn effective_scalars_point_mass_reduces_to_orthogonal() {
        let spec_w = EmpiricalSpectrum::new(vec![0.8; 16]).unwrap();
        let spec_z = EmpiricalSpectrum::new(vec![1.9; 16]).unwrap();
        let t = Array1::from_elem(16, 1.0);
        let out = solve_effective_scalars(&spec_w, &spec_z, &t, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(out.lambda1w_eff, 0.8, epsilon = 1e-9);
        assert_abs_diff_eq!(out.lambda1z_eff, 1.9, epsilon = 1e-9);
        assert_abs_diff_eq!(out.lambda2w, 1.9, epsilon = 1e-8);
        assert_abs_diff_eq!(out.lambda2z, 0.8, epsilon = 1e-8);
        assert_abs_diff_eq!(out.remark2_lambda1w, 0.8, epsilon = 1e-8);
        assert_abs_diff_eq!(out.remark2_lambda1z, 1.9, epsilon = 1e-8);
    }

    #[test]
    fn effective_scalars_two_point_consistency() {
        // non-degenerate spectra: the mirrored formulation must agree
        // because the underlying transform identities are exact
        let spec_w = EmpiricalSpectrum::new(
            (0..32)
                .map(|i| if i % 2 == 0 { 0.7 } else { 1.3 })
                .collect(),
        )
        .unwrap();
        let spec_z = EmpiricalSpectrum::new(
            (0..32)
                .map(|i| if i % 3 == 0 { 1.0 } else { 2.0 })
                .collect(),
        )
        .unwrap();
        let t = randmat::diag_from_law(64, DiagLaw::Uniform { a: 0.3, b: 1.8 }, 9).unwrap();
        let out = solve_effective_scalars(&spec_w, &spec_z, &t, 0.5, 1e-10).unwrap();
        assert!(
            (out.remark2_lambda1w - out.lambda1w_eff).abs() < 1e-9,
            "{out:?}"
        );
        assert!(
            (out.remark2_lambda1z - out.lambda1z_eff).abs() < 1e-9,
            "{out:?}"
        );
    }

    #[test]
    fn woodbury_zero_design_is_degenerate() {
        let x = Array2::zeros((4, 3));
        let lw = Array1::from_elem(3, 1.0);
        let lz = Array1::from_elem(4, 1.0);
        assert!(matches!(
            woodbury_identity_check(&lw, &lz, &x),
            Err(CoreError::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn woodbury_orthogonal_scalar_case() {
        let k = 12;
        let x = randmat::haar_orthogonal(k, 23);
        let lw = Array1::from_elem(k, 0.9);
        let lz = Array1::from_elem(k, 1.4);
        let resid = woodbury_identity_check(&lw, &lz, &x).unwrap();
        assert!(resid < 1e-12, "resid={resid}");
    }

    #[test]
    fn woodbury_random_instance() {
        let x = randmat::gaussian_iid(32, 20, 0.4, 31);
        let lw = randmat::diag_from_law(20, DiagLaw::Uniform { a: 0.5, b: 1.5 }, 32).unwrap();
        let lz = randmat::diag_from_law(32, DiagLaw::Uniform { a: 0.5, b: 1.5 }, 33).unwrap();
        let resid = woodbury_identity_check(&lw, &lz, &x).unwrap();
        assert!(resid < 1e-10, "resid={resid}");
    }
}
