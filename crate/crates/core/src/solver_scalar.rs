//! Scalar-EP solver. A one-time SVD of the design matrix turns every sweep
//! into O(K^2 + N K) work: the w-block covariance trace and the projected
//! mean are evaluated through the singular basis, so no factorization is
//! needed inside the iteration. Also hosts the spectrum-only fixed-point
//! evaluation that produces the scalar site precisions from the squared
//! singular values alone.

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::model::{DiagOrScalar, EpState, GlmProblem, InitConfig, SolverFlavor, init_state,
    validate_problem};
use crate::sites::CavityGaussian;
use crate::solver_diag::{SolveResult, SolverConfig, SweepStats, solve_from, tilted_w, tilted_z};

/// Precomputed SVD `X = U S V^T` with the squared singular values zero-padded
/// to length K, so the w-side spectral sums stay well-defined when N < K.
#[derive(Debug, Clone)]
pub struct SvdCache {
    pub singular_values: Array1<f64>,
    pub right_basis: Array2<f64>,
    pub left_basis: Array2<f64>,
    pub t: Array1<f64>,
}

/// Full SVD of the design matrix. One-time O(max(N,K)^3) cost, amortized
/// over all subsequent sweeps.
pub fn precompute_svd(x: &Array2<f64>) -> Result<SvdCache> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("design matrix"));
    }
    use ndarray_linalg::SVD;
    let (u, s, vt) = x
        .svd(true, true)
        .map_err(|e| CoreError::SingularMatrix(format!("svd failed: {e}")))?;
    let left_basis = u.expect("left singular vectors requested");
    let right_basis = vt.expect("right singular vectors requested").t().to_owned();
    let k = x.ncols();
    let mut t = Array1::zeros(k);
    for (i, sv) in s.iter().enumerate() {
        t[i] = sv * sv;
    }
    Ok(SvdCache {
        singular_values: s,
        right_basis,
        left_basis,
        t,
    })
}

impl SvdCache {
    pub fn k(&self) -> usize {
        self.right_basis.nrows()
    }

    pub fn n(&self) -> usize {
        self.left_basis.nrows()
    }

    /// Reconstruct the design matrix from the factors (test support).
    pub fn reconstruct(&self) -> Array2<f64> {
        let (n, k) = (self.n(), self.k());
        let m = self.singular_values.len();
        let mut us = self.left_basis.slice(ndarray::s![.., ..m]).to_owned();
        for (mut col, &sv) in us.columns_mut().into_iter().zip(self.singular_values.iter()) {
            col.mapv_inplace(|v| v * sv);
        }
        let vt = self.right_basis.slice(ndarray::s![.., ..m]).t().to_owned();
        let out = us.dot(&vt);
        debug_assert_eq!(out.dim(), (n, k));
        out
    }
}

/// Spectral evaluation of the scalar-restricted Gaussian projection:
///
/// `chi_w = (1/K) sum_k 1/(l1w + l1z t_k)`,
/// `chi_z = (1/N) sum_k t_k/(l1w + l1z t_k)`,
/// and the projected mean through the singular basis, in O(K^2 + N^2) with
/// no factorization.
pub fn scalar_projection(
    cache: &SvdCache,
    lambda1w: f64,
    lambda1z: f64,
    gamma1w: &Array1<f64>,
    gamma1z: &Array1<f64>,
    alpha: f64,
) -> Result<(Array1<f64>, f64, f64)> {
    let (n, k) = (cache.n(), cache.k());
    if gamma1w.len() != k {
        return Err(CoreError::DimensionMismatch {
            what: "gamma1w",
            expected: k,
            got: gamma1w.len(),
        });
    }
    if gamma1z.len() != n {
        return Err(CoreError::DimensionMismatch {
            what: "gamma1z",
            expected: n,
            got: gamma1z.len(),
        });
    }
    debug_assert!((alpha - n as f64 / k as f64).abs() < 1e-9);

    let (chi_w, chi_z) = spectral_traces(&cache.t, lambda1w, lambda1z, n)?;

    // b = gamma1w + X^T gamma1z, through the basis
    let u_coef = cache.left_basis.t().dot(gamma1z);
    let m = cache.singular_values.len();
    let mut xtg = Array1::zeros(k);
    for i in 0..m.min(k) {
        xtg[i] = cache.singular_values[i] * u_coef[i];
    }
    let b = gamma1w + &cache.right_basis.dot(&xtg);
    let mut c = cache.right_basis.t().dot(&b);
    for i in 0..k {
        c[i] /= lambda1w + lambda1z * cache.t[i];
    }
    let mu = cache.right_basis.dot(&c);
    Ok((mu, chi_w, chi_z))
}

fn spectral_traces(t: &Array1<f64>, lambda1w: f64, lambda1z: f64, n: usize) -> Result<(f64, f64)> {
    let k = t.len();
    let mut sum_w = 0.0;
    let mut sum_z = 0.0;
    for &tk in t.iter() {
        let d = lambda1w + lambda1z * tk;
        if d <= 0.0 {
            return Err(CoreError::SingularMatrix(format!(
                "nonpositive spectral denominator {d} at t = {tk}"
            )));
        }
        sum_w += 1.0 / d;
        sum_z += tk / d;
    }
    Ok((sum_w / k as f64, sum_z / n as f64))
}

/// One expectation-consistency sweep of the scalar solver. Site precision
/// updates use block-averaged variances; the natural means stay
/// per-coordinate. A nonpositive scalar precision target skips only the
/// scalar update for that block this sweep (reported in the stats).
pub fn ep_sweep_scalar(
    p: &GlmProblem,
    state: &mut EpState,
    cache: &SvdCache,
    cfg: &SolverConfig,
) -> Result<SweepStats> {
    if state.flavor() != SolverFlavor::Scalar {
        return Err(CoreError::InvalidParameter(
            "scalar sweep requires a scalar-flavor state".into(),
        ));
    }
    cfg.validate()?;
    let (n, k) = (p.n(), p.k());
    let prev_eta_w = state.eta_w.clone();
    let prev_chi_w = state.chi_w.clone();
    let prev_eta_z = state.eta_z.clone();
    let prev_chi_z = state.chi_z.clone();

    let mut lam1w = state.lambda1w.expect_scalar()?;
    let mut lam1z = state.lambda1z.expect_scalar()?;
    let mut lam2w = state.lambda2w.expect_scalar()?;
    let mut lam2z = state.lambda2z.expect_scalar()?;
    let mut stats = SweepStats::default();

    // (a) spectral projection
    let (mu, chi_w_avg, chi_z_avg) = scalar_projection(
        cache,
        lam1w,
        lam1z,
        &state.gamma1w,
        &state.gamma1z,
        p.alpha,
    )?;
    let z_mean = p.x.dot(&mu);
    state.mu = mu.clone();
    state.sigma_diag.fill(chi_w_avg);

    // (b) Gaussian-side scalar matching
    {
        let chi_bar = chi_w_avg.max(cfg.min_variance);
        let lam_target = 1.0 / chi_bar - lam1w;
        if lam_target <= 0.0 {
            stats.negative_variance_w += 1;
        } else {
            lam2w = cfg.damping * lam_target + (1.0 - cfg.damping) * lam2w;
        }
        for i in 0..k {
            let gam_target = mu[i] / chi_bar - state.gamma1w[i];
            state.gamma2w[i] =
                cfg.damping * gam_target + (1.0 - cfg.damping) * state.gamma2w[i];
        }
        let prec = lam1w + lam2w;
        for i in 0..k {
            state.chi_w[i] = 1.0 / prec;
            state.eta_w[i] = (state.gamma1w[i] + state.gamma2w[i]) / prec;
        }

        let chi_bar = chi_z_avg.max(cfg.min_variance);
        let lam_target = 1.0 / chi_bar - lam1z;
        if lam_target <= 0.0 {
            stats.negative_variance_z += 1;
        } else {
            lam2z = cfg.damping * lam_target + (1.0 - cfg.damping) * lam2z;
        }
        for i in 0..n {
            let gam_target = z_mean[i] / chi_bar - state.gamma1z[i];
            state.gamma2z[i] =
                cfg.damping * gam_target + (1.0 - cfg.damping) * state.gamma2z[i];
        }
        let prec = lam1z + lam2z;
        for i in 0..n {
            state.chi_z[i] = 1.0 / prec;
            state.eta_z[i] = (state.gamma1z[i] + state.gamma2z[i]) / prec;
        }
    }

    // (c) tilted-side scalar matching
    {
        let mut eta_hat = Array1::zeros(k);
        let mut chi_hat = Array1::zeros(k);
        for i in 0..k {
            let cavity = CavityGaussian::from_natural(state.gamma2w[i], lam2w)?;
            let t = tilted_w(p, cavity)?;
            eta_hat[i] = t.mean;
            chi_hat[i] = t.var.max(cfg.min_variance);
        }
        let chi_avg = chi_hat.sum() / k as f64;
        let lam_target = 1.0 / chi_avg - lam2w;
        if lam_target <= 0.0 {
            stats.negative_variance_w += 1;
        } else {
            lam1w = cfg.damping * lam_target + (1.0 - cfg.damping) * lam1w;
        }
        for i in 0..k {
            let gam_target = eta_hat[i] / chi_avg - state.gamma2w[i];
            state.gamma1w[i] =
                cfg.damping * gam_target + (1.0 - cfg.damping) * state.gamma1w[i];
        }
        state.eta_w = eta_hat;
        state.chi_w = chi_hat;

        let mut eta_hat = Array1::zeros(n);
        let mut chi_hat = Array1::zeros(n);
        for i in 0..n {
            let cavity = CavityGaussian::from_natural(state.gamma2z[i], lam2z)?;
            let t = tilted_z(p, cavity, p.y[i])?;
            eta_hat[i] = t.mean;
            chi_hat[i] = t.var.max(cfg.min_variance);
        }
        let chi_avg = chi_hat.sum() / n as f64;
        let lam_target = 1.0 / chi_avg - lam2z;
        if lam_target <= 0.0 {
            stats.negative_variance_z += 1;
        } else {
            lam1z = cfg.damping * lam_target + (1.0 - cfg.damping) * lam1z;
        }
        for i in 0..n {
            let gam_target = eta_hat[i] / chi_avg - state.gamma2z[i];
            state.gamma1z[i] =
                cfg.damping * gam_target + (1.0 - cfg.damping) * state.gamma1z[i];
        }
        state.eta_z = eta_hat;
        state.chi_z = chi_hat;
    }

    state.lambda1w = DiagOrScalar::Scalar(lam1w);
    state.lambda1z = DiagOrScalar::Scalar(lam1z);
    state.lambda2w = DiagOrScalar::Scalar(lam2w);
    state.lambda2z = DiagOrScalar::Scalar(lam2z);

    stats.max_moment_change = linalg::max_abs_diff(&state.eta_w, &prev_eta_w)
        .max(linalg::max_abs_diff(&state.chi_w, &prev_chi_w))
        .max(linalg::max_abs_diff(&state.eta_z, &prev_eta_z))
        .max(linalg::max_abs_diff(&state.chi_z, &prev_chi_z));
    Ok(stats)
}

/// Scalar solve with an internally computed SVD cache.
pub fn solve_scalar(p: &GlmProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    let cache = precompute_svd(&p.x)?;
    solve_scalar_with_cache(p, &cache, cfg)
}

/// Scalar solve reusing a caller-provided SVD cache (benchmark path).
pub fn solve_scalar_with_cache(
    p: &GlmProblem,
    cache: &SvdCache,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    validate_problem(p)?;
    let state = init_state(p, SolverFlavor::Scalar, InitConfig::default())?;
    solve_from(p, state, cfg, &mut |p, s, c| ep_sweep_scalar(p, s, cache, c))
}

/// Scalar fixed-point quantities obtained from the squared-singular-value
/// spectrum alone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectrumScalars {
    pub lambda2w: f64,
    pub lambda2z: f64,
    pub chi_w: f64,
    pub chi_z: f64,
}

/// Evaluate the scalar block traces directly from a squared-singular-value
/// spectrum (length K, zero-padded) and read off the Gaussian-side scalar
/// precisions `l2s = 1/chi_s - l1s`. The trace identity
/// `l2w chi_w = alpha (1 - l2z chi_z)` is exact algebra for these sums and
/// is asserted to 1e-10.
pub fn lambda2_from_spectrum(
    spectrum_t: &Array1<f64>,
    lambda1w: f64,
    lambda1z: f64,
    alpha: f64,
) -> Result<SpectrumScalars> {
    let k = spectrum_t.len();
    if k == 0 {
        return Err(CoreError::InvalidParameter("empty spectrum".into()));
    }
    let n = (alpha * k as f64).round() as usize;
    if n == 0 {
        return Err(CoreError::InvalidParameter(format!(
            "alpha {alpha} with K = {k} gives N = 0"
        )));
    }
    let (chi_w, chi_z) = spectral_traces(spectrum_t, lambda1w, lambda1z, n)?;
    if chi_z <= 0.0 {
        return Err(CoreError::SingularMatrix(
            "z-side trace is zero (all-zero spectrum)".into(),
        ));
    }
    let lambda2w = 1.0 / chi_w - lambda1w;
    let lambda2z = 1.0 / chi_z - lambda1z;
    let consistency = (lambda2w * chi_w - alpha * (1.0 - lambda2z * chi_z)).abs();
    assert!(
        consistency < 1e-10,
        "trace identity violated: residual {consistency:.3e}"
    );
    Ok(SpectrumScalars {
        lambda2w,
        lambda2z,
        chi_w,
        chi_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::model::{LikelihoodSpec, PriorSpec};
    use crate::randmat;
    use crate::solver_diag::gaussian_projection;
    use approx::assert_abs_diff_eq;

    #[test]
    fn svd_identity_and_diag() {
        let c = precompute_svd(&Array2::eye(3)).unwrap();
        for sv in c.singular_values.iter() {
            assert_abs_diff_eq!(*sv, 1.0, epsilon = 1e-14);
        }
        let x = Array2::from_diag(&array![3.0, 0.0]);
        let c = precompute_svd(&x).unwrap();
        assert_abs_diff_eq!(c.singular_values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.singular_values[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_reconstruction_oracle() {
        let x = randmat::gaussian_iid(6, 4, 1.3, 5);
        let c = precompute_svd(&x).unwrap();
        assert!(max_abs_diff(&c.reconstruct(), &x) < 1e-10);
        assert!(randmat::orthogonality_residual(&c.left_basis) < 1e-10);
        assert!(randmat::orthogonality_residual(&c.right_basis) < 1e-10);
        // wide matrix: zero padding of t
        let x = randmat::gaussian_iid(3, 5, 1.0, 6);
        let c = precompute_svd(&x).unwrap();
        assert!(max_abs_diff(&c.reconstruct(), &x) < 1e-10);
        assert_eq!(c.t.len(), 5);
        assert_abs_diff_eq!(c.t[3], 0.0);
        assert_abs_diff_eq!(c.t[4], 0.0);
    }

    #[test]
    fn scalar_projection_orthogonal_design() {
        let k = 4;
        let cache = precompute_svd(&Array2::<f64>::eye(k)).unwrap();
        let (mu, chi_w, chi_z) = scalar_projection(
            &cache,
            2.0,
            3.0,
            &Array1::zeros(k),
            &Array1::zeros(k),
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(chi_w, 1.0 / 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(chi_z, 1.0 / 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(crate::linalg::max_abs(&mu), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn scalar_projection_zero_design() {
        let cache = precompute_svd(&Array2::<f64>::zeros((3, 5))).unwrap();
        let (_, chi_w, chi_z) = scalar_projection(
            &cache,
            2.0,
            1.0,
            &Array1::zeros(5),
            &Array1::zeros(3),
            0.6,
        )
        .unwrap();
        assert_abs_diff_eq!(chi_w, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(chi_z, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn scalar_projection_matches_dense_oracle() {
        let x = randmat::gaussian_iid(8, 5, 0.9, 11);
        let y = randmat::gaussian_iid(8, 1, 1.0, 12).column(0).to_owned();
        let p = crate::model::GlmProblem::new(
            x.clone(),
            y,
            PriorSpec::Gaussian {
                mean: 0.0,
                var: 1.0,
            },
            LikelihoodSpec::Gaussian { noise_var: 1.0 },
        )
        .unwrap();
        let cache = precompute_svd(&x).unwrap();
        let gw = randmat::gaussian_iid(5, 1, 1.0, 13).column(0).to_owned();
        let gz = randmat::gaussian_iid(8, 1, 1.0, 14).column(0).to_owned();
        let (l1w, l1z) = (1.4, 0.6);
        let (mu, chi_w, chi_z) =
            scalar_projection(&cache, l1w, l1z, &gw, &gz, p.alpha).unwrap();

        // dense-solver oracle with scalar site precisions
        let mut s = crate::model::init_state(
            &p,
            crate::model::SolverFlavor::Scalar,
            crate::model::InitConfig::default(),
        )
        .unwrap();
        s.lambda1w = DiagOrScalar::Scalar(l1w);
        s.lambda1z = DiagOrScalar::Scalar(l1z);
        s.gamma1w = gw;
        s.gamma1z = gz;
        let proj = gaussian_projection(&p, &s).unwrap();
        assert!(max_abs_diff(&mu, &proj.mu) < 1e-10);
        assert_abs_diff_eq!(chi_w, proj.sigma_diag.sum() / 5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(chi_z, proj.z_var_diag.sum() / 8.0, epsilon = 1e-10);
    }

    #[test]
    fn spectrum_scalars_orthogonal_case() {
        // unit spectrum, alpha = 1: l2w = l1z, l2z = l1w
        let t = Array1::from_elem(16, 1.0);
        let out = lambda2_from_spectrum(&t, 0.7, 2.2, 1.0).unwrap();
        assert_abs_diff_eq!(out.lambda2w, 2.2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.lambda2z, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_scalars_match_projection_traces() {
        let x = randmat::gaussian_iid(512, 1024, 1.0 / 32.0, 3);
        let cache = precompute_svd(&x).unwrap();
        let (l1w, l1z) = (0.9, 1.7);
        let out = lambda2_from_spectrum(&cache.t, l1w, l1z, 0.5).unwrap();
        let (_, chi_w, chi_z) = scalar_projection(
            &cache,
            l1w,
            l1z,
            &Array1::zeros(1024),
            &Array1::zeros(512),
            0.5,
        )
        .unwrap();
        assert_abs_diff_eq!(out.chi_w, chi_w, epsilon = 1e-12);
        assert_abs_diff_eq!(out.chi_z, chi_z, epsilon = 1e-12);
        assert_abs_diff_eq!(out.lambda2w, 1.0 / chi_w - l1w, epsilon = 1e-8);
    }

    #[test]
    fn all_gaussian_scalar_solver_is_exact_ridge() {
        let x = randmat::gaussian_iid(12, 6, 0.8, 21);
        let y = randmat::gaussian_iid(12, 1, 1.0, 22).column(0).to_owned();
        let p = crate::model::GlmProblem::new(
            x.clone(),
            y.clone(),
            PriorSpec::Gaussian {
                mean: 0.0,
                var: 1.0,
            },
            LikelihoodSpec::Gaussian { noise_var: 1.0 },
        )
        .unwrap();
        let cfg = SolverConfig {
            damping: 1.0,
            tol: 1e-10,
            ..Default::default()
        };
        let out = solve_scalar(&p, &cfg).unwrap();
        assert!(out.summary.converged);

        let mut a = x.t().dot(&x);
        for i in 0..6 {
            a[[i, i]] += 1.0;
        }
        let ridge = crate::linalg::dense_inverse(&a)
            .unwrap()
            .dot(&x.t().dot(&y));
        let mu = Array1::from_vec(out.summary.mean_w.clone());
        assert!(max_abs_diff(&mu, &ridge) < 1e-8, "{:?}", max_abs_diff(&mu, &ridge));

        // scalar trace closure at the fixed point
        let l1w = out.state.lambda1w.expect_scalar().unwrap();
        let l2w = out.state.lambda2w.expect_scalar().unwrap();
        let cache = precompute_svd(&x).unwrap();
        let (_, chi_w, _) = scalar_projection(
            &cache,
            l1w,
            out.state.lambda1z.expect_scalar().unwrap(),
            &out.state.gamma1w,
            &out.state.gamma1z,
            p.alpha,
        )
        .unwrap();
        assert_abs_diff_eq!(chi_w * (l1w + l2w), 1.0, epsilon = 1e-8);
    }
}
