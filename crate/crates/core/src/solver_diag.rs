//! Diagonal-EP fixed-point solver: full-covariance Gaussian projection with
//! per-coordinate site updates, parallel (all-coordinates-at-once) schedule
//! and damping.

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::model::{EpState, GlmProblem, InitConfig, LikelihoodSpec, PosteriorSummary, PriorSpec,
    SolverFlavor, init_state, validate_problem};
use crate::sites::{self, CavityGaussian, TiltedMoments};

/// Iteration schedule shared by both solvers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub damping: f64,
    pub min_variance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-8,
            damping: 0.5,
            min_variance: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tol > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if !(self.min_variance > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "min_variance must be > 0, got {}",
                self.min_variance
            )));
        }
        Ok(())
    }
}

/// Gaussian projection outputs: moments of the constrained Gaussian factor
/// product for the w block and the induced z block.
#[derive(Debug, Clone)]
pub struct Projection {
    pub mu: Array1<f64>,
    pub sigma_diag: Array1<f64>,
    pub z_mean: Array1<f64>,
    pub z_var_diag: Array1<f64>,
}

/// Per-sweep bookkeeping: residual and how many site updates were skipped
/// because the undamped target precision would have been negative.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SweepStats {
    pub max_moment_change: f64,
    pub negative_variance_w: usize,
    pub negative_variance_z: usize,
}

/// Solver output: summary, final state and the per-sweep residual trace.
/// A run that hits `max_iter` is reported with `converged = false` rather
/// than as an error, so no work is lost.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub summary: PosteriorSummary,
    pub state: EpState,
    pub trace: Vec<f64>,
}

/// One Cholesky factorization per call. `Sigma = (L1w + X^T L1z X)^{-1}`,
/// `mu = Sigma (g1w + X^T g1z)`, plus the z-side mean `X mu` and variance
/// diagonal `diag(X Sigma X^T)`. Cost O(K^3 + N K^2).
pub fn gaussian_projection(p: &GlmProblem, s: &EpState) -> Result<Projection> {
    let (n, k) = (p.n(), p.k());
    let lam_w = s.lambda1w.as_diagonal(k);
    let lam_z = s.lambda1z.as_diagonal(n);
    projection_parts(&p.x, &lam_w, &lam_z, &s.gamma1w, &s.gamma1z)
}

/// Projection for explicit diagonals, shared with the verification harness.
pub(crate) fn projection_parts(
    x: &Array2<f64>,
    lam_w: &Array1<f64>,
    lam_z: &Array1<f64>,
    gamma_w: &Array1<f64>,
    gamma_z: &Array1<f64>,
) -> Result<Projection> {
    let (n, k) = (x.nrows(), x.ncols());

    // A = diag(lam_w) + X^T diag(lam_z) X
    let mut scaled = x.clone();
    for (mut row, &l) in scaled.rows_mut().into_iter().zip(lam_z.iter()) {
        row.mapv_inplace(|v| v * l);
    }
    let mut a = x.t().dot(&scaled);
    for i in 0..k {
        a[[i, i]] += lam_w[i];
    }

    let l = linalg::cholesky_lower(&a)?;

    let b = gamma_w + &x.t().dot(gamma_z);
    let u = linalg::solve_lower(&l, &b.view().insert_axis(Axis(1)).to_owned())?;
    let mu = linalg::solve_upper_vec(&l, &u.index_axis(Axis(1), 0).to_owned())?;

    // Sigma_kk = sum_i (L^{-1})_{ik}^2
    let linv = linalg::solve_lower(&l, &Array2::eye(k))?;
    let sigma_diag = Array1::from_shape_fn(k, |j| linv.column(j).dot(&linv.column(j)));

    // diag(X Sigma X^T) via W = L^{-1} X^T
    let xt = x.t().as_standard_layout().to_owned();
    let w = linalg::solve_lower(&l, &xt)?;
    let z_var_diag = Array1::from_shape_fn(n, |j| w.column(j).dot(&w.column(j)));

    let z_mean = x.dot(&mu);
    Ok(Projection {
        mu,
        sigma_diag,
        z_mean,
        z_var_diag,
    })
}

/// Tilted moments of one coordinate of the exact factor group under its
/// Gaussian cavity: prior sites on the w block, likelihood sites on z.
pub(crate) fn tilted_w(p: &GlmProblem, cavity: CavityGaussian) -> Result<TiltedMoments> {
    match p.prior {
        PriorSpec::Gaussian { mean, var } => sites::tilted_gaussian_prior(cavity, mean, var),
        PriorSpec::SpikeSlab { rho, slab_var } => sites::tilted_spike_slab(cavity, rho, slab_var),
    }
}

pub(crate) fn tilted_z(p: &GlmProblem, cavity: CavityGaussian, y: f64) -> Result<TiltedMoments> {
    match p.likelihood {
        LikelihoodSpec::Gaussian { noise_var } => sites::tilted_gaussian_prior(cavity, y, noise_var),
        LikelihoodSpec::Probit { noise_var } => sites::tilted_probit(cavity, y, noise_var),
    }
}

/// Damped moment-matching update of one site block against target moments.
/// Returns the number of coordinates skipped because the undamped precision
/// target `1/chi - lambda_other` was negative.
pub(crate) fn match_site_block(
    lambda: &mut Array1<f64>,
    gamma: &mut Array1<f64>,
    lambda_other: &Array1<f64>,
    gamma_other: &Array1<f64>,
    target_mean: &Array1<f64>,
    target_var: &Array1<f64>,
    damping: f64,
    min_variance: f64,
) -> usize {
    let mut skipped = 0;
    for i in 0..lambda.len() {
        let chi = target_var[i].max(min_variance);
        let lam_target = 1.0 / chi - lambda_other[i];
        if lam_target <= 0.0 {
            skipped += 1;
            continue;
        }
        let gam_target = target_mean[i] / chi - gamma_other[i];
        lambda[i] = damping * lam_target + (1.0 - damping) * lambda[i];
        gamma[i] = damping * gam_target + (1.0 - damping) * gamma[i];
    }
    skipped
}

/// Refresh the cached moments to the Gaussian factor-product values
/// `chi_i = 1/(L1 + L2)_ii`, `eta_i = (g1 + g2)_i chi_i`.
fn refresh_caches_from_naturals(
    eta: &mut Array1<f64>,
    chi: &mut Array1<f64>,
    lambda1: &Array1<f64>,
    lambda2: &Array1<f64>,
    gamma1: &Array1<f64>,
    gamma2: &Array1<f64>,
) {
    for i in 0..eta.len() {
        let prec = lambda1[i] + lambda2[i];
        chi[i] = 1.0 / prec;
        eta[i] = (gamma1[i] + gamma2[i]) / prec;
    }
}

/// One full expectation-consistency sweep of the diagonal solver:
/// projection, Gaussian-side site update, tilted-side site update. All
/// coordinate updates within a stage read the pre-stage state.
pub fn ep_sweep_diagonal(
    p: &GlmProblem,
    state: &mut EpState,
    cfg: &SolverConfig,
) -> Result<SweepStats> {
    if state.flavor() != SolverFlavor::Diagonal {
        return Err(CoreError::InvalidParameter(
            "diagonal sweep requires a diagonal-flavor state".into(),
        ));
    }
    cfg.validate()?;
    let prev_eta_w = state.eta_w.clone();
    let prev_chi_w = state.chi_w.clone();
    let prev_eta_z = state.eta_z.clone();
    let prev_chi_z = state.chi_z.clone();

    // (a) Gaussian projection
    let proj = gaussian_projection(p, state)?;
    state.mu = proj.mu.clone();
    state.sigma_diag = proj.sigma_diag.clone();

    let mut stats = SweepStats::default();

    // (b) Gaussian-side (site 2) moment matching against the projection
    {
        let lam1w = state.lambda1w.expect_diagonal()?.clone();
        let lam1z = state.lambda1z.expect_diagonal()?.clone();
        let lam2w = match &mut state.lambda2w {
            crate::model::DiagOrScalar::Diagonal(d) => d,
            _ => unreachable!(),
        };
        stats.negative_variance_w += match_site_block(
            lam2w,
            &mut state.gamma2w,
            &lam1w,
            &state.gamma1w,
            &proj.mu,
            &proj.sigma_diag,
            cfg.damping,
            cfg.min_variance,
        );
        let lam2w = state.lambda2w.expect_diagonal()?.clone();
        refresh_caches_from_naturals(
            &mut state.eta_w,
            &mut state.chi_w,
            &lam1w,
            &lam2w,
            &state.gamma1w,
            &state.gamma2w,
        );

        let lam2z = match &mut state.lambda2z {
            crate::model::DiagOrScalar::Diagonal(d) => d,
            _ => unreachable!(),
        };
        stats.negative_variance_z += match_site_block(
            lam2z,
            &mut state.gamma2z,
            &lam1z,
            &state.gamma1z,
            &proj.z_mean,
            &proj.z_var_diag,
            cfg.damping,
            cfg.min_variance,
        );
        let lam2z = state.lambda2z.expect_diagonal()?.clone();
        refresh_caches_from_naturals(
            &mut state.eta_z,
            &mut state.chi_z,
            &lam1z,
            &lam2z,
            &state.gamma1z,
            &state.gamma2z,
        );
    }

    // (c) tilted-side (site 1) moment matching against the tilted moments
    // under the updated Gaussian cavities
    {
        let lam2w = state.lambda2w.expect_diagonal()?.clone();
        let k = p.k();
        let mut eta_hat = Array1::zeros(k);
        let mut chi_hat = Array1::zeros(k);
        for i in 0..k {
            let cavity = CavityGaussian::from_natural(state.gamma2w[i], lam2w[i])?;
            let t = tilted_w(p, cavity)?;
            eta_hat[i] = t.mean;
            chi_hat[i] = t.var.max(cfg.min_variance);
        }
        let lam1w = match &mut state.lambda1w {
            crate::model::DiagOrScalar::Diagonal(d) => d,
            _ => unreachable!(),
        };
        stats.negative_variance_w += match_site_block(
            lam1w,
            &mut state.gamma1w,
            &lam2w,
            &state.gamma2w,
            &eta_hat,
            &chi_hat,
            cfg.damping,
            cfg.min_variance,
        );
        state.eta_w = eta_hat;
        state.chi_w = chi_hat;

        let lam2z = state.lambda2z.expect_diagonal()?.clone();
        let n = p.n();
        let mut eta_hat = Array1::zeros(n);
        let mut chi_hat = Array1::zeros(n);
        for i in 0..n {
            let cavity = CavityGaussian::from_natural(state.gamma2z[i], lam2z[i])?;
            let t = tilted_z(p, cavity, p.y[i])?;
            eta_hat[i] = t.mean;
            chi_hat[i] = t.var.max(cfg.min_variance);
        }
        let lam1z = match &mut state.lambda1z {
            crate::model::DiagOrScalar::Diagonal(d) => d,
            _ => unreachable!(),
        };
        stats.negative_variance_z += match_site_block(
            lam1z,
            &mut state.gamma1z,
            &lam2z,
            &state.gamma2z,
            &eta_hat,
            &chi_hat,
            cfg.damping,
            cfg.min_variance,
        );
        state.eta_z = eta_hat;
        state.chi_z = chi_hat;
    }

    stats.max_moment_change = linalg::max_abs_diff(&state.eta_w, &prev_eta_w)
        .max(linalg::max_abs_diff(&state.chi_w, &prev_chi_w))
        .max(linalg::max_abs_diff(&state.eta_z, &prev_eta_z))
        .max(linalg::max_abs_diff(&state.chi_z, &prev_chi_z));
    Ok(stats)
}

/// Iterate diagonal sweeps until the moment caches move by less than
/// `cfg.tol` in max norm, or `max_iter` sweeps have run.
pub fn solve_diagonal(p: &GlmProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    validate_problem(p)?;
    let state = init_state(p, SolverFlavor::Diagonal, InitConfig::default())?;
    solve_from(p, state, cfg, &mut |p, s, c| ep_sweep_diagonal(p, s, c))
}

pub(crate) fn solve_from(
    p: &GlmProblem,
    mut state: EpState,
    cfg: &SolverConfig,
    sweep: &mut dyn FnMut(&GlmProblem, &mut EpState, &SolverConfig) -> Result<SweepStats>,
) -> Result<SolveResult> {
    let mut trace = Vec::new();
    let mut converged = false;
    let mut residual = f64::MAX;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        let stats = sweep(p, &mut state, cfg)?;
        iterations += 1;
        residual = stats.max_moment_change;
        trace.push(residual);
        if residual < cfg.tol {
            converged = true;
            break;
        }
    }
    let summary = PosteriorSummary {
        mean_w: state.eta_w.to_vec(),
        var_w: state.chi_w.to_vec(),
        mean_z: state.eta_z.to_vec(),
        var_z: state.chi_z.to_vec(),
        iterations,
        converged,
        residual,
    };
    Ok(SolveResult {
        summary,
        state,
        trace,
    })
}

/// Residuals of the matrix-inversion-free restatement of the mean fixed
/// point, used as convergence diagnostics:
/// `|g2w - [(L2w + X^T L2z X) eta_w - X^T g2z]|_inf` and
/// `|eta_z - X eta_w|_inf`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TapResiduals {
    pub gamma2w_residual: f64,
    pub eta_consistency_residual: f64,
}

pub fn tap_residuals(p: &GlmProblem, s: &EpState) -> TapResiduals {
    let (n, k) = (p.n(), p.k());
    let lam2w = s.lambda2w.as_diagonal(k);
    let lam2z = s.lambda2z.as_diagonal(n);
    let x_eta = p.x.dot(&s.eta_w);
    let rhs = &lam2w * &s.eta_w + p.x.t().dot(&(&lam2z * &x_eta)) - p.x.t().dot(&s.gamma2z);
    let gamma2w_residual = linalg::max_abs_diff(&s.gamma2w, &rhs);
    let eta_consistency_residual = linalg::max_abs_diff(&s.eta_z, &x_eta);
    TapResiduals {
        gamma2w_residual,
        eta_consistency_residual,
    }
}
