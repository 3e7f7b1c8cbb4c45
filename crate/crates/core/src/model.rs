//! Domain types shared by the solvers: problem definition, EP site
//! parameters and posterior summaries.

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::solver_diag;

/// Prior on the latent weight vector, applied coordinatewise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSpec {
    Gaussian { mean: f64, var: f64 },
    SpikeSlab { rho: f64, slab_var: f64 },
}

impl PriorSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            PriorSpec::Gaussian { mean, var } => {
                if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
                    return Err(CoreError::InvalidParameter(format!(
                        "gaussian prior needs finite mean and var > 0, got ({mean}, {var})"
                    )));
                }
            }
            PriorSpec::SpikeSlab { rho, slab_var } => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(CoreError::InvalidParameter(format!(
                        "rho must lie in (0, 1], got {rho}"
                    )));
                }
                if !(slab_var > 0.0 && slab_var.is_finite()) {
                    return Err(CoreError::InvalidParameter(format!(
                        "slab_var must be finite and > 0, got {slab_var}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Observation model for `y` given the linear predictor `z = X w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodSpec {
    Gaussian { noise_var: f64 },
    Probit { noise_var: f64 },
}

impl LikelihoodSpec {
    pub fn noise_var(&self) -> f64 {
        match *self {
            LikelihoodSpec::Gaussian { noise_var } | LikelihoodSpec::Probit { noise_var } => {
                noise_var
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let nv = self.noise_var();
        if !(nv > 0.0 && nv.is_finite()) {
            return Err(CoreError::InvalidParameter(format!(
                "noise_var must be finite and > 0, got {nv}"
            )));
        }
        Ok(())
    }
}

/// A generalized linear model instance: design matrix, observations, prior
/// and likelihood, plus the aspect ratio `alpha = N / K`.
#[derive(Debug, Clone)]
pub struct GlmProblem {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub prior: PriorSpec,
    pub likelihood: LikelihoodSpec,
    pub alpha: f64,
}

impl GlmProblem {
    pub fn new(
        x: Array2<f64>,
        y: Array1<f64>,
        prior: PriorSpec,
        likelihood: LikelihoodSpec,
    ) -> Result<Self> {
        let alpha = x.nrows() as f64 / x.ncols() as f64;
        let p = Self {
            x,
            y,
            prior,
            likelihood,
            alpha,
        };
        validate_problem(&p)?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }
}

/// Check all structural invariants of a problem and pass it through.
pub fn validate_problem(p: &GlmProblem) -> Result<&GlmProblem> {
    let (n, k) = (p.x.nrows(), p.x.ncols());
    if n == 0 || k == 0 {
        return Err(CoreError::InvalidParameter(format!(
            "design matrix must be at least 1x1, got {n}x{k}"
        )));
    }
    if p.y.len() != n {
        return Err(CoreError::DimensionMismatch {
            what: "observation vector",
            expected: n,
            got: p.y.len(),
        });
    }
    if p.x.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("design matrix"));
    }
    if p.y.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("observations"));
    }
    if (p.alpha - n as f64 / k as f64).abs() > 1e-12 {
        return Err(CoreError::InvalidParameter(format!(
            "alpha {} does not match N/K = {}",
            p.alpha,
            n as f64 / k as f64
        )));
    }
    p.prior.validate()?;
    p.likelihood.validate()?;
    if matches!(p.likelihood, LikelihoodSpec::Probit { .. })
        && p.y.iter().any(|&v| v != 1.0 && v != -1.0)
    {
        return Err(CoreError::InvalidParameter(
            "probit observations must be +1 or -1".into(),
        ));
    }
    Ok(p)
}

/// Site precision block: one value per coordinate (diagonal solver) or a
/// single scalar for the whole block (scalar solver).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagOrScalar {
    Diagonal(#[serde(with = "serde_array1")] Array1<f64>),
    Scalar(f64),
}

impl DiagOrScalar {
    pub fn entry(&self, i: usize) -> f64 {
        match self {
            DiagOrScalar::Diagonal(d) => d[i],
            DiagOrScalar::Scalar(s) => *s,
        }
    }

    pub fn as_diagonal(&self, len: usize) -> Array1<f64> {
        match self {
            DiagOrScalar::Diagonal(d) => d.clone(),
            DiagOrScalar::Scalar(s) => Array1::from_elem(len, *s),
        }
    }

    pub fn expect_diagonal(&self) -> Result<&Array1<f64>> {
        match self {
            DiagOrScalar::Diagonal(d) => Ok(d),
            DiagOrScalar::Scalar(_) => Err(CoreError::InvalidParameter(
                "expected a diagonal site block, found scalar".into(),
            )),
        }
    }

    pub fn expect_scalar(&self) -> Result<f64> {
        match self {
            DiagOrScalar::Scalar(s) => Ok(*s),
            DiagOrScalar::Diagonal(_) => Err(CoreError::InvalidParameter(
                "expected a scalar site block, found diagonal".into(),
            )),
        }
    }
}

/// Which restriction the site precisions obey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverFlavor {
    Diagonal,
    Scalar,
}

/// Full EP state: natural site parameters for both factor groups on the
/// w- and z-blocks, plus the cached moments of the latest update stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpState {
    #[serde(with = "serde_array1")]
    pub gamma1w: Array1<f64>,
    #[serde(with = "serde_array1")]
    pub gamma1z: Array1<f64>,
    #[serde(with = "serde_array1")]
    pub gamma2w: Array1<f64>,
    #[serde(with = "serde_array1")]
    pub gamma2z: Array1<f64>,
    pub lambda1w: DiagOrScalar,
    pub lambda1z: DiagOrScalar,
    pub lambda2w: DiagOrScalar,
    pub lambda2z: DiagOrScalar,
    #[serde(with = "serde_array1")]
    pub eta_w: Array1<f64>,
    #[serde(with = "serde_array1")]
    pub chi_w: Array1<f64>,
    #[serde(with = "serde_array1")]
    pub eta_z: Array1<f64>,
    #[serde(with = "serde_array1")]
    pub chi_z: Array1<f64>,
    #[serde(with = "serde_array1")]
    pub mu: Array1<f64>,
    #[serde(with = "serde_array1")]
    pub sigma_diag: Array1<f64>,
}

impl EpState {
    pub fn flavor(&self) -> SolverFlavor {
        match self.lambda1w {
            DiagOrScalar::Diagonal(_) => SolverFlavor::Diagonal,
            DiagOrScalar::Scalar(_) => SolverFlavor::Scalar,
        }
    }

    pub fn k(&self) -> usize {
        self.gamma1w.len()
    }

    pub fn n(&self) -> usize {
        self.gamma1z.len()
    }
}

/// Initial site parameters; both gammas start at zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InitConfig {
    pub lambda1_init: f64,
    pub lambda2_init: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            lambda1_init: 1.0,
            lambda2_init: 1.0,
        }
    }
}

/// Neutral starting state: `gamma = 0`, unit (configurable) site
/// precisions, and moment caches filled by one Gaussian projection.
pub fn init_state(p: &GlmProblem, flavor: SolverFlavor, init: InitConfig) -> Result<EpState> {
    validate_problem(p)?;
    let (n, k) = (p.n(), p.k());
    let block = |v: f64, len: usize| match flavor {
        SolverFlavor::Diagonal => DiagOrScalar::Diagonal(Array1::from_elem(len, v)),
        SolverFlavor::Scalar => DiagOrScalar::Scalar(v),
    };
    let mut state = EpState {
        gamma1w: Array1::zeros(k),
        gamma1z: Array1::zeros(n),
        gamma2w: Array1::zeros(k),
        gamma2z: Array1::zeros(n),
        lambda1w: block(init.lambda1_init, k),
        lambda1z: block(init.lambda1_init, n),
        lambda2w: block(init.lambda2_init, k),
        lambda2z: block(init.lambda2_init, n),
        eta_w: Array1::zeros(k),
        chi_w: Array1::zeros(k),
        eta_z: Array1::zeros(n),
        chi_z: Array1::zeros(n),
        mu: Array1::zeros(k),
        sigma_diag: Array1::zeros(k),
    };
    let proj = solver_diag::gaussian_projection(p, &state)?;
    state.mu = proj.mu.clone();
    state.sigma_diag = proj.sigma_diag.clone();
    state.eta_w = proj.mu;
    state.chi_w = proj.sigma_diag;
    state.eta_z = proj.z_mean;
    state.chi_z = proj.z_var_diag;
    Ok(state)
}

/// Converged (or best-effort) marginal summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean_w: Vec<f64>,
    pub var_w: Vec<f64>,
    pub mean_z: Vec<f64>,
    pub var_z: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

/// Serialize `Array1<f64>` as a plain JSON array so the wire format stays
/// independent of the in-memory container.
pub(crate) mod serde_array1 {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().expect("contiguous").serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        Ok(Array1::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_problem() -> GlmProblem {
        GlmProblem::new(
            Array2::zeros((2, 3)),
            Array1::zeros(2),
            PriorSpec::Gaussian {
                mean: 0.0,
                var: 1.0,
            },
            LikelihoodSpec::Gaussian { noise_var: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn degenerate_but_valid_problem() {
        let p = toy_problem();
        assert!(validate_problem(&p).is_ok());
        assert_eq!(p.alpha, 2.0 / 3.0);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let r = GlmProblem::new(
            Array2::zeros((2, 3)),
            Array1::zeros(3),
            PriorSpec::Gaussian {
                mean: 0.0,
                var: 1.0,
            },
            LikelihoodSpec::Gaussian { noise_var: 1.0 },
        );
        assert!(matches!(r, Err(CoreError::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_rho_rejected() {
        let r = GlmProblem::new(
            Array2::zeros((2, 3)),
            Array1::zeros(2),
            PriorSpec::SpikeSlab {
                rho: 0.0,
                slab_var: 1.0,
            },
            LikelihoodSpec::Gaussian { noise_var: 1.0 },
        );
        assert!(matches!(r, Err(CoreError::InvalidParameter(_))));
    }

    #[test]
    fn nan_design_rejected() {
        let mut x = Array2::zeros((2, 2));
        x[[0, 0]] = f64::NAN;
        let r = GlmProblem::new(
            x,
            Array1::zeros(2),
            PriorSpec::Gaussian {
                mean: 0.0,
                var: 1.0,
            },
            LikelihoodSpec::Gaussian { noise_var: 1.0 },
        );
        assert!(matches!(r, Err(CoreError::NonFinite(_))));
    }

    #[test]
    fn init_defaults() {
        let p = toy_problem();
        let s = init_state(&p, SolverFlavor::Scalar, InitConfig::default()).unwrap();
        assert_eq!(s.lambda1w.expect_scalar().unwrap(), 1.0);
        assert_eq!(s.lambda2w.expect_scalar().unwrap(), 1.0);
        assert_eq!(s.lambda2z.expect_scalar().unwrap(), 1.0);
        assert_eq!(s.flavor(), SolverFlavor::Scalar);

        let p4 = GlmProblem::new(
            Array2::zeros((2, 4)),
            Array1::zeros(2),
            PriorSpec::Gaussian {
                mean: 0.0,
                var: 1.0,
            },
            LikelihoodSpec::Gaussian { noise_var: 1.0 },
        )
        .unwrap();
        let s = init_state(&p4, SolverFlavor::Diagonal, InitConfig::default()).unwrap();
        let d = s.lambda2w.expect_diagonal().unwrap();
        assert_eq!(d, &Array1::from_elem(4, 1.0));
        // X = 0: sigma = lambda1w^{-1} = 1, z variance 0
        assert_eq!(s.sigma_diag, Array1::from_elem(4, 1.0));
        assert_eq!(s.chi_z, Array1::zeros(2));
    }

    #[test]
    fn init_with_zero_precision_fails() {
        let p = toy_problem();
        let r = init_state(
            &p,
            SolverFlavor::Diagonal,
            InitConfig {
                lambda1_init: 0.0,
                lambda2_init: 1.0,
            },
        );
        assert!(matches!(r, Err(CoreError::SingularMatrix(_))));
    }
}
