//! Flat key-value configuration documents, one struct per subcommand.
//! Unknown keys are rejected with an error naming the key.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

use epfree_core::{GlmProblem, LikelihoodSpec, PriorSpec, SolverConfig};

use crate::error::{CliError, Result};
use crate::ingest::{self, Dataset, IngestOptions, SyntheticSpec};

/// Load a config of type `T` from a JSON file, or take defaults when no
/// path is given. A `--seed` passed on the command line overrides the
/// config's seed via the `Seeded` hook.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

pub trait Seeded {
    fn set_seed(&mut self, seed: u64);
    fn seed(&self) -> u64;
}

macro_rules! impl_seeded {
    ($t:ty) => {
        impl Seeded for $t {
            fn set_seed(&mut self, seed: u64) {
                self.seed = seed;
            }
            fn seed(&self) -> u64 {
                self.seed
            }
        }
    };
}

fn default_k() -> usize {
    512
}

fn default_n() -> usize {
    256
}

fn default_rho() -> f64 {
    0.1
}

fn default_one() -> f64 {
    1.0
}

fn default_max_iter() -> usize {
    200
}

fn default_tol() -> f64 {
    1e-8
}

fn default_damping() -> f64 {
    0.5
}

fn default_min_variance() -> f64 {
    1e-12
}

fn default_prior() -> String {
    "spike_slab".into()
}

fn default_likelihood() -> String {
    "probit".into()
}

fn default_flavor() -> String {
    "both".into()
}

/// Shared model/solver block reused by the fitting-style commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpFitConfig {
    #[serde(default)]
    pub seed: u64,
    /// CSV input; when absent a synthetic instance is drawn.
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default = "crate::config::default_true")]
    pub has_header: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_one")]
    pub slab_var: f64,
    #[serde(default = "default_one")]
    pub noise_var: f64,
    #[serde(default)]
    pub x_scale: Option<f64>,
    #[serde(default = "default_prior")]
    pub prior: String,
    #[serde(default)]
    pub prior_mean: f64,
    #[serde(default = "default_one")]
    pub prior_var: f64,
    #[serde(default = "default_likelihood")]
    pub likelihood: String,
    #[serde(default = "default_flavor")]
    pub flavor: String,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_min_variance")]
    pub min_variance: f64,
}

pub(crate) fn default_true() -> bool {
    true
}

impl Default for EpFitConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl_seeded!(EpFitConfig);

impl EpFitConfig {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            damping: self.damping,
            min_variance: self.min_variance,
        }
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        match self.prior.as_str() {
            "gaussian" => Ok(PriorSpec::Gaussian {
                mean: self.prior_mean,
                var: self.prior_var,
            }),
            "spike_slab" => Ok(PriorSpec::SpikeSlab {
                rho: self.rho,
                slab_var: self.slab_var,
            }),
            other => Err(CliError::Config(format!(
                "unknown prior {other:?} (expected gaussian or spike_slab)"
            ))),
        }
    }

    pub fn likelihood_spec(&self) -> Result<LikelihoodSpec> {
        match self.likelihood.as_str() {
            "gaussian" => Ok(LikelihoodSpec::Gaussian {
                noise_var: self.noise_var,
            }),
            "probit" => Ok(LikelihoodSpec::Probit {
                noise_var: self.noise_var,
            }),
            other => Err(CliError::Config(format!(
                "unknown likelihood {other:?} (expected gaussian or probit)"
            ))),
        }
    }

    pub fn run_diagonal(&self) -> bool {
        self.flavor == "both" || self.flavor == "diagonal"
    }

    pub fn run_scalar(&self) -> bool {
        self.flavor == "both" || self.flavor == "scalar"
    }

    pub fn validate_flavor(&self) -> Result<()> {
        match self.flavor.as_str() {
            "both" | "diagonal" | "scalar" => Ok(()),
            other => Err(CliError::Config(format!(
                "unknown flavor {other:?} (expected diagonal, scalar or both)"
            ))),
        }
    }

    /// Materialize the dataset (CSV or synthetic) and the problem.
    pub fn build_problem(&self) -> Result<(Dataset, GlmProblem)> {
        self.validate_flavor()?;
        let dataset = match &self.csv {
            Some(path) => {
                let opts = IngestOptions {
                    delimiter: ',',
                    has_header: self.has_header,
                    label_column: self.label_column.clone(),
                    standardize: self.standardize,
                };
                ingest::ingest_csv(Path::new(path), &opts)?
            }
            None => {
                let spec = SyntheticSpec {
                    n: self.n,
                    k: self.k,
                    rho: self.rho,
                    slab_var: self.slab_var,
                    noise_var: self.noise_var,
                    x_scale: self.x_scale,
                    seed: self.seed,
                };
                ingest::synthesize(&spec)?.0
            }
        };
        // a Gaussian likelihood treats the +-1 labels as real observations
        let problem = GlmProblem::new(
            dataset.x.clone(),
            dataset.y.clone(),
            self.prior_spec()?,
            self.likelihood_spec()?,
        )?;
        Ok((dataset, problem))
    }
}

fn default_sizes() -> Vec<usize> {
    vec![256, 512, 1024, 2048]
}

fn default_alpha() -> f64 {
    0.5
}

fn default_repeats() -> usize {
    3
}

fn default_bench_likelihood() -> String {
    "gaussian".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_flavor")]
    pub flavor: String,
    #[serde(default = "default_bench_likelihood")]
    pub likelihood: String,
    #[serde(default = "default_one")]
    pub noise_var: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl_seeded!(BenchConfig);

fn default_ll_sizes() -> Vec<usize> {
    vec![512, 2048]
}

fn default_n_seeds() -> usize {
    20
}

fn default_lambda1_a() -> f64 {
    1.0
}

fn default_lambda1_b() -> f64 {
    2.0
}

fn default_ensemble() -> String {
    "haar".into()
}

fn default_shift() -> f64 {
    0.5
}

fn default_noise_scale() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalLawConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ll_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_lambda1_a")]
    pub lambda1_a: f64,
    #[serde(default = "default_lambda1_b")]
    pub lambda1_b: f64,
    /// "haar", "shift" or "dependent".
    #[serde(default = "default_ensemble")]
    pub ensemble: String,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default)]
    pub j_a: f64,
    #[serde(default = "default_one")]
    pub j_b: f64,
}

impl Default for LocalLawConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl_seeded!(LocalLawConfig);

fn default_family() -> String {
    "haar_pair".into()
}

fn default_freeness_n() -> usize {
    1024
}

fn default_degree() -> usize {
    3
}

fn default_length() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreenessConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_freeness_n")]
    pub n: usize,
    /// "haar_pair", "hadamard_pair" or "independent_diag".
    #[serde(default = "default_family")]
    pub family: String,
    #[serde(default = "default_degree")]
    pub degree_bound: usize,
    #[serde(default = "default_length")]
    pub length_bound: usize,
    #[serde(default)]
    pub law_a: f64,
    #[serde(default = "default_one")]
    pub law_b: f64,
}

impl Default for FreenessConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl_seeded!(FreenessConfig);

fn default_spectrum_n() -> usize {
    512
}

fn default_s_grid() -> Vec<f64> {
    vec![-2.0, -1.0, -0.5, -0.25, -0.1]
}

fn default_omega_grid() -> Vec<f64> {
    vec![-0.5, -0.3, -0.2, -0.1, -0.05]
}

fn default_spectrum() -> String {
    "uniform".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformsConfig {
    #[serde(default)]
    pub seed: u64,
    /// Explicit spectrum values; overrides the sampled law when present.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    /// "uniform", "two_point" or "point".
    #[serde(default = "default_spectrum")]
    pub law: String,
    #[serde(default = "default_spectrum_n")]
    pub n: usize,
    #[serde(default)]
    pub a: f64,
    #[serde(default = "default_one")]
    pub b: f64,
    #[serde(default)]
    pub x1: Option<f64>,
    #[serde(default)]
    pub x2: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
    #[serde(default = "default_omega_grid")]
    pub omega_grid: Vec<f64>,
}

impl Default for TransformsConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl_seeded!(TransformsConfig);

fn default_ingest_n() -> usize {
    32
}

fn default_ingest_k() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestCheckConfig {
    #[serde(default)]
    pub seed: u64,
    /// Check an existing file; when absent, a synthetic file is written
    /// into the output directory and round-tripped.
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default = "crate::config::default_true")]
    pub has_header: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_ingest_n")]
    pub n: usize,
    #[serde(default = "default_ingest_k")]
    pub k: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_one")]
    pub noise_var: f64,
}

impl Default for IngestCheckConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl_seeded!(IngestCheckConfig);
