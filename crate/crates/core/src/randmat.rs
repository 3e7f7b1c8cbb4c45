//! Seeded generators for the random-matrix ensembles used by the
//! verification experiments: Haar orthogonal matrices, randomly permuted
//! Hadamard matrices, iid Gaussian matrices, Rademacher diagonals and
//! diagonal samples from simple parametric laws.
//!
//! Reproducibility contract: every generator is a pure function of
//! `(parameters, seed)`. The PRNG is ChaCha8 (a counter-based stream
//! cipher), keyed from the 64-bit seed via `seed_from_u64` and given a
//! fixed stream id per generator role, so different operations called with
//! the same seed draw from independent streams. Outputs are bit-identical
//! across runs and platforms.

use ndarray::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg;

/// Stream ids keep draws from different generator roles independent even
/// when they share a seed.
mod stream {
    pub const HAAR: u64 = 0x01;
    pub const HADAMARD: u64 = 0x02;
    pub const GAUSSIAN: u64 = 0x03;
    pub const RADEMACHER: u64 = 0x04;
    pub const DIAG_LAW: u64 = 0x05;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 step; used to derive independent child seeds for experiments
/// that need several draws of the same kind from one master seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Diagonal sampling laws for `diag_from_law`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum DiagLaw {
    Uniform { a: f64, b: f64 },
    TwoPoint { x1: f64, x2: f64, p: f64 },
}

impl DiagLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            DiagLaw::Uniform { a, b } => {
                if !(a < b) {
                    return Err(CoreError::InvalidParameter(format!(
                        "uniform law needs a < b, got a={a}, b={b}"
                    )));
                }
            }
            DiagLaw::TwoPoint { p, .. } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(CoreError::InvalidParameter(format!(
                        "two-point law needs p in (0,1), got {p}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Haar-distributed orthogonal matrix: QR of an iid standard Gaussian
/// matrix with the sign convention `R_ii > 0`.
pub fn haar_orthogonal(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_for(seed, stream::HAAR);
    let g = Array2::from_shape_simple_fn((n, n), || StandardNormal.sample(&mut rng));
    use ndarray_linalg::QR;
    let (mut q, r) = g.qr().expect("QR of a Gaussian matrix");
    for j in 0..n {
        if r[[j, j]] < 0.0 {
            q.column_mut(j).mapv_inplace(|v: f64| -v);
        }
    }
    q
}

/// Randomly permuted Hadamard matrix `(1/sqrt(n)) P1 D H P2` with random
/// permutations `P1`, `P2`, a random sign diagonal `D` and the Sylvester
/// Hadamard matrix `H`. Requires `n` to be a power of two.
pub fn permuted_hadamard(n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(CoreError::NotPowerOfTwo(n));
    }
    let mut rng = rng_for(seed, stream::HADAMARD);
    let row_perm = random_permutation(n, &mut rng);
    let col_perm = random_permutation(n, &mut rng);
    let signs: Vec<f64> = (0..n)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let scale = 1.0 / (n as f64).sqrt();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let h = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            m[[row_perm[i], col_perm[j]]] = signs[i] * h * scale;
        }
    }
    Ok(m)
}

fn random_permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// `n x k` matrix with iid `N(0, scale^2)` entries.
pub fn gaussian_iid(n: usize, k: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = rng_for(seed, stream::GAUSSIAN);
    Array2::from_shape_simple_fn((n, k), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    })
}

/// Vector of iid signs, +1 or -1 with equal probability.
pub fn rademacher_diag(n: usize, seed: u64) -> Array1<f64> {
    let mut rng = rng_for(seed, stream::RADEMACHER);
    Array1::from_shape_simple_fn(n, || if rng.gen::<bool>() { 1.0 } else { -1.0 })
}

/// Diagonal sample from a parametric law.
pub fn diag_from_law(n: usize, law: DiagLaw, seed: u64) -> Result<Array1<f64>> {
    law.validate()?;
    let mut rng = rng_for(seed, stream::DIAG_LAW);
    Ok(match law {
        DiagLaw::Uniform { a, b } => {
            Array1::from_shape_simple_fn(n, || rng.gen_range(a..b))
        }
        DiagLaw::TwoPoint { x1, x2, p } => Array1::from_shape_simple_fn(n, || {
            if rng.gen::<f64>() < p {
                x1
            } else {
                x2
            }
        }),
    })
}

/// Ensemble description as parsed from CLI configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub scale: Option<f64>,
    pub seed: u64,
    #[serde(flatten, default)]
    pub law: Option<DiagLaw>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    HaarOrthogonal,
    PermutedHadamard,
    GaussianIid,
    RademacherDiag,
    DiagFromLaw,
}

/// Result of generating an [`EnsembleSpec`]: full matrix or diagonal.
#[derive(Debug, Clone)]
pub enum GeneratedEnsemble {
    Matrix(Array2<f64>),
    Diagonal(Array1<f64>),
}

impl EnsembleSpec {
    pub fn build(&self) -> Result<GeneratedEnsemble> {
        if self.n == 0 {
            return Err(CoreError::InvalidParameter("n must be >= 1".into()));
        }
        Ok(match self.kind {
            EnsembleKind::HaarOrthogonal => {
                GeneratedEnsemble::Matrix(haar_orthogonal(self.n, self.seed))
            }
            EnsembleKind::PermutedHadamard => {
                GeneratedEnsemble::Matrix(permuted_hadamard(self.n, self.seed)?)
            }
            EnsembleKind::GaussianIid => {
                let scale = self.scale.unwrap_or(1.0);
                if scale <= 0.0 {
                    return Err(CoreError::InvalidParameter(format!(
                        "gaussian scale must be > 0, got {scale}"
                    )));
                }
                let k = self.k.unwrap_or(self.n);
                GeneratedEnsemble::Matrix(gaussian_iid(self.n, k, scale, self.seed))
            }
            EnsembleKind::RademacherDiag => {
                GeneratedEnsemble::Diagonal(rademacher_diag(self.n, self.seed))
            }
            EnsembleKind::DiagFromLaw => {
                let law = self.law.ok_or_else(|| {
                    CoreError::InvalidParameter("diag_from_law requires law parameters".into())
                })?;
                GeneratedEnsemble::Diagonal(diag_from_law(self.n, law, self.seed)?)
            }
        })
    }
}

/// `max |Q^T Q - I|`, the orthogonality residual used in tests and input
/// validation of cached bases.
pub fn orthogonality_residual(q: &Array2<f64>) -> f64 {
    let n = q.ncols();
    let qtq = q.t().dot(q);
    linalg::max_abs_diff(&qtq, &Array2::eye(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_orthogonal_and_reproducible() {
        let q1 = haar_orthogonal(64, 7);
        let q2 = haar_orthogonal(64, 7);
        assert_eq!(q1, q2);
        assert!(orthogonality_residual(&q1) < 1e-12);
        let q3 = haar_orthogonal(64, 8);
        assert_ne!(q1, q3);
    }

    #[test]
    fn haar_n1_is_sign() {
        let mut plus = 0;
        for seed in 0..200 {
            let q = haar_orthogonal(1, seed);
            assert!((q[[0, 0]].abs() - 1.0).abs() < 1e-14);
            if q[[0, 0]] > 0.0 {
                plus += 1;
            }
        }
        // both signs occur over seeds
        assert!(plus > 50 && plus < 150, "plus={plus}");
    }

    #[test]
    fn hadamard_orthogonal_and_size_checked() {
        let m = permuted_hadamard(2, 3).unwrap();
        assert!(orthogonality_residual(&m) < 1e-14);
        let m = permuted_hadamard(256, 3).unwrap();
        assert!(orthogonality_residual(&m) < 1e-12);
        assert!(matches!(
            permuted_hadamard(3, 0),
            Err(CoreError::NotPowerOfTwo(3))
        ));
    }

    #[test]
    fn diag_law_bounds() {
        let d = diag_from_law(1000, DiagLaw::Uniform { a: 1.0, b: 2.0 }, 5).unwrap();
        assert!(d.iter().all(|&x| (1.0..2.0).contains(&x)));
        let t = diag_from_law(
            1000,
            DiagLaw::TwoPoint {
                x1: -1.0,
                x2: 1.0,
                p: 0.5,
            },
            5,
        )
        .unwrap();
        assert!(t.iter().all(|&x| x == -1.0 || x == 1.0));
        assert!(diag_from_law(4, DiagLaw::Uniform { a: 2.0, b: 1.0 }, 0).is_err());
    }

    #[test]
    fn rademacher_mean_clt_bound() {
        let n = 1_000_000;
        let d = rademacher_diag(n, 11);
        let mean = d.sum() / n as f64;
        // 4 sigma bound for iid signs
        assert!(mean.abs() < 4.0e-3, "mean={mean}");
    }

    #[test]
    fn gaussian_column_norms_follow_chi() {
        let n = 4096;
        let scale = 0.5;
        let x = gaussian_iid(n, 8, scale, 13);
        for col in x.columns() {
            let norm = col.dot(&col).sqrt();
            let expect = scale * (n as f64).sqrt();
            // chi_n concentrates: sd of norm ~ scale/sqrt(2)
            assert!(
                (norm - expect).abs() < 5.0 * scale,
                "norm={norm} expect={expect}"
            );
        }
    }

    #[test]
    fn streams_are_independent() {
        // same seed, different roles: draws must differ
        let g = gaussian_iid(4, 4, 1.0, 42);
        let d = diag_from_law(4, DiagLaw::Uniform { a: 0.0, b: 1.0 }, 42).unwrap();
        let r = rademacher_diag(4, 42);
        assert_ne!(g[[0, 0]], d[0]);
        assert!((r[0].abs() - 1.0).abs() < 1e-15);
        // derived seeds differ from base and from each other
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_ne!(derive_seed(42, 0), 42);
    }
}
