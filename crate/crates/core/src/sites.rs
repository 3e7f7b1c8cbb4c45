//! Tilted-moment oracles: per-coordinate means and variances of densities
//! proportional to `cavity Gaussian x site factor`, for the site factors the
//! solvers support (Gaussian prior, spike-and-slab prior, probit
//! likelihood). A deterministic 1-D quadrature oracle serves as ground
//! truth in tests and must stay independent of the closed forms.
//!
//! All operations are pure and reentrant; solver sweeps may fan out
//! per-coordinate calls across threads.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Per-coordinate Gaussian cavity, in mean/variance form. A site block with
/// natural parameters `(gamma, lambda)` has `mean = gamma / lambda`,
/// `var = 1 / lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityGaussian {
    pub mean: f64,
    pub var: f64,
}

impl CavityGaussian {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !(mean.is_finite() && var.is_finite() && var > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "cavity needs finite mean and var > 0, got ({mean}, {var})"
            )));
        }
        Ok(Self { mean, var })
    }

    /// Cavity from natural parameters `(gamma, lambda)` with `lambda > 0`.
    pub fn from_natural(gamma: f64, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "cavity precision must be finite and > 0, got {lambda}"
            )));
        }
        Self::new(gamma / lambda, 1.0 / lambda)
    }
}

/// First two moments and log normalizer of a tilted density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedMoments {
    pub mean: f64,
    pub var: f64,
    pub log_partition: f64,
}

impl TiltedMoments {
    fn checked(self, what: &'static str) -> Result<Self> {
        if self.mean.is_finite() && self.var.is_finite() && self.var >= 0.0 {
            Ok(self)
        } else {
            Err(CoreError::NonFinite(what))
        }
    }
}

// ---------------------------------------------------------------------------
// Gaussian special functions
// ---------------------------------------------------------------------------

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_logpdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * LN_2PI
}

/// Inverse Mills ratio `phi(u) / Phi(u)`.
///
/// The direct ratio via `erfc` is accurate until `Phi` underflows. Below
/// `u = -6` we switch to the Laplace continued fraction for the Mills ratio,
/// which stays at machine precision arbitrarily deep in the tail where the
/// naive ratio would produce 0/0.
pub fn mills_inverse(u: f64) -> f64 {
    if u >= -6.0 {
        normal_pdf(u) / normal_cdf(u)
    } else {
        let x = -u;
        // Phi(u)/phi(u) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
        let mut t = 0.0;
        for k in (1..=40u32).rev() {
            t = f64::from(k) / (x + t);
        }
        x + t
    }
}

/// `ln Phi(u)`, tail-safe.
pub fn normal_logcdf(u: f64) -> f64 {
    if u >= -6.0 {
        normal_cdf(u).ln()
    } else {
        normal_logpdf(u) - mills_inverse(u).ln()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

// ---------------------------------------------------------------------------
// Closed-form tilted moments
// ---------------------------------------------------------------------------

/// Product of the cavity with a Gaussian prior `N(prior_mean, prior_var)`.
pub fn tilted_gaussian_prior(
    c: CavityGaussian,
    prior_mean: f64,
    prior_var: f64,
) -> Result<TiltedMoments> {
    if !(prior_var > 0.0 && prior_var.is_finite() && prior_mean.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "gaussian prior needs finite mean and var > 0, got ({prior_mean}, {prior_var})"
        )));
    }
    let var = 1.0 / (1.0 / c.var + 1.0 / prior_var);
    let mean = var * (c.mean / c.var + prior_mean / prior_var);
    let s = c.var + prior_var;
    let log_partition = -0.5 * (c.mean - prior_mean).powi(2) / s - 0.5 * (LN_2PI + s.ln());
    TiltedMoments {
        mean,
        var,
        log_partition,
    }
    .checked("tilted_gaussian_prior")
}

/// Product of the cavity with the spike-and-slab prior
/// `(1 - rho) delta(w) + rho N(w | 0, slab_var)`.
///
/// The mixture responsibilities are computed in the log domain; the returned
/// variance includes the between-component spread, so it can exceed the
/// cavity variance (the mixture is not log-concave).
pub fn tilted_spike_slab(c: CavityGaussian, rho: f64, slab_var: f64) -> Result<TiltedMoments> {
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
    // spike evidence: (1-rho) N(0 | m, v); slab evidence: rho N(0 | m, v + a)
    let log_spike = if rho == 1.0 {
        f64::NEG_INFINITY
    } else {
        (1.0 - rho).ln() + normal_logpdf(c.mean / c.var.sqrt()) - 0.5 * c.var.ln()
    };
    let sv = c.var + slab_var;
    let log_slab = rho.ln() + normal_logpdf(c.mean / sv.sqrt()) - 0.5 * sv.ln();
    let log_partition = log_sum_exp(log_spike, log_slab);
    let p_slab = (log_slab - log_partition).exp();

    // slab component moments: Gaussian product of cavity and N(0, slab_var)
    let vc = slab_var * c.var / sv;
    let mc = slab_var * c.mean / sv;

    let mean = p_slab * mc;
    let var = p_slab * vc + p_slab * (1.0 - p_slab) * mc * mc;
    TiltedMoments {
        mean,
        var,
        log_partition,
    }
    .checked("tilted_spike_slab")
}

/// Product of the cavity with the probit likelihood
/// `Phi(label * z / sqrt(noise_var))` for a binary observation
/// `label in {-1, +1}` of `sign(z + noise)`.
pub fn tilted_probit(c: CavityGaussian, label: f64, noise_var: f64) -> Result<TiltedMoments> {
    if label != 1.0 && label != -1.0 {
        return Err(CoreError::InvalidParameter(format!(
            "probit label must be +1 or -1, got {label}"
        )));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "noise_var must be finite and > 0, got {noise_var}"
        )));
    }
    let s2 = c.var + noise_var;
    let s = s2.sqrt();
    let u = label * c.mean / s;
    let r = mills_inverse(u);
    let mean = c.mean + label * c.var * r / s;
    // r * (u + r) lies in (0, 1); clamp tiny negative round-off
    let var = (c.var * (1.0 - c.var / s2 * r * (u + r))).max(0.0);
    let log_partition = normal_logcdf(u);
    TiltedMoments {
        mean,
        var,
        log_partition,
    }
    .checked("tilted_probit")
}

// ---------------------------------------------------------------------------
// Quadrature oracle
// ---------------------------------------------------------------------------

/// Ground-truth moments of `cavity x site` by trapezoid quadrature on
/// `c.mean +- 12 sqrt(c.var)` with point doubling until the moments move by
/// less than 1e-10 in relative terms. Accuracy target for smooth sites is
/// 1e-8. Independent of every closed form above by construction.
pub fn quadrature_oracle<F>(c: CavityGaussian, site_density: F, n_points: usize) -> Result<TiltedMoments>
where
    F: Fn(f64) -> f64,
{
    if n_points < 64 {
        return Err(CoreError::InvalidParameter(format!(
            "quadrature needs at least 64 points, got {n_points}"
        )));
    }
    let sigma = c.var.sqrt();
    let half_width = 12.0 * sigma;

    let eval = |n: usize| -> (f64, f64, f64) {
        let h = 2.0 * half_width / n as f64;
        let mut z = KahanSum::default();
        let mut m1 = KahanSum::default();
        let mut m2 = KahanSum::default();
        for i in 0..=n {
            // offsets from the cavity mean keep the moment sums well scaled
            let t = -half_width + i as f64 * h;
            let x = c.mean + t;
            let g = (-0.5 * t * t / c.var).exp();
            let mut f = g * site_density(x);
            if i == 0 || i == n {
                f *= 0.5;
            }
            z.add(f);
            m1.add(f * t);
            m2.add(f * t * t);
        }
        (z.sum() * h, m1.sum() * h, m2.sum() * h)
    };

    let norm = 1.0 / ((2.0 * std::f64::consts::PI * c.var).sqrt());
    let mut n = n_points;
    let (mut z, mut m1, mut m2) = eval(n);
    loop {
        let n_next = n * 2;
        let (z2, m12, m22) = eval(n_next);
        let mean_prev = m1 / z;
        let var_prev = m2 / z - mean_prev * mean_prev;
        let mean_next = m12 / z2;
        let var_next = m22 / z2 - mean_next * mean_next;
        let dm = (mean_next - mean_prev).abs() / mean_next.abs().max(1.0);
        let dv = (var_next - var_prev).abs() / var_next.abs().max(1.0);
        z = z2;
        m1 = m12;
        m2 = m22;
        n = n_next;
        if (dm < 1e-10 && dv < 1e-10) || n >= (1 << 21) {
            break;
        }
    }

    if z * norm < 1e-300 || z <= 0.0 {
        return Err(CoreError::ZeroMass);
    }
    let mean_off = m1 / z;
    let var = (m2 / z - mean_off * mean_off).max(0.0);
    TiltedMoments {
        mean: c.mean + mean_off,
        var,
        log_partition: (z * norm).ln(),
    }
    .checked("quadrature_oracle")
}

#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn add(&mut self, value: f64) {
        let y = value - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    fn sum(self) -> f64 {
        self.sum
    }
}

// ---------------------------------------------------------------------------
// Monotone link inversion
// ---------------------------------------------------------------------------

/// Find the z-site natural mean parameter `gamma` whose probit tilted mean
/// equals `target_eta`, given the site precision `c_lambda`. The tilted mean
/// is strictly increasing in `gamma`, so a safeguarded Newton iteration with
/// a bisection fallback inside `[-1e6, 1e6]` converges to |mean - target| <=
/// 1e-10.
pub fn monotone_link_inverse(
    target_eta: f64,
    c_lambda: f64,
    label: f64,
    noise_var: f64,
) -> Result<f64> {
    if !(c_lambda > 0.0 && c_lambda.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "c_lambda must be finite and > 0, got {c_lambda}"
        )));
    }
    if !target_eta.is_finite() {
        return Err(CoreError::NonFinite("monotone_link_inverse target"));
    }
    let var = 1.0 / c_lambda;
    let s2 = var + noise_var;
    let mean_at = |gamma: f64| -> Result<f64> {
        let c = CavityGaussian::new(gamma * var, var)?;
        Ok(tilted_probit(c, label, noise_var)?.mean)
    };
    // d mean / d gamma, from the analytic derivative of the tilted mean with
    // respect to the cavity mean
    let slope_at = |gamma: f64| -> f64 {
        let m = gamma * var;
        let u = label * m / s2.sqrt();
        let r = mills_inverse(u);
        let dmean_dm = 1.0 - var / s2 * r * (u + r);
        dmean_dm * var
    };

    let (mut lo, mut hi) = (-1e6, 1e6);
    let tol = 1e-10 * target_eta.abs().max(1.0);
    let f_lo = mean_at(lo)? - target_eta;
    let f_hi = mean_at(hi)? - target_eta;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(CoreError::NoBracket(format!(
            "target mean {target_eta} not attained for gamma in [-1e6, 1e6]"
        )));
    }

    let mut gamma = 0.0_f64.clamp(lo, hi);
    for _ in 0..200 {
        let f = mean_at(gamma)? - target_eta;
        if f.abs() <= tol {
            return Ok(gamma);
        }
        if f > 0.0 {
            hi = gamma;
        } else {
            lo = gamma;
        }
        let slope = slope_at(gamma);
        let newton = gamma - f / slope;
        gamma = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mills_inverse_matches_references() {
        // high-precision references
        let cases = [
            (0.0, 0.797884560802865356),
            (3.0, 0.00443783904212566379),
            (-5.5, 5.67141031389730562),
            (-6.0, 6.15848260454459892),
            (-6.5, 6.64730136119049069),
            (-7.0, 7.13754561322650328),
            (-20.0, 20.0497530685278505),
            (-50.0, 50.0199840319056398),
        ];
        for (u, want) in cases {
            let got = mills_inverse(u);
            assert!(
                (got - want).abs() <= 1e-13 * want.abs(),
                "u={u}: got {got}, want {want}"
            );
        }
        // continuity at the branch switch (true derivative there is ~0.97)
        let a = mills_inverse(-6.0 - 1e-12);
        let b = mills_inverse(-6.0 + 1e-12);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn logcdf_matches_references() {
        let cases = [
            (0.0, -0.693147180559945309),
            (-6.0, -20.7367689499747057),
            (-12.0, -75.4106730015687959),
            (-37.0, -689.030585576890594),
        ];
        for (u, want) in cases {
            let got = normal_logcdf(u);
            assert!(
                (got - want).abs() <= 1e-12 * want.abs(),
                "u={u}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn gaussian_prior_symmetric_product() {
        let c = CavityGaussian::new(0.0, 1.0).unwrap();
        let t = tilted_gaussian_prior(c, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(t.mean, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.var, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_prior_flat_limit() {
        let c = CavityGaussian::new(1.7, 0.3).unwrap();
        let t = tilted_gaussian_prior(c, 0.0, 1e12).unwrap();
        assert_abs_diff_eq!(t.mean, 1.7, epsilon = 1e-9);
        assert_abs_diff_eq!(t.var, 0.3, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_prior_closed_form_case() {
        // cavity (1, 2) with prior (0, 1): var = 2/3, mean = 1/3
        let c = CavityGaussian::new(1.0, 2.0).unwrap();
        let t = tilted_gaussian_prior(c, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(t.mean, 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t.var, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn spike_slab_pure_slab_equals_gaussian_product() {
        let c = CavityGaussian::new(0.8, 1.3).unwrap();
        let a = tilted_spike_slab(c, 1.0, 1.0).unwrap();
        let b = tilted_gaussian_prior(c, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(a.mean, b.mean, epsilon = 1e-14);
        assert_abs_diff_eq!(a.var, b.var, epsilon = 1e-14);
        assert_abs_diff_eq!(a.log_partition, b.log_partition + 0.0, epsilon = 1e-12);
    }

    #[test]
    fn spike_slab_pure_spike_limit() {
        let c = CavityGaussian::new(2.0, 1.0).unwrap();
        let t = tilted_spike_slab(c, 1e-12, 1.0).unwrap();
        assert!(t.mean.abs() < 1e-10);
        assert!(t.var < 1e-10);
    }

    #[test]
    fn spike_slab_frozen_reference() {
        // rho = 0.1, slab_var = 1, cavity (2, 1); values from a
        // high-precision mixture computation
        let c = CavityGaussian::new(2.0, 1.0).unwrap();
        let t = tilted_spike_slab(c, 0.1, 1.0).unwrap();
        assert_abs_diff_eq!(t.mean, 0.17598381115835884, epsilon = 1e-14);
        assert_abs_diff_eq!(t.var, 0.23300541494771736, epsilon = 1e-14);
    }

    #[test]
    fn spike_slab_rejects_bad_rho() {
        let c = CavityGaussian::new(0.0, 1.0).unwrap();
        assert!(tilted_spike_slab(c, 0.0, 1.0).is_err());
        assert!(tilted_spike_slab(c, 1.1, 1.0).is_err());
        assert!(tilted_spike_slab(c, 0.5, 0.0).is_err());
    }

    #[test]
    fn probit_standard_case() {
        let c = CavityGaussian::new(0.0, 1.0).unwrap();
        let t = tilted_probit(c, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(t.mean, 0.56418958354775629, epsilon = 1e-14);
        assert_abs_diff_eq!(t.var, 0.68169011381620933, epsilon = 1e-14);
        assert!(t.var < 1.0);
    }

    #[test]
    fn probit_label_flip_symmetry() {
        let c = CavityGaussian::new(0.0, 1.0).unwrap();
        let plus = tilted_probit(c, 1.0, 1.0).unwrap();
        let minus = tilted_probit(c, -1.0, 1.0).unwrap();
        assert_abs_diff_eq!(plus.mean, -minus.mean, epsilon = 1e-14);
        assert_abs_diff_eq!(plus.var, minus.var, epsilon = 1e-14);
    }

    #[test]
    fn probit_saturated_likelihood() {
        let c = CavityGaussian::new(10.0, 0.01).unwrap();
        let t = tilted_probit(c, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(t.mean, 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(t.var, 0.01, epsilon = 1e-6);
    }

    #[test]
    fn probit_deep_tail_is_finite_and_monotone() {
        let c = CavityGaussian::new(-80.0, 4.0).unwrap();
        let t = tilted_probit(c, 1.0, 1.0).unwrap();
        assert!(t.mean.is_finite() && t.var > 0.0);
        // mean monotone in cavity mean across the tail
        let mut prev = f64::NEG_INFINITY;
        for m in [-120.0, -60.0, -20.0, -5.0, 0.0, 5.0, 60.0] {
            let c = CavityGaussian::new(m, 2.0).unwrap();
            let t = tilted_probit(c, 1.0, 1.0).unwrap();
            assert!(t.mean > prev, "mean not increasing at m={m}");
            prev = t.mean;
        }
    }

    #[test]
    fn quadrature_identity_site() {
        let c = CavityGaussian::new(1.4, 2.3).unwrap();
        let t = quadrature_oracle(c, |_| 1.0, 64).unwrap();
        assert_abs_diff_eq!(t.mean, 1.4, epsilon = 1e-10);
        assert_abs_diff_eq!(t.var, 2.3, epsilon = 1e-9);
        assert_abs_diff_eq!(t.log_partition, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn quadrature_matches_gaussian_closed_form() {
        let c = CavityGaussian::new(0.7, 1.9).unwrap();
        let (pm, pv) = (-0.4, 0.8);
        let t = quadrature_oracle(
            c,
            |x| (-0.5 * (x - pm) * (x - pm) / pv).exp() / (2.0 * std::f64::consts::PI * pv).sqrt(),
            64,
        )
        .unwrap();
        let closed = tilted_gaussian_prior(c, pm, pv).unwrap();
        assert_abs_diff_eq!(t.mean, closed.mean, epsilon = 1e-8);
        assert_abs_diff_eq!(t.var, closed.var, epsilon = 1e-8);
        assert_abs_diff_eq!(t.log_partition, closed.log_partition, epsilon = 1e-8);
    }

    #[test]
    fn quadrature_probit_site() {
        let c = CavityGaussian::new(0.0, 1.0).unwrap();
        let t = quadrature_oracle(c, normal_cdf, 64).unwrap();
        assert_abs_diff_eq!(t.mean, 0.56418958354775629, epsilon = 1e-9);
    }

    #[test]
    fn quadrature_zero_mass() {
        let c = CavityGaussian::new(0.0, 1.0).unwrap();
        assert!(matches!(
            quadrature_oracle(c, |_| 0.0, 64),
            Err(CoreError::ZeroMass)
        ));
    }

    #[test]
    fn link_inverse_roundtrip_at_origin() {
        let c = CavityGaussian::new(0.0, 1.0).unwrap();
        let eta0 = tilted_probit(c, 1.0, 1.0).unwrap().mean;
        let gamma = monotone_link_inverse(eta0, 1.0, 1.0, 1.0).unwrap();
        assert!(gamma.abs() < 1e-9, "gamma={gamma}");
    }

    #[test]
    fn link_inverse_monotone() {
        let g1 = monotone_link_inverse(0.2, 2.0, 1.0, 1.0).unwrap();
        let g2 = monotone_link_inverse(0.9, 2.0, 1.0, 1.0).unwrap();
        assert!(g1 < g2);
        let eta = tilted_probit(
            CavityGaussian::from_natural(g2, 2.0).unwrap(),
            1.0,
            1.0,
        )
        .unwrap()
        .mean;
        assert_abs_diff_eq!(eta, 0.9, epsilon = 1e-10);
    }
}
