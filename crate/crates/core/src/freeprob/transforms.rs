//! R- and S-transform evaluation by safeguarded inversion of the Stieltjes
//! transform on its real branches.
//!
//! For an empirical spectrum, `G` is real, strictly increasing and ranges
//! over `(0, +inf)` on the branch left of the support and over
//! `(-inf, 0)` right of it. `B = G^{-1}` is found by expanding a bracket
//! and polishing with Newton steps that are clamped into the bracket, so no
//! initial guess is needed and the result carries a residual guarantee.

use serde::{Deserialize, Serialize};

use super::EmpiricalSpectrum;
use crate::error::{CoreError, Result};

/// Search parameters for the branch inversions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BracketConfig {
    /// Starting bracket width, relative to the spectrum scale.
    pub initial_width: f64,
    /// Maximum number of bracket doublings before giving up.
    pub max_doublings: u32,
    /// Residual target for `|G(x) - g|`, relative to `max(1, |g|)`.
    pub residual_tol: f64,
}

impl Default for BracketConfig {
    fn default() -> Self {
        Self {
            initial_width: 1.0,
            max_doublings: 900,
            residual_tol: 1e-13,
        }
    }
}

/// Invert the Stieltjes transform at a real target `g != 0`: returns `x`
/// off the support with `G(x) = g`.
pub(crate) fn invert_stieltjes(
    spec: &EmpiricalSpectrum,
    g: f64,
    cfg: &BracketConfig,
) -> Result<f64> {
    if g == 0.0 || !g.is_finite() {
        return Err(CoreError::OutOfDomain(format!(
            "Stieltjes inversion target must be finite and nonzero, got {g}"
        )));
    }
    let scale = spec.spread().max(spec.max().abs()).max(1.0);
    let tol = cfg.residual_tol * g.abs().max(1.0);

    // Establish a bracket [lo, hi] with G(lo) <= g <= G(hi).
    let (mut lo, mut hi);
    if g > 0.0 {
        // branch left of the support: G decreasing toward 0 as x -> -inf
        let edge = spec.min();
        let mut eps = cfg.initial_width * scale;
        let mut tries = 0;
        while spec.stieltjes_real(edge - eps) < g {
            eps *= 0.5;
            tries += 1;
            if tries > cfg.max_doublings {
                return Err(CoreError::NoBracket(format!(
                    "could not approach the lower spectrum edge for g = {g}"
                )));
            }
        }
        hi = edge - eps;
        let mut width = cfg.initial_width * scale;
        let mut tries = 0;
        while spec.stieltjes_real(edge - width) > g {
            width *= 2.0;
            tries += 1;
            if tries > cfg.max_doublings {
                return Err(CoreError::NoBracket(format!(
                    "no x below the spectrum with G(x) <= {g}"
                )));
            }
        }
        lo = edge - width;
    } else {
        // branch right of the support: G increasing toward 0 as x -> +inf
        let edge = spec.max();
        let mut eps = cfg.initial_width * scale;
        let mut tries = 0;
        while spec.stieltjes_real(edge + eps) > g {
            eps *= 0.5;
            tries += 1;
            if tries > cfg.max_doublings {
                return Err(CoreError::NoBracket(format!(
                    "could not approach the upper spectrum edge for g = {g}"
                )));
            }
        }
        lo = edge + eps;
        let mut width = cfg.initial_width * scale;
        let mut tries = 0;
        while spec.stieltjes_real(edge + width) < g {
            width *= 2.0;
            tries += 1;
            if tries > cfg.max_doublings {
                return Err(CoreError::NoBracket(format!(
                    "no x above the spectrum with G(x) >= {g}"
                )));
            }
        }
        hi = edge + width;
    }

    // Safeguarded Newton: G is strictly increasing on the branch. Stop on
    // a small residual only once the implied x-step is also small, so flat
    // regions of G still deliver full accuracy in x.
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = spec.stieltjes_real(x) - g;
        let d = spec.stieltjes_real_deriv(x);
        let step = f / d;
        if f.abs() <= tol && step.abs() <= 1e-12 * x.abs().max(1.0) {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - step;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() <= f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    let f = spec.stieltjes_real(x) - g;
    if f.abs() <= 10.0 * tol {
        Ok(x)
    } else {
        Err(CoreError::OutOfDomain(format!(
            "Stieltjes inversion stalled at residual {f:.3e} for g = {g}"
        )))
    }
}

/// R-transform `R(s) = B(-s) - 1/s` with `B = G^{-1}`, evaluated on the
/// real branch selected by the sign of `-s`.
pub fn r_transform(spec: &EmpiricalSpectrum, s: f64, cfg: &BracketConfig) -> Result<f64> {
    if s == 0.0 || !s.is_finite() {
        return Err(CoreError::OutOfDomain(format!(
            "R-transform argument must be finite and nonzero, got {s}"
        )));
    }
    let b = invert_stieltjes(spec, -s, cfg)?;
    Ok(b - 1.0 / s)
}

/// `Rtilde(s) = s R(s)` and its derivative in `s` (via the inverse-function
/// rule for `B`).
fn r_tilde(spec: &EmpiricalSpectrum, s: f64, cfg: &BracketConfig) -> Result<(f64, f64)> {
    let b = invert_stieltjes(spec, -s, cfg)?;
    let value = s * b - 1.0;
    let db = -1.0 / spec.stieltjes_real_deriv(b);
    Ok((value, b + s * db))
}

/// S-transform `S(w) = Rtilde^{-1}(w) / w`, by safeguarded root finding on
/// `Rtilde(s) = w` over the branch with `sign(s) = sign(w)`.
pub fn s_transform(spec: &EmpiricalSpectrum, omega: f64, cfg: &BracketConfig) -> Result<f64> {
    let scale = spec.max().abs().max(spec.min().abs()).max(1.0);
    if spec.mean().abs() < 1e-12 * scale {
        return Err(CoreError::ZeroMean);
    }
    if omega == 0.0 || !omega.is_finite() {
        return Err(CoreError::OutOfDomain(format!(
            "S-transform argument must be finite and nonzero, got {omega}"
        )));
    }

    let sign = omega.signum();
    // Near s = 0, Rtilde(s) ~ s * mean; expand |s| until Rtilde crosses omega.
    let mut s_inner = sign * 1e-8 / scale;
    let mut tries = 0;
    loop {
        let (v, _) = r_tilde(spec, s_inner, cfg)?;
        if v.abs() < omega.abs() {
            break;
        }
        s_inner *= 0.5;
        tries += 1;
        if tries > cfg.max_doublings {
            return Err(CoreError::OutOfDomain(format!(
                "Rtilde does not approach 0 near s = 0 for omega = {omega}"
            )));
        }
    }
    let mut s_outer = s_inner;
    let mut tries = 0;
    loop {
        let (v, _) = r_tilde(spec, s_outer, cfg)?;
        // Rtilde is monotone toward omega along the branch; crossing found
        // once |Rtilde| >= |omega|
        if v.abs() >= omega.abs() {
            break;
        }
        s_outer *= 2.0;
        tries += 1;
        if tries > cfg.max_doublings {
            return Err(CoreError::OutOfDomain(format!(
                "omega = {omega} not attained by Rtilde on the searched branch"
            )));
        }
    }

    // bracket in |s|: [s_inner, s_outer] with Rtilde(s_inner) above omega
    // (closer to 0) and Rtilde(s_outer) below (or equal)
    let (mut lo, mut hi) = if sign > 0.0 {
        (s_inner, s_outer)
    } else {
        (s_outer, s_inner)
    };
    let tol = 1e-12 * omega.abs().max(1.0);
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (v, dv) = r_tilde(spec, s, cfg)?;
        let f = v - omega;
        if f.abs() <= tol {
            return Ok(s / omega);
        }
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - f / dv;
        s = if newton.is_finite() && newton > lo.min(hi) && newton < lo.max(hi) {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let (v, _) = r_tilde(spec, s, cfg)?;
    if (v - omega).abs() <= 10.0 * tol {
        Ok(s / omega)
    } else {
        Err(CoreError::OutOfDomain(format!(
            "Rtilde inversion stalled for omega = {omega}"
        )))
    }
}

/// Residual of the R-transform identity relating a spectrum and its
/// inverse: `1/R_A(s)` against `R_{A^{-1}}(-R_A(s) (1 + s R_A(s)))`.
pub fn r_inverse_relation_check(
    spec: &EmpiricalSpectrum,
    s: f64,
    cfg: &BracketConfig,
) -> Result<f64> {
    let inv = spec.inverse_spectrum()?;
    let r = r_transform(spec, s, cfg)?;
    if r == 0.0 {
        return Err(CoreError::OutOfDomain("R(s) = 0 in inverse relation".into()));
    }
    let arg = -r * (1.0 + s * r);
    let rhs = r_transform(&inv, arg, cfg)?;
    Ok((1.0 / r - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> BracketConfig {
        BracketConfig::default()
    }

    #[test]
    fn r_of_point_mass_is_constant() {
        let s = EmpiricalSpectrum::new(vec![2.5; 8]).unwrap();
        for &arg in &[-2.0, -0.5, -0.01, 0.3, 1.0] {
            let r = r_transform(&s, arg, &cfg()).unwrap();
            assert_abs_diff_eq!(r, 2.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn r_two_atom_closed_form() {
        // spectrum {1, 3}: B(1/4) solves (1/(1-x) + 1/(3-x))/2 = 1/4,
        // giving x = -sqrt(5); R(-1/4) = 4 - sqrt(5)
        let s = EmpiricalSpectrum::new(vec![1.0, 3.0]).unwrap();
        let r = r_transform(&s, -0.25, &cfg()).unwrap();
        assert_abs_diff_eq!(r, 4.0 - 5.0_f64.sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn lemma_harmonic_mean_closure() {
        // q = mean(1/x); q R(-q) = 1 exactly
        let s = EmpiricalSpectrum::new(vec![1.0, 2.0, 4.0]).unwrap();
        let q = s.inverse_spectrum().unwrap().mean();
        let r = r_transform(&s, -q, &cfg()).unwrap();
        assert_abs_diff_eq!(q * r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn r_forward_residual() {
        // the returned value must invert back through G
        let s = EmpiricalSpectrum::new(vec![0.2, 0.9, 1.4, 3.0, 3.1]).unwrap();
        for &arg in &[-1.3, -0.4, 0.2] {
            let r = r_transform(&s, arg, &cfg()).unwrap();
            let b = r + 1.0 / arg;
            assert!(
                (s.stieltjes_real(b) - (-arg)).abs() < 1e-11,
                "residual too large at s = {arg}"
            );
        }
    }

    #[test]
    fn s_of_point_mass() {
        let s = EmpiricalSpectrum::new(vec![2.0; 4]).unwrap();
        for &w in &[-0.7, -0.3, -0.05] {
            assert_abs_diff_eq!(s_transform(&s, w, &cfg()).unwrap(), 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn s_two_atom_frozen_reference() {
        // high-precision root of s Rtilde-inversion for spectrum {1, 3}
        let s = EmpiricalSpectrum::new(vec![1.0, 3.0]).unwrap();
        let v = s_transform(&s, -0.1, &cfg()).unwrap();
        assert_abs_diff_eq!(v, 0.51313067138981883, epsilon = 1e-10);
    }

    #[test]
    fn s_roundtrip_through_r_tilde() {
        let spec = EmpiricalSpectrum::new(vec![0.5, 1.0, 2.0, 2.2]).unwrap();
        for &w in &[-0.5, -0.2, -0.03] {
            let sv = s_transform(&spec, w, &cfg()).unwrap();
            let (v, _) = r_tilde(&spec, sv * w, &cfg()).unwrap();
            assert_abs_diff_eq!(v, w, epsilon = 1e-10);
        }
    }

    #[test]
    fn s_rejects_zero_mean() {
        let spec = EmpiricalSpectrum::new(vec![-1.0, 1.0]).unwrap();
        assert!(matches!(
            s_transform(&spec, -0.1, &cfg()),
            Err(CoreError::ZeroMean)
        ));
    }

    #[test]
    fn inverse_relation_point_mass_exact() {
        let spec = EmpiricalSpectrum::new(vec![2.0; 4]).unwrap();
        let resid = r_inverse_relation_check(&spec, -0.3, &cfg()).unwrap();
        assert!(resid < 1e-10, "resid={resid}");
    }

    #[test]
    fn inverse_relation_three_atoms() {
        let spec = EmpiricalSpectrum::new(vec![1.0, 2.0, 4.0]).unwrap();
        let resid = r_inverse_relation_check(&spec, -0.2, &cfg()).unwrap();
        assert!(resid < 1e-9, "resid={resid}");
    }

    #[test]
    fn inverse_relation_rejects_zero() {
        let spec = EmpiricalSpectrum::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert!(r_inverse_relation_check(&spec, -0.2, &cfg()).is_err());
    }
}
