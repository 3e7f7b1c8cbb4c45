//! Closed-form tilted moments against the quadrature ground truth over
//! randomized cavities, plus the structural properties the solvers rely on
//! (variance contraction for log-concave sites, probit mean monotonicity).

use epfree_core::sites::{
    monotone_link_inverse, normal_cdf, quadrature_oracle, tilted_gaussian_prior, tilted_probit,
    tilted_spike_slab, CavityGaussian, TiltedMoments,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN_2PI: f64 = 1.8378770664093453;

fn normal_pdf_at(x: f64, mean: f64, var: f64) -> f64 {
    (-0.5 * (x - mean) * (x - mean) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn random_cavity(rng: &mut ChaCha8Rng) -> CavityGaussian {
    let mean = rng.gen_range(-5.0..5.0);
    let var = rng.gen_range(0.01..10.0);
    CavityGaussian::new(mean, var).unwrap()
}

/// Mixture oracle for the spike-and-slab site: the point mass at zero is
/// handled analytically, the slab component by quadrature.
fn spike_slab_quadrature(c: CavityGaussian, rho: f64, slab_var: f64) -> TiltedMoments {
    let spike_weight = (1.0 - rho) * normal_pdf_at(0.0, c.mean, c.var);
    let slab = quadrature_oracle(c, |x| rho * normal_pdf_at(x, 0.0, slab_var), 64).unwrap();
    let slab_weight = slab.log_partition.exp();
    let p_slab = slab_weight / (slab_weight + spike_weight);
    let mean = p_slab * slab.mean;
    let var = p_slab * (slab.var + slab.mean * slab.mean) - mean * mean;
    TiltedMoments {
        mean,
        var,
        log_partition: (slab_weight + spike_weight).ln(),
    }
}

#[test]
fn gaussian_prior_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..1000 {
        let c = random_cavity(&mut rng);
        let pm = rng.gen_range(-2.0..2.0);
        let pv = rng.gen_range(0.1..5.0);
        let closed = tilted_gaussian_prior(c, pm, pv).unwrap();
        let quad = quadrature_oracle(c, |x| normal_pdf_at(x, pm, pv), 64).unwrap();
        assert!(
            (closed.mean - quad.mean).abs() < 1e-7,
            "mean mismatch at {c:?} prior ({pm}, {pv}): {} vs {}",
            closed.mean,
            quad.mean
        );
        assert!((closed.var - quad.var).abs() < 1e-7);
        assert!((closed.log_partition - quad.log_partition).abs() < 1e-6);
    }
}

#[test]
fn spike_slab_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..1000 {
        let c = random_cavity(&mut rng);
        let rho = rng.gen_range(0.05..1.0);
        let slab_var = rng.gen_range(0.2..5.0);
        let closed = tilted_spike_slab(c, rho, slab_var).unwrap();
        let quad = spike_slab_quadrature(c, rho, slab_var);
        assert!(
            (closed.mean - quad.mean).abs() < 1e-7,
            "mean mismatch at {c:?} rho={rho} a={slab_var}: {} vs {}",
            closed.mean,
            quad.mean
        );
        assert!((closed.var - quad.var).abs() < 1e-7);
    }
}

#[test]
fn probit_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..1000 {
        let c = random_cavity(&mut rng);
        let label = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let noise_var = rng.gen_range(0.25..4.0);
        let closed = tilted_probit(c, label, noise_var).unwrap();
        let quad =
            quadrature_oracle(c, |z| normal_cdf(label * z / noise_var.sqrt()), 64).unwrap();
        assert!(
            (closed.mean - quad.mean).abs() < 1e-7,
            "mean mismatch at {c:?} label={label} nv={noise_var}: {} vs {}",
            closed.mean,
            quad.mean
        );
        assert!((closed.var - quad.var).abs() < 1e-7);
        assert!((closed.log_partition - quad.log_partition).abs() < 1e-6);
    }
}

#[test]
fn quadrature_log_partition_is_gaussian_convolution() {
    // site = Gaussian pdf: partition must equal the closed-form convolution
    let c = CavityGaussian::new(1.3, 0.7).unwrap();
    let (pm, pv) = (0.4, 1.1);
    let quad = quadrature_oracle(c, |x| normal_pdf_at(x, pm, pv), 64).unwrap();
    let s = c.var + pv;
    let expect = -0.5 * (c.mean - pm) * (c.mean - pm) / s - 0.5 * (LN_2PI + s.ln());
    assert!((quad.log_partition - expect).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn probit_variance_contracts(
        mean in -5.0..5.0f64,
        var in 0.01..10.0f64,
        noise_var in 0.25..4.0f64,
        flip in proptest::bool::ANY,
    ) {
        let label = if flip { -1.0 } else { 1.0 };
        let c = CavityGaussian::new(mean, var).unwrap();
        let t = tilted_probit(c, label, noise_var).unwrap();
        prop_assert!(t.var <= var * (1.0 + 1e-12));
    }

    #[test]
    fn gaussian_variance_contracts(
        mean in -5.0..5.0f64,
        var in 0.01..10.0f64,
        pm in -3.0..3.0f64,
        pv in 0.05..8.0f64,
    ) {
        let c = CavityGaussian::new(mean, var).unwrap();
        let t = tilted_gaussian_prior(c, pm, pv).unwrap();
        prop_assert!(t.var <= var * (1.0 + 1e-12));
    }

    #[test]
    fn probit_mean_monotone_in_cavity_mean(
        m1 in -8.0..8.0f64,
        delta in 1e-6..4.0f64,
        var in 0.01..10.0f64,
        noise_var in 0.25..4.0f64,
    ) {
        let a = tilted_probit(CavityGaussian::new(m1, var).unwrap(), 1.0, noise_var).unwrap();
        let b = tilted_probit(CavityGaussian::new(m1 + delta, var).unwrap(), 1.0, noise_var).unwrap();
        prop_assert!(b.mean > a.mean);
    }

    #[test]
    fn link_inverse_roundtrip(
        gamma in -20.0..20.0f64,
        lambda in 0.05..20.0f64,
        noise_var in 0.25..4.0f64,
    ) {
        let c = CavityGaussian::from_natural(gamma, lambda).unwrap();
        let eta = tilted_probit(c, 1.0, noise_var).unwrap().mean;
        let back = monotone_link_inverse(eta, lambda, 1.0, noise_var).unwrap();
        let eta_back = tilted_probit(
            CavityGaussian::from_natural(back, lambda).unwrap(),
            1.0,
            noise_var,
        )
        .unwrap()
        .mean;
        prop_assert!((eta_back - eta).abs() < 1e-9);
    }
}
