//! Free cumulants from spectral moments via the moment-cumulant recursion
//! over non-crossing partitions:
//!
//! `m_p = sum_{k=1..p} kappa_k  sum_{i_1+..+i_k = p-k, i_j >= 0} m_{i_1} .. m_{i_k}`
//!
//! with `m_0 = 1`. Conditioning degrades with order; 12 is the documented
//! truncation bound.

/// Powers of the moment sequence under index convolution:
/// `conv[k][j] = sum_{i_1+..+i_k=j} m_{i_1} .. m_{i_k}` with `m_0 = 1`.
fn convolution_powers(m: &[f64], p: usize) -> Vec<Vec<f64>> {
    let mut base = vec![0.0; p + 1];
    base[0] = 1.0;
    base[1..=p].copy_from_slice(&m[..p]);
    let mut conv = vec![vec![0.0; p + 1]; p + 1];
    conv[1].copy_from_slice(&base);
    for k in 2..=p {
        for j in 0..=p {
            let mut acc = 0.0;
            for i in 0..=j {
                acc += conv[k - 1][i] * base[j - i];
            }
            conv[k][j] = acc;
        }
    }
    conv
}

/// Free cumulants `kappa_1 .. kappa_p` from moments `m_1 .. m_p`.
pub fn free_cumulants_from_moments(moments: &[f64]) -> Vec<f64> {
    let p = moments.len();
    if p == 0 {
        return Vec::new();
    }
    debug_assert!(p <= 12, "documented truncation bound is 12");
    let conv = convolution_powers(moments, p);
    let mut kappa = vec![0.0; p];
    for q in 1..=p {
        let mut acc = moments[q - 1];
        for k in 1..q {
            acc -= kappa[k - 1] * conv[k][q - k];
        }
        // the k = q term is kappa_q * conv[q][0] = kappa_q
        kappa[q - 1] = acc;
    }
    kappa
}

/// Forward reconstruction: moments `m_1 .. m_p` from free cumulants.
pub fn moments_from_free_cumulants(cumulants: &[f64]) -> Vec<f64> {
    let p = cumulants.len();
    let mut m = vec![0.0; p];
    for q in 1..=p {
        let conv = convolution_powers(&m, q);
        let mut acc = 0.0;
        for k in 1..=q {
            acc += cumulants[k - 1] * conv[k][q - k];
        }
        m[q - 1] = acc;
    }
    m
}

/// Truncated R-series `R(s) ~ sum_j kappa_{j+1} s^j`.
pub fn r_series(cumulants: &[f64], s: f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = 1.0;
    for &k in cumulants {
        acc += k * pow;
        pow *= s;
    }
    acc
}
