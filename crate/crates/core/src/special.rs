//! Gaussian special functions and the normalized Hermite recurrence.

use statrs::distribution::{ContinuousCDF, Normal};
use libm::erfc;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function Φ. `statrs`' erfc is only good to
/// about 1e-10 relative, so this goes through libm.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
    }
}

/// Upper tail 1 − Φ(z), accurate for large positive `z`.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    norm_cdf(-z)
}

/// Quantile function Φ⁻¹.
pub fn norm_inv(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = Normal::standard().inverse_cdf(p);
    // one Halley step against erfc to tighten the tails
    let e = norm_cdf(x) - p;
    let u = e / norm_pdf(x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Fills `out[k] = 𝓗_k(z)/√(k!)` for `k = 0..out.len()`.
///
/// Uses `Ĥ_{k+1} = (z Ĥ_k − √k Ĥ_{k−1}) / √(k+1)`, which keeps the factorial
/// normalization inside the recurrence so nothing overflows for large k.
pub fn hermite_normalized_into(z: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = z;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = (z * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
    }
}

pub fn hermite_normalized(z: f64, max_order: usize) -> Vec<f64> {
    let mut out = vec![0.0; max_order + 1];
    hermite_normalized_into(z, &mut out);
    out
}

/// Coefficients of `𝓗_n(z)/√(n!)` in the monomials `z^j`, for `n = 0..=max_order`.
/// Row `n` has length `n + 1`.
pub fn hermite_normalized_coefficients(max_order: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(max_order + 1);
    rows.push(vec![1.0]);
    if max_order >= 1 {
        rows.push(vec![0.0, 1.0]);
    }
    for k in 1..max_order {
        let kf = k as f64;
        let denom = (kf + 1.0).sqrt();
        let sk = kf.sqrt();
        let mut next = vec![0.0; k + 2];
        for (j, c) in rows[k].iter().enumerate() {
            next[j + 1] += c / denom;
        }
        for (j, c) in rows[k - 1].iter().enumerate() {
            next[j] -= sk * c / denom;
        }
        rows.push(next);
    }
    rows
}
