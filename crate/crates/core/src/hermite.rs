//! Generalized Hermite basis `H_n(x) = 𝓗_n((x−μ_w)/σ_w)/√(n!)`, orthonormal
//! in `L²_w`, the tail coefficient functions used by the quantizer, the
//! truncated density `g^(M)` and series prices.

use crate::error::{Error, Result};
use crate::model::{GaussianWeight, HermiteMoments};
use crate::pricing::OptionKind;
use crate::quadrature::{gauss_hermite, integrate_vec, Tolerance};
use crate::special::{hermite_normalized_into, norm_pdf, norm_sf};

/// Standardized integration range for payoff coefficients. Beyond |z| = 40
/// every integrand below is smaller than e^{−700}.
const Z_CUT: f64 = 40.0;

#[derive(Debug, Clone, Copy)]
pub struct HermiteEvaluator {
    pub weight: GaussianWeight,
    pub max_order: usize,
}

impl HermiteEvaluator {
    pub fn new(weight: GaussianWeight, max_order: usize) -> Self {
        HermiteEvaluator { weight, max_order }
    }

    /// `out[n] = H_n(x)` for `n = 0..=max_order`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        hermite_normalized_into(self.weight.standardize(x), &mut out[..=self.max_order]);
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.max_order + 1];
        self.eval_into(x, &mut out);
        out
    }
}

/// `H_n(x)`.
pub fn hermite_h(n: usize, x: f64, w: &GaussianWeight) -> f64 {
    HermiteEvaluator::new(*w, n).eval(x)[n]
}

/// `⟨H_m, H_n⟩_w` by Gauss–Hermite quadrature, exact for the degrees involved.
pub fn orthonormality_check(m: usize, n: usize, w: &GaussianWeight) -> f64 {
    let nodes = (m + n) / 2 + 1;
    let (z, wt) = gauss_hermite(nodes);
    let ev = HermiteEvaluator::new(*w, m.max(n));
    let mut h = vec![0.0; m.max(n) + 1];
    z.iter()
        .zip(&wt)
        .map(|(&zi, &wi)| {
            ev.eval_into(w.mu_w + w.sigma_w * zi, &mut h);
            wi * h[m] * h[n]
        })
        .sum()
}

/// Upper-tail integrals of the basis against `w` at one cell edge:
/// `l_n = ∫_e^∞ H_n w`, `h_n = ∫_e^∞ y H_n w`, `k_n = ∫_e^∞ y² H_n w`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCoefficients {
    pub l: Vec<f64>,
    pub h: Vec<f64>,
    pub k: Vec<f64>,
}

/// Tail coefficients at edge `e`, which may be `±∞`.
///
/// With `z = (e − μ_w)/σ_w` and `He_n φ = −(He_{n−1} φ)'`, the standardized
/// tails are `∫_z^∞ He_n φ = He_{n−1}(z)φ(z)` for `n ≥ 1` and `Φ̄(z)` for
/// `n = 0`; the first and second moment kernels follow from
/// `z He_n = He_{n+1} + n He_{n−1}` applied once and twice.
pub fn tail_coefficients(e: f64, w: &GaussianWeight, order: usize) -> TailCoefficients {
    let (mu, s) = (w.mu_w, w.sigma_w);
    let n_len = order + 1;
    if e == f64::NEG_INFINITY {
        let mut l = vec![0.0; n_len];
        let mut h = vec![0.0; n_len];
        let mut k = vec![0.0; n_len];
        l[0] = 1.0;
        h[0] = mu;
        k[0] = mu * mu + s * s;
        if order >= 1 {
            h[1] = s;
            k[1] = 2.0 * mu * s;
        }
        if order >= 2 {
            k[2] = std::f64::consts::SQRT_2 * s * s;
        }
        return TailCoefficients { l, h, k };
    }
    if e == f64::INFINITY || e.is_nan() {
        return TailCoefficients { l: vec![0.0; n_len], h: vec![0.0; n_len], k: vec![0.0; n_len] };
    }

    let z = w.standardize(e);
    let phi = norm_pdf(z);
    let tail0 = norm_sf(z);
    // hn[j] = Ĥ_j(z), j = 0..=order+1
    let mut hn = vec![0.0; order + 2];
    hermite_normalized_into(z, &mut hn);

    // t[n] = ∫_z^∞ Ĥ_n φ
    let t = |n: usize| -> f64 {
        if n == 0 {
            tail0
        } else {
            hn[n - 1] * phi / (n as f64).sqrt()
        }
    };
    let mut l = Vec::with_capacity(n_len);
    let mut h = Vec::with_capacity(n_len);
    let mut k = Vec::with_capacity(n_len);
    for n in 0..n_len {
        let nf = n as f64;
        let ln = t(n);
        // first moment kernel: ∫ z Ĥ_n φ = Ĥ_n φ + √(n/(n−1)) Ĥ_{n−2} φ
        let lower1 = match n {
            0 => 0.0,
            1 => tail0,
            _ => (nf / (nf - 1.0)).sqrt() * hn[n - 2] * phi,
        };
        let s1 = hn[n] * phi + lower1;
        // second moment kernel: ∫ z² Ĥ_n φ
        let lower2 = match n {
            0 | 1 => 0.0,
            2 => std::f64::consts::SQRT_2 * tail0,
            _ => (nf * (nf - 1.0) / (nf - 2.0)).sqrt() * hn[n - 3] * phi,
        };
        let s2 = (nf + 1.0).sqrt() * hn[n + 1] * phi + (2.0 * nf + 1.0) * ln + lower2;
        l.push(ln);
        h.push(mu * ln + s * s1);
        k.push(mu * mu * ln + 2.0 * mu * s * s1 + s * s * s2);
    }
    TailCoefficients { l, h, k }
}

/// `h_n(K) = ∫_K^∞ y H_n(y) w(y) dy`.
pub fn coeff_h(n: usize, strike: f64, w: &GaussianWeight) -> f64 {
    tail_coefficients(strike, w, n).h[n]
}

/// `l_n(K) = ∫_K^∞ H_n(y) w(y) dy`.
pub fn coeff_l(n: usize, strike: f64, w: &GaussianWeight) -> f64 {
    tail_coefficients(strike, w, n).l[n]
}

/// `k_n(K) = ∫_K^∞ y² H_n(y) w(y) dy`.
pub fn coeff_k(n: usize, strike: f64, w: &GaussianWeight) -> f64 {
    tail_coefficients(strike, w, n).k[n]
}

/// `g^(M)(x) = Σ_{n≤M} ℓ_n H_n(x) w(x)`.
#[derive(Debug, Clone)]
pub struct TruncatedDensity {
    pub moments: HermiteMoments,
    pub weight: GaussianWeight,
}

impl TruncatedDensity {
    pub fn new(moments: HermiteMoments) -> Self {
        let weight = moments.weight;
        TruncatedDensity { moments, weight }
    }

    pub fn order(&self) -> usize {
        self.moments.order
    }

    pub fn density(&self, x: f64) -> f64 {
        let mut h = vec![0.0; self.order() + 1];
        hermite_normalized_into(self.weight.standardize(x), &mut h);
        let s: f64 = h.iter().zip(&self.moments.values).map(|(a, b)| a * b).sum();
        s * self.weight.pdf(x)
    }

    fn dot(&self, v: &[f64]) -> f64 {
        self.moments.values.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `(∫_e^∞ g, ∫_e^∞ x g, ∫_e^∞ x² g)`.
    pub fn upper_tails(&self, e: f64) -> (f64, f64, f64) {
        let t = tail_coefficients(e, &self.weight, self.order());
        (self.dot(&t.l), self.dot(&t.h), self.dot(&t.k))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.upper_tails(x).0
    }

    pub fn mean(&self) -> f64 {
        self.moments.mean()
    }

    pub fn variance(&self) -> f64 {
        self.moments.variance()
    }
}

pub fn density_g(x: f64, d: &TruncatedDensity) -> f64 {
    d.density(x)
}

/// Payoff coefficients `f_n = ⟨f, H_n⟩_w`, `n = 0..=order`, for
/// `f(x) = (eˣ − K)^+` or `(K − eˣ)^+`, by adaptive quadrature over the
/// half-line where the payoff is nonzero.
pub fn payoff_coefficients(kind: OptionKind, strike: f64, w: &GaussianWeight, order: usize) -> Result<Vec<f64>> {
    if !(strike > 0.0) || !strike.is_finite() {
        return Err(Error::InvalidInput(format!("strike must be positive, got {strike}")));
    }
    let zk = w.standardize(strike.ln());
    let (lo, hi) = match kind {
        OptionKind::Call => (zk.max(-Z_CUT), Z_CUT),
        OptionKind::Put => (-Z_CUT, zk.min(Z_CUT)),
    };
    if lo >= hi {
        return Ok(vec![0.0; order + 1]);
    }
    let (mu, s) = (w.mu_w, w.sigma_w);
    let integrand = |z: f64, out: &mut [f64]| {
        // (e^{μ+σz} − K) φ(z)
        let gap = match kind {
            OptionKind::Call => exp_gap(mu + s * z, strike),
            OptionKind::Put => -exp_gap(mu + s * z, strike),
        };
        let scale = gap * norm_pdf(z);
        hermite_normalized_into(z, out);
        for v in out.iter_mut() {
            *v *= scale;
        }
    };
    let tol = Tolerance { abs: 1e-13 * strike, rel: 1e-14, max_segments: 4000 };
    let res = integrate_vec(integrand, order + 1, lo, hi, tol)?;
    if res.value.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite payoff coefficient; sigma_w too small for the payoff".into()));
    }
    Ok(res.value)
}

/// `eˣ − K` as `K·expm1(x − ln K)`, accurate near the strike.
#[inline]
fn exp_gap(x: f64, strike: f64) -> f64 {
    strike * (x - strike.ln()).exp_m1()
}

/// `e^{−rT} Σ_{n≤M} ℓ_n f_n`.
pub fn price_european_series(d: &TruncatedDensity, strike: f64, maturity: f64, r: f64, kind: OptionKind) -> Result<f64> {
    let f = payoff_coefficients(kind, strike, &d.weight, d.order())?;
    let sum: f64 = f.iter().zip(&d.moments.values).map(|(a, b)| a * b).sum();
    Ok((-r * maturity).exp() * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn w() -> GaussianWeight {
        GaussianWeight::new(4.6, 0.71)
    }

    #[test]
    fn low_order_values() {
        let w = w();
        assert_eq!(hermite_h(0, 3.3, &w), 1.0);
        assert_eq!(hermite_h(1, w.mu_w, &w), 0.0);
        assert!(hermite_h(2, w.mu_w + w.sigma_w, &w).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_small_orders() {
        let w = w();
        assert!((orthonormality_check(0, 0, &w) - 1.0).abs() < 1e-14);
        assert!(orthonormality_check(0, 1, &w).abs() < 1e-14);
        assert!((orthonormality_check(10, 10, &w) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn simple_tail_values() {
        let w = w();
        assert!((coeff_l(0, w.mu_w, &w) - 0.5).abs() < 1e-15);
        assert!((coeff_h(0, w.mu_w, &w) - (w.sigma_w * norm_pdf(0.0) + w.mu_w / 2.0)).abs() < 1e-14);
        assert!((coeff_h(0, f64::NEG_INFINITY, &w) - w.mu_w).abs() < 1e-15);
        let k = 5.2;
        assert!((coeff_l(1, k, &w) - norm_pdf(w.standardize(k))).abs() < 1e-15);
    }

    #[test]
    fn tails_match_quadrature() {
        let w = w();
        for &e in &[3.1, 4.4, 4.6, 5.3] {
            let t = tail_coefficients(e, &w, 12);
            for n in [0usize, 1, 2, 3, 7, 12] {
                let f = |p: usize| {
                    move |x: f64| {
                        let mut h = [0.0; 13];
                        hermite_normalized_into(w.standardize(x), &mut h);
                        x.powi(p as i32) * h[n] * w.pdf(x)
                    }
                };
                let q0 = integrate(f(0), e, f64::INFINITY, Tolerance::abs(1e-14)).unwrap().value;
                let q1 = integrate(f(1), e, f64::INFINITY, Tolerance::abs(1e-14)).unwrap().value;
                let q2 = integrate(f(2), e, f64::INFINITY, Tolerance::abs(1e-13)).unwrap().value;
                assert!((t.l[n] - q0).abs() < 1e-11, "l n={n} e={e}");
                assert!((t.h[n] - q1).abs() < 1e-10, "h n={n} e={e}");
                assert!((t.k[n] - q2).abs() < 1e-9, "k n={n} e={e}");
            }
        }
    }

    #[test]
    fn infinite_edges_are_limits() {
        let w = w();
        let lo = tail_coefficients(f64::NEG_INFINITY, &w, 5);
        let near = tail_coefficients(w.mu_w - 40.0 * w.sigma_w, &w, 5);
        for n in 0..=5 {
            assert!((lo.l[n] - near.l[n]).abs() < 1e-12);
            assert!((lo.h[n] - near.h[n]).abs() < 1e-12);
            assert!((lo.k[n] - near.k[n]).abs() < 1e-11);
        }
        let hi = tail_coefficients(f64::INFINITY, &w, 5);
        assert!(hi.l.iter().chain(&hi.h).chain(&hi.k).all(|v| *v == 0.0));
    }
}
