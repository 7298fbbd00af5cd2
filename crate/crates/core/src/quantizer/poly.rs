//! Quantization of the truncated log-price density `g^(M)` in closed form:
//! every cell integral is an `ℓ`-weighted combination of the tail
//! coefficients `l_n`, `h_n`, `k_n` at the cell edges.

use super::{CellModel, NewtonConfig, QuantGrid, Tridiagonal, Units};
use crate::error::Result;
use crate::hermite::{tail_coefficients, TruncatedDensity};
use crate::model::{GaussianWeight, HermiteMoments};

impl CellModel for TruncatedDensity {
    fn center(&self) -> f64 {
        self.weight.mu_w
    }

    fn upper_tails(&self, e: f64) -> [f64; 3] {
        // moments of x − μ_w come from the same coefficients under the
        // weight recentred at zero
        let w0 = GaussianWeight::new(0.0, self.weight.sigma_w);
        let t = tail_coefficients(e - self.weight.mu_w, &w0, self.order());
        let dot = |v: &[f64]| -> f64 { self.moments.values.iter().zip(v).map(|(a, b)| a * b).sum() };
        [dot(&t.l), dot(&t.h), dot(&t.k)]
    }

    fn density(&self, x: f64) -> f64 {
        TruncatedDensity::density(self, x)
    }
}

fn density(lm: &HermiteMoments, w: &GaussianWeight) -> TruncatedDensity {
    TruncatedDensity { moments: lm.clone(), weight: *w }
}

/// `E_i = Σ_n ℓ_n [h_n(m_{i−}) − h_n(m_{i+}) − x_i (l_n(m_{i−}) − l_n(m_{i+}))]`.
pub fn master_residual(points: &[f64], lm: &HermiteMoments, w: &GaussianWeight) -> Result<Vec<f64>> {
    super::residual(&density(lm, w), points)
}

pub fn jacobian(points: &[f64], lm: &HermiteMoments, w: &GaussianWeight) -> Result<Tridiagonal> {
    super::jacobian(&density(lm, w), points)
}

pub fn cell_weights(points: &[f64], lm: &HermiteMoments, w: &GaussianWeight) -> Result<Vec<f64>> {
    super::cell_weights(&density(lm, w), points)
}

pub fn distortion(points: &[f64], lm: &HermiteMoments, w: &GaussianWeight) -> Result<f64> {
    super::distortion(&density(lm, w), points)
}

pub fn newton_solve(
    init: &[f64],
    lm: &HermiteMoments,
    w: &GaussianWeight,
    tol: f64,
    max_iter: usize,
) -> Result<QuantGrid> {
    let cfg = NewtonConfig { tol, max_iter, ..Default::default() };
    let mut g = super::newton_solve(&density(lm, w), init, &cfg, Units::LogPrice)?;
    g.meta.m = Some(lm.order);
    g.meta.date = Some(lm.maturity);
    Ok(g)
}

/// Stationary `n`-point grid for `g^(M)`, started from the quantiles of the
/// moment-matched normal law, with the Lloyd fallback of
/// [`super::solve_stationary`].
pub fn quantize_log_price(lm: &HermiteMoments, n: usize) -> Result<QuantGrid> {
    quantize_log_price_with(lm, n, &NewtonConfig::default())
}

pub fn quantize_log_price_with(lm: &HermiteMoments, n: usize, cfg: &NewtonConfig) -> Result<QuantGrid> {
    let d = density(lm, &lm.weight);
    let init = super::moment_matched_grid(&d, n);
    let mut g = super::solve_stationary(&d, &init, cfg, Units::LogPrice)?;
    g.meta.m = Some(lm.order);
    g.meta.date = Some(lm.maturity);
    Ok(g)
}
