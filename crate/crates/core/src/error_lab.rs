//! Error diagnostics for the polynomial quantization pipeline: price errors
//! across grid sizes, the (1/3)-quasi-norm of the price density and the
//! asymptotic quantization bound it controls, Zador-rate fits and scans for
//! negative density.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermite::{price_european_series, TruncatedDensity};
use crate::model::{hermite_moments, GaussianWeight, HermiteMoments, SvjParams};
use crate::par;
use crate::pricing::{price_european_grid, OptionSpec};
use crate::quadrature::{integrate_with_breaks, Tolerance};
use crate::quantizer::poly::quantize_log_price;
use crate::quantizer::{self, CellModel, NewtonConfig, QuantGrid, Units};
use crate::special::{hermite_normalized_into, norm_sf};

/// `|π^(M) − π̂^(M,N)|` for a European option: series price against the
/// price on the stationary `N`-point log-price grid.
pub fn err2(lm: &HermiteMoments, n: usize, r: f64, spec: &OptionSpec) -> Result<f64> {
    let d = TruncatedDensity::new(lm.clone());
    let series = price_european_series(&d, spec.strike, spec.maturity, r, spec.kind)?;
    let grid = quantize_log_price(lm, n)?;
    let quant = price_european_grid(&grid.exp_mapped(), spec, r)?.price;
    Ok((series - quant).abs())
}

/// Same as [`err2`], computing the moments from the model.
pub fn err2_for(m: usize, n: usize, p: &SvjParams, maturity: f64, w: &GaussianWeight, spec: &OptionSpec) -> Result<f64> {
    err2(&hermite_moments(p, maturity, w, m)?, n, p.r, spec)
}

/// Empirical truncation error `|π^(M) − π^(M_ref)|`.
pub fn err1_proxy(lm_ref: &HermiteMoments, m: usize, r: f64, spec: &OptionSpec) -> Result<f64> {
    let price = |lm: HermiteMoments| {
        price_european_series(&TruncatedDensity::new(lm), spec.strike, spec.maturity, r, spec.kind)
    };
    Ok((price(lm_ref.truncated(m))? - price(lm_ref.clone())?).abs())
}

/// Law of `S_T^(M) = exp(X_T^(M))`, with density `h(s) = g^(M)(ln s)/s`.
///
/// Cell integrals use `∫_a^∞ e^{tz} Ĥ_n(z) φ(z) dz`, which satisfies
/// `Ĵ_n = (t Ĵ_{n−1} + Ĥ_{n−1}(a) e^{ta} φ(a))/√n`, `Ĵ_0 = e^{t²/2} Φ̄(a − t)`.
#[derive(Debug, Clone)]
pub struct PriceDensity {
    pub log_density: TruncatedDensity,
    center: f64,
}

impl PriceDensity {
    pub fn new(log_density: TruncatedDensity) -> Self {
        let mut d = PriceDensity { log_density, center: 0.0 };
        d.center = d.raw_tail(f64::NEG_INFINITY, 1);
        d
    }

    /// `∫_{ln e}^∞ e^{kx} g^(M)(x) dx`.
    fn raw_tail(&self, e: f64, k: u32) -> f64 {
        let w = &self.log_density.weight;
        let lm = &self.log_density.moments.values;
        let t = k as f64 * w.sigma_w;
        let a = if e <= 0.0 { f64::NEG_INFINITY } else { w.standardize(e.ln()) };
        if a == f64::INFINITY {
            return 0.0;
        }
        let order = lm.len() - 1;
        let mut h = vec![0.0; order.max(1) + 1];
        let edge = if a == f64::NEG_INFINITY {
            0.0
        } else {
            hermite_normalized_into(a, &mut h);
            (t * a - 0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let mut j = (0.5 * t * t).exp() * norm_sf(a - t);
        let mut acc = lm[0] * j;
        for n in 1..=order {
            j = (t * j + h[n - 1] * edge) / (n as f64).sqrt();
            acc += lm[n] * j;
        }
        (k as f64 * w.mu_w).exp() * acc
    }
}

impl CellModel for PriceDensity {
    fn center(&self) -> f64 {
        self.center
    }

    fn upper_tails(&self, e: f64) -> [f64; 3] {
        let c = self.center;
        let (j0, j1, j2) = (self.raw_tail(e, 0), self.raw_tail(e, 1), self.raw_tail(e, 2));
        [j0, j1 - c * j0, j2 - 2.0 * c * j1 + c * c * j0]
    }

    fn density(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.log_density.density(s.ln()) / s
        }
    }
}

/// Stationary `n`-point quantizer of `S_T^(M)` in price units.
pub fn quantize_price(d: &PriceDensity, n: usize) -> Result<QuantGrid> {
    let init = quantizer::moment_matched_grid(d, n);
    let mut g = quantizer::solve_stationary(d, &init, &NewtonConfig::default(), Units::Price)?;
    g.meta.m = Some(d.log_density.order());
    g.meta.date = Some(d.log_density.moments.maturity);
    Ok(g)
}

/// `‖S − Ŝ‖₂` for a price grid.
pub fn l2_error(d: &PriceDensity, grid: &QuantGrid) -> Result<f64> {
    Ok(quantizer::distortion(d, &grid.points)?.max(0.0).sqrt())
}

/// `(∫₀^∞ |h(s)|^{1/3} ds)³` with `h(s) = g(ln s)/s`, integrated in
/// `x = ln s` as `∫ |g(x)|^{1/3} e^{2x/3} dx`. The absolute value only
/// matters where the truncated density dips below zero.
pub fn quasinorm_13_of(d: &TruncatedDensity, tol: f64) -> Result<f64> {
    let w = d.weight;
    let f = |x: f64| d.density(x).abs().cbrt() * (2.0 * x / 3.0).exp();
    let breaks: Vec<f64> = (-12..=12).map(|k| w.mu_w + w.sigma_w * k as f64).collect();
    let lo = w.mu_w - 60.0 * w.sigma_w;
    let hi = w.mu_w + 60.0 * w.sigma_w;
    let res = integrate_with_breaks(f, lo, hi, &breaks, Tolerance { abs: 0.0, rel: tol, max_segments: 20_000 })?;
    if !res.value.is_finite() {
        return Err(Error::Numerical("quasi-norm integral diverged".into()));
    }
    Ok(res.value.powi(3))
}

pub fn quasinorm_13(m: usize, p: &SvjParams, maturity: f64, w: &GaussianWeight) -> Result<f64> {
    quasinorm_13_of(&TruncatedDensity::new(hermite_moments(p, maturity, w, m)?), 1e-10)
}

/// Asymptotic constant `‖h‖_{1/3}^{1/2} / (2√3)`.
pub fn zador_bound(norm_13: f64) -> f64 {
    norm_13.sqrt() / (2.0 * 3f64.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorStudy {
    pub m: usize,
    pub n_ladder: Vec<usize>,
    /// Price errors `err2_{M,N}`.
    pub err2_values: Vec<f64>,
    /// Price-space quantization errors `‖S − Ŝ‖₂`.
    pub l2_errors: Vec<f64>,
    pub norm_13: f64,
    pub bound: f64,
}

impl ErrorStudy {
    pub fn n_err2(&self) -> Vec<f64> {
        self.n_ladder.iter().zip(&self.err2_values).map(|(n, e)| *n as f64 * e).collect()
    }

    /// Columns `N,err2,N_err2,bound`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,err2,N_err2,bound\n");
        for ((n, e), ne) in self.n_ladder.iter().zip(&self.err2_values).zip(self.n_err2()) {
            s += &format!("{n},{e:.10e},{ne:.10e},{:.10e}\n", self.bound);
        }
        s
    }
}

/// Runs the grid ladder for one option. Grid sizes are solved in parallel.
pub fn error_study(lm: &HermiteMoments, n_ladder: &[usize], r: f64, spec: &OptionSpec) -> Result<ErrorStudy> {
    if n_ladder.is_empty() || n_ladder.contains(&0) {
        return Err(Error::InvalidInput("grid ladder must be non-empty with N ≥ 1".into()));
    }
    let d = TruncatedDensity::new(lm.clone());
    let price_d = PriceDensity::new(d.clone());
    let norm_13 = quasinorm_13_of(&d, 1e-10)?;
    let rows: Vec<Result<(f64, f64)>> = par::map_slice(n_ladder, |&n| {
        let e = err2(lm, n, r, spec)?;
        let g = quantize_price(&price_d, n)?;
        Ok((e, l2_error(&price_d, &g)?))
    });
    let mut err2_values = Vec::with_capacity(rows.len());
    let mut l2_errors = Vec::with_capacity(rows.len());
    for row in rows {
        let (e, l2) = row?;
        err2_values.push(e);
        l2_errors.push(l2);
    }
    Ok(ErrorStudy {
        m: lm.order,
        n_ladder: n_ladder.to_vec(),
        err2_values,
        l2_errors,
        norm_13,
        bound: zador_bound(norm_13),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub n: usize,
    pub l2_error: f64,
    pub n_l2_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub bound: f64,
    /// Multiplicative slack on the bound.
    pub slack: f64,
    /// `None` when the ladder has fewer than two sizes.
    pub satisfied: Option<bool>,
}

impl BoundReport {
    /// Columns `N,l2_error,N_l2_error,bound`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,l2_error,N_l2_error,bound\n");
        for r in &self.rows {
            s += &format!("{},{:.10e},{:.10e},{:.10e}\n", r.n, r.l2_error, r.n_l2_error, self.bound);
        }
        s
    }
}

/// Checks `N‖S − Ŝ‖₂ ≤ slack · bound` at the two largest ladder sizes.
pub fn bound_check(study: &ErrorStudy, slack: f64) -> BoundReport {
    let mut rows: Vec<BoundRow> = study
        .n_ladder
        .iter()
        .zip(&study.l2_errors)
        .map(|(&n, &e)| BoundRow { n, l2_error: e, n_l2_error: n as f64 * e })
        .collect();
    rows.sort_by_key(|r| r.n);
    let satisfied = (rows.len() >= 2)
        .then(|| rows[rows.len() - 2..].iter().all(|r| r.n_l2_error <= slack * study.bound));
    BoundReport { rows, bound: study.bound, slack, satisfied }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct ZadorFit {
    pub n_ladder: Vec<usize>,
    pub distortions: Vec<f64>,
    /// Slope of `√distortion` against `N` on log scales.
    pub slope: f64,
}

/// Distortion of the stationary log-price grids over a ladder and the fitted
/// decay rate of `√distortion`.
pub fn zador_fit(lm: &HermiteMoments, n_ladder: &[usize]) -> Result<ZadorFit> {
    let d = TruncatedDensity::new(lm.clone());
    let dist: Vec<Result<f64>> = par::map_slice(n_ladder, |&n| {
        let g = quantize_log_price(lm, n)?;
        quantizer::distortion(&d, &g.points)
    });
    let distortions = dist.into_iter().collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = n_ladder.iter().map(|n| *n as f64).collect();
    let y: Vec<f64> = distortions.iter().map(|d| d.max(0.0).sqrt()).collect();
    Ok(ZadorFit { n_ladder: n_ladder.to_vec(), distortions, slope: log_log_slope(&x, &y) })
}

#[derive(Debug, Clone, Serialize)]
pub struct NegativityRow {
    pub m: usize,
    pub min_density: f64,
    pub argmin: f64,
    pub negative_mass: f64,
}

/// Scan points on `[μ_w − 6σ_w, μ_w + 6σ_w]`.
pub const SCAN_POINTS: usize = 10_000;

/// Minimum of `g^(M)` and the trapezoidal mass of its negative part, one row
/// per truncation order. Moments are computed once at the largest order.
pub fn density_negativity_scan(m_list: &[usize], p: &SvjParams, maturity: f64, w: &GaussianWeight) -> Result<Vec<NegativityRow>> {
    let Some(&top) = m_list.iter().max() else { return Ok(Vec::new()) };
    let lm = hermite_moments(p, maturity, w, top)?;
    Ok(par::map_slice(m_list, |&m| negativity_row(&TruncatedDensity::new(lm.truncated(m)))))
}

pub fn negativity_row(d: &TruncatedDensity) -> NegativityRow {
    let w = d.weight;
    let (lo, hi) = (w.mu_w - 6.0 * w.sigma_w, w.mu_w + 6.0 * w.sigma_w);
    let h = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let vals: Vec<f64> = (0..SCAN_POINTS).map(|i| d.density(lo + h * i as f64)).collect();
    let (imin, vmin) = vals.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    let neg: Vec<f64> = vals.iter().map(|v| (-v).max(0.0)).collect();
    let negative_mass = h * (neg.iter().sum::<f64>() - 0.5 * (neg[0] + neg[SCAN_POINTS - 1]));
    NegativityRow { m: d.order(), min_density: vmin, argmin: lo + h * imin as f64, negative_mass }
}

/// Columns `M,min_density,negative_mass`.
pub fn negativity_csv(rows: &[NegativityRow]) -> String {
    let mut s = String::from("M,min_density,negative_mass\n");
    for r in rows {
        s += &format!("{},{:.10e},{:.10e}\n", r.m, r.min_density, r.negative_mass);
    }
    s
}
