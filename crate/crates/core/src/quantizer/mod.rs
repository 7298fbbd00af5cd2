//! One-dimensional stationary quantizers.
//!
//! A quantizer of level N is a sorted grid `x₁ < … < x_N` with Voronoi cells
//! `C_i = [m_{i−}, m_{i+})` bounded by midpoints. A grid is stationary when
//! the master equation `E_i = ∫_{C_i} (x − x_i) g(x) dx = 0` holds for all
//! cells. The solver here only needs upper-tail moments and point values of
//! the law, supplied through [`CellModel`].

pub mod mixture;
pub mod poly;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::special::norm_inv;

pub use mixture::GaussianMixture;

/// A univariate law as seen by the stationary solver.
pub trait CellModel: Sync {
    /// Reference point `c` used to center moments.
    fn center(&self) -> f64;

    /// `[∫_e^∞ g, ∫_e^∞ (x−c) g, ∫_e^∞ (x−c)² g]`; `e` may be `±∞`.
    fn upper_tails(&self, e: f64) -> [f64; 3];

    /// Density of the absolutely continuous part at `x`.
    fn density(&self, x: f64) -> f64;

    /// Mean and variance of the law.
    fn mean_variance(&self) -> (f64, f64) {
        let [m0, m1, m2] = self.upper_tails(f64::NEG_INFINITY);
        let mean = m1 / m0;
        (self.center() + mean, m2 / m0 - mean * mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    LogPrice,
    Price,
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeta {
    pub n: usize,
    /// Hermite truncation order, when the grid quantizes a series density.
    pub m: Option<usize>,
    pub date: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Final `max |E_i|`.
    pub residual: f64,
    /// Total step halvings performed by the line search.
    pub halvings: usize,
    /// Distortion at every accepted iterate, starting with the initial grid.
    pub distortion_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub units: Units,
    pub meta: GridMeta,
    pub diagnostics: Diagnostics,
}

impl QuantGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// A single atom of mass one.
    pub fn dirac(x: f64, units: Units) -> Self {
        QuantGrid {
            points: vec![x],
            weights: vec![1.0],
            units,
            meta: GridMeta { n: 1, m: None, date: None },
            diagnostics: Diagnostics::default(),
        }
    }

    /// `Σ f(x_i) p_i`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, p)| f(*x) * p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x)
    }

    /// Cell edges `[−∞, m_1, …, m_{N−1}, +∞]`.
    pub fn edges(&self) -> Vec<f64> {
        edges(&self.points)
    }

    /// Index of the cell containing `x` (ties go to the upper cell).
    pub fn cell_of(&self, x: f64) -> usize {
        let e = self.edges();
        e[1..e.len() - 1].partition_point(|m| *m <= x)
    }

    /// CSV with header `i,x_i,weight_i`; `i` starts at 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,x_i,weight_i\n");
        for (i, (x, p)) in self.points.iter().zip(&self.weights).enumerate() {
            s.push_str(&format!("{},{:.17e},{:.17e}\n", i + 1, x, p));
        }
        s
    }

    /// The same grid mapped through `exp`, e.g. log-price to price.
    pub fn exp_mapped(&self) -> QuantGrid {
        QuantGrid {
            points: self.points.iter().map(|x| x.exp()).collect(),
            units: if self.units == Units::LogPrice { Units::Price } else { self.units },
            ..self.clone()
        }
    }
}

pub(crate) fn edges(points: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(points.len() + 1);
    e.push(f64::NEG_INFINITY);
    for w in points.windows(2) {
        e.push(0.5 * (w[0] + w[1]));
    }
    e.push(f64::INFINITY);
    e
}

pub(crate) fn check_sorted(points: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("grid contains non-finite points".into()));
    }
    for w in points.windows(2) {
        if w[1] == w[0] {
            return Err(Error::InvalidInput(format!("duplicate grid point {}", w[0])));
        }
        if w[1] < w[0] {
            return Err(Error::InvalidInput("grid is not sorted increasingly".into()));
        }
    }
    Ok(())
}

fn is_strictly_increasing(points: &[f64]) -> bool {
    points.iter().all(|x| x.is_finite()) && points.windows(2).all(|w| w[1] > w[0])
}

/// Per-cell `[mass, ∫(x−c), ∫(x−c)²]`.
fn cell_moments<C: CellModel + ?Sized>(model: &C, points: &[f64]) -> Vec<[f64; 3]> {
    let e = edges(points);
    let tails = par::map_slice(&e, |&x| model.upper_tails(x));
    tails.windows(2).map(|t| [t[0][0] - t[1][0], t[0][1] - t[1][1], t[0][2] - t[1][2]]).collect()
}

/// Master-equation residuals `E_i = ∫_{C_i} (x − x_i) g`.
pub fn residual<C: CellModel + ?Sized>(model: &C, points: &[f64]) -> Result<Vec<f64>> {
    check_sorted(points)?;
    Ok(residual_unchecked(model, points))
}

fn residual_unchecked<C: CellModel + ?Sized>(model: &C, points: &[f64]) -> Vec<f64> {
    let c = model.center();
    cell_moments(model, points).iter().zip(points).map(|(m, x)| m[1] - (x - c) * m[0]).collect()
}

/// Cell probabilities.
pub fn cell_weights<C: CellModel + ?Sized>(model: &C, points: &[f64]) -> Result<Vec<f64>> {
    check_sorted(points)?;
    Ok(cell_moments(model, points).iter().map(|m| m[0]).collect())
}

/// `Σ_i ∫_{C_i} (x − x_i)² g`.
pub fn distortion<C: CellModel + ?Sized>(model: &C, points: &[f64]) -> Result<f64> {
    check_sorted(points)?;
    Ok(distortion_unchecked(model, points))
}

fn distortion_unchecked<C: CellModel + ?Sized>(model: &C, points: &[f64]) -> f64 {
    let c = model.center();
    cell_moments(model, points)
        .iter()
        .zip(points)
        .map(|(m, x)| {
            let u = x - c;
            m[2] - 2.0 * u * m[1] + u * u * m[0]
        })
        .sum()
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[i] = J_{i,i+1} = J_{i+1,i}`.
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    /// Solves `J x = b` with the Thomas algorithm. Returns `None` on a zero
    /// or non-finite pivot.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        if n > 1 {
            c[0] = self.off[0] / denom;
        }
        d[0] = b[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.off[i - 1] * c[i - 1];
            if denom == 0.0 || !denom.is_finite() {
                return None;
            }
            if i < n - 1 {
                c[i] = self.off[i] / denom;
            }
            d[i] = (b[i] - self.off[i - 1] * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        d.iter().all(|v| v.is_finite()).then_some(d)
    }
}

/// Jacobian of the master equation:
/// `J_{i,i−1} = ½ ((x_i − x_{i−1})/2) g((x_{i−1}+x_i)/2)` and
/// `J_{i,i} = J_{i,i−1} + J_{i,i+1} − P(C_i)`.
pub fn jacobian<C: CellModel + ?Sized>(model: &C, points: &[f64]) -> Result<Tridiagonal> {
    check_sorted(points)?;
    Ok(jacobian_unchecked(model, points))
}

fn jacobian_unchecked<C: CellModel + ?Sized>(model: &C, points: &[f64]) -> Tridiagonal {
    let n = points.len();
    let off: Vec<f64> = par::map_indexed(n.saturating_sub(1), |i| {
        let (a, b) = (points[i], points[i + 1]);
        0.25 * (b - a) * model.density(0.5 * (a + b))
    });
    let mass: Vec<f64> = cell_moments(model, points).iter().map(|m| m[0]).collect();
    let diag = (0..n)
        .map(|i| {
            let lo = if i > 0 { off[i - 1] } else { 0.0 };
            let hi = if i + 1 < n { off[i] } else { 0.0 };
            lo + hi - mass[i]
        })
        .collect();
    Tridiagonal { diag, off }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Stop once `max |E_i| < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Optional box the points must stay in; candidates are clamped into it.
    pub bounds: Option<(f64, f64)>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-9, max_iter: 200, max_halvings: 30, bounds: None }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton–Raphson on the master equation.
///
/// Each step solves `J δ = E` and tries `x − λδ` for `λ = 1, ½, ¼, …`,
/// accepting the first candidate that stays strictly increasing and lowers
/// `‖E‖₂`.
pub fn newton_solve<C: CellModel + ?Sized>(
    model: &C,
    init: &[f64],
    cfg: &NewtonConfig,
    units: Units,
) -> Result<QuantGrid> {
    check_sorted(init)?;
    let mut x = init.to_vec();
    if let Some((lo, hi)) = cfg.bounds {
        x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        if !is_strictly_increasing(&x) {
            return Err(Error::InvalidInput("initial grid collapses after clamping to bounds".into()));
        }
    }
    let mut res = residual_unchecked(model, &x);
    let mut diag = Diagnostics { distortion_history: vec![distortion_unchecked(model, &x)], ..Default::default() };
    let mut iter = 0;
    loop {
        let r = max_abs(&res);
        if !r.is_finite() {
            return Err(Error::Numerical(format!("non-finite master-equation residual at iteration {iter}")));
        }
        if r < cfg.tol {
            diag.iterations = iter;
            diag.residual = r;
            break;
        }
        if iter >= cfg.max_iter {
            return Err(Error::NotConverged { iterations: iter, residual: r });
        }
        let jac = jacobian_unchecked(model, &x);
        let step = jac.solve(&res).ok_or(Error::SingularJacobian { iteration: iter })?;
        let base = norm2(&res);
        let mut lambda = 1.0;
        let mut accepted = None;
        let mut ever_ordered = false;
        let mut halvings = 0;
        while halvings <= cfg.max_halvings {
            let mut cand: Vec<f64> = x.iter().zip(&step).map(|(xi, di)| xi - lambda * di).collect();
            if let Some((lo, hi)) = cfg.bounds {
                cand.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
            }
            if is_strictly_increasing(&cand) {
                ever_ordered = true;
                let cres = residual_unchecked(model, &cand);
                if norm2(&cres) < base {
                    accepted = Some((cand, cres));
                    break;
                }
            }
            lambda *= 0.5;
            halvings += 1;
        }
        diag.halvings += halvings.min(cfg.max_halvings);
        match accepted {
            Some((cand, cres)) => {
                x = cand;
                res = cres;
                diag.distortion_history.push(distortion_unchecked(model, &x));
            }
            None if !ever_ordered => {
                return Err(Error::OrderingViolated { iteration: iter, halvings: cfg.max_halvings })
            }
            None => return Err(Error::NotConverged { iterations: iter, residual: r }),
        }
        iter += 1;
    }
    let weights = cell_moments(model, &x).iter().map(|m| m[0]).collect();
    let n = x.len();
    Ok(QuantGrid { points: x, weights, units, meta: GridMeta { n, m: None, date: None }, diagnostics: diag })
}

/// Lloyd fixed-point iteration `x_i ← E[X | X ∈ C_i]`. Slower than Newton
/// but monotone in distortion and indifferent to atoms in the law. Stops
/// when no point moves by more than `tol` or after `max_iter` sweeps.
pub fn lloyd<C: CellModel + ?Sized>(
    model: &C,
    init: &[f64],
    tol: f64,
    max_iter: usize,
    units: Units,
) -> Result<QuantGrid> {
    check_sorted(init)?;
    let c = model.center();
    let mut x = init.to_vec();
    let mut diag = Diagnostics { distortion_history: vec![distortion_unchecked(model, &x)], ..Default::default() };
    for it in 0..max_iter {
        let cells = cell_moments(model, &x);
        let e = edges(&x);
        // a signed density can put the conditional mean outside its cell
        let mut next: Vec<f64> = cells
            .iter()
            .zip(&x)
            .enumerate()
            .map(|(i, (m, xi))| {
                let target = if m[0] > 1e-300 { c + m[1] / m[0] } else { *xi };
                let (lo, hi) = (e[i], e[i + 1]);
                let pad = if lo.is_finite() && hi.is_finite() { 1e-3 * (hi - lo) } else { 0.0 };
                let (lo, hi) = (if lo.is_finite() { lo + pad } else { f64::MIN }, if hi.is_finite() { hi - pad } else { f64::MAX });
                if target.is_finite() { target.clamp(lo, hi) } else { *xi }
            })
            .collect();
        // empty cells keep their point, which may then sit out of order
        if !is_strictly_increasing(&next) {
            next.sort_by(f64::total_cmp);
            next.dedup();
            if next.len() < x.len() {
                return Err(Error::OrderingViolated { iteration: it, halvings: 0 });
            }
        }
        let moved = x.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = next;
        diag.iterations = it + 1;
        diag.distortion_history.push(distortion_unchecked(model, &x));
        if moved < tol {
            break;
        }
    }
    diag.residual = max_abs(&residual_unchecked(model, &x));
    let weights = cell_moments(model, &x).iter().map(|m| m[0]).collect();
    let n = x.len();
    Ok(QuantGrid { points: x, weights, units, meta: GridMeta { n, m: None, date: None }, diagnostics: diag })
}

/// Damped Newton from `init`; if it fails, Lloyd sweeps from `init` followed
/// by a Newton polish. The Lloyd grid is returned when the polish fails too,
/// with its residual in the diagnostics.
pub fn solve_stationary<C: CellModel + ?Sized>(
    model: &C,
    init: &[f64],
    cfg: &NewtonConfig,
    units: Units,
) -> Result<QuantGrid> {
    match newton_solve(model, init, cfg, units) {
        Ok(g) => Ok(g),
        Err(first) => {
            let Ok(coarse) = lloyd(model, init, 1e-3 * cfg.tol, LLOYD_MAX_ITER, units) else { return Err(first) };
            Ok(newton_solve(model, &coarse.points, cfg, units).unwrap_or(coarse))
        }
    }
}

/// Sweep cap for the Lloyd fallback.
pub const LLOYD_MAX_ITER: usize = 20_000;

/// Standard-normal quantiles `Φ⁻¹((i − ½)/N)` mapped to `mean + sd·z`.
pub fn normal_quantile_grid(mean: f64, sd: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| mean + sd * norm_inv((i as f64 + 0.5) / n as f64)).collect()
}

/// Initial grid from the quantiles of the moment-matched normal law.
pub fn moment_matched_grid<C: CellModel + ?Sized>(model: &C, n: usize) -> Vec<f64> {
    let (mean, var) = model.mean_variance();
    normal_quantile_grid(mean, var.max(0.0).sqrt(), n)
}
