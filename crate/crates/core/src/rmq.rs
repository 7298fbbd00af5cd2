//! Recursive marginal quantization of the Euler scheme for `(V, S)`.
//!
//! Given product-grid atoms `(vⁱ, sʲ)` at `t_k` with joint weights, one Euler
//! step is conditionally Gaussian. The next marginals are Gaussian mixtures,
//! quantized with the stationary Newton solver; transition probabilities are
//! bivariate Gaussian masses of the next product cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_params, GaussianWeight, SvjParams};
use crate::par;
use crate::quadrature::gauss_legendre;
use crate::quantizer::{self, GaussianMixture, GridMeta, NewtonConfig, QuantGrid, Units};
use crate::special::{norm_cdf, norm_inv};

/// Form of the price drift in one Euler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftForm {
    /// `s (1 + (r − δ)Δ)`, the Euler step of `dS/S`.
    #[default]
    Proportional,
    /// `s + (r − δ)Δ`.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerConfig {
    /// Number of steps `L`.
    pub steps: usize,
    pub maturity: f64,
    pub n_v: usize,
    pub n_s: usize,
    pub drift: DriftForm,
    pub newton: NewtonConfig,
    /// Gauss–Legendre panels per variance cell for rectangle probabilities.
    pub panels: usize,
}

impl EulerConfig {
    pub fn new(steps: usize, maturity: f64, n_v: usize, n_s: usize) -> Self {
        EulerConfig {
            steps,
            maturity,
            n_v,
            n_s,
            drift: DriftForm::Proportional,
            newton: NewtonConfig::default(),
            panels: 4,
        }
    }

    pub fn delta(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.n_v == 0 || self.n_s == 0 || self.panels == 0 {
            return Err(Error::InvalidInput("L, N_V, N_S and panels must be at least 1".into()));
        }
        if !(self.maturity > 0.0) || !self.maturity.is_finite() {
            return Err(Error::InvalidInput(format!("maturity must be positive, got {}", self.maturity)));
        }
        Ok(())
    }
}

/// Conditional law of one Euler step: mean `(v, s)` and covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateGaussian {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl BivariateGaussian {
    pub fn sd_v(&self) -> f64 {
        self.cov[0][0].max(0.0).sqrt()
    }

    pub fn sd_s(&self) -> f64 {
        self.cov[1][1].max(0.0).sqrt()
    }
}

/// Law of `(Ṽ_{k+1}, S̃_{k+1})` given `(v, s)` at `t_k`. `v` is clamped to
/// `[v_min, v_max]` inside `Q` and the price variance; the linear drift uses
/// it as given.
pub fn euler_conditional_law(p: &SvjParams, delta: f64, state: (f64, f64), drift: DriftForm) -> Result<BivariateGaussian> {
    let (v_raw, s) = state;
    let v = p.clamp_variance(v_raw);
    if !(s > 0.0) || !s.is_finite() || !v.is_finite() {
        return Err(Error::InvalidInput(format!("Euler state must have finite v and s > 0, got ({}, {s})", state.0)));
    }
    let q = p.q_of_v(v).max(0.0);
    let mean_s = match drift {
        DriftForm::Proportional => s * (1.0 + (p.r - p.delta) * delta),
        DriftForm::Additive => s + (p.r - p.delta) * delta,
    };
    let var_s = delta * s * s * v;
    if !(var_s > 0.0) {
        return Err(Error::Numerical(format!("non-positive price variance at state ({v}, {s})")));
    }
    let cov_vs = delta * p.rho * p.sigma * s * q;
    Ok(BivariateGaussian {
        mean: [v_raw + p.kappa * (p.theta - v_raw) * delta, mean_s],
        cov: [[delta * p.sigma * p.sigma * q, cov_vs], [cov_vs, var_s]],
    })
}

/// Which coordinate a marginal mixture describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    V,
    S,
}

/// Transition probabilities from the atoms at `t_k` to those at `t_{k+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub src: (usize, usize),
    pub dst: (usize, usize),
    /// Row `(i, j)` starts at `(i·src.1 + j)·dst.0·dst.1`; inside a row the
    /// target `(i', j')` sits at `i'·dst.1 + j'`.
    pub probs: Vec<f64>,
    /// Largest `|Σ row − 1|` before renormalization.
    pub max_row_defect: f64,
}

impl Transition {
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let w = self.dst.0 * self.dst.1;
        let start = (i * self.src.1 + j) * w;
        &self.probs[start..start + w]
    }
}

#[derive(Debug, Clone)]
pub struct RmqLattice {
    pub params: SvjParams,
    pub config: EulerConfig,
    pub v_grids: Vec<QuantGrid>,
    pub s_grids: Vec<QuantGrid>,
    /// `joint_weights[k][i·n_s(k) + j] = P(V̂_k = vⁱ, Ŝ_k = sʲ)`.
    pub joint_weights: Vec<Vec<f64>>,
    pub transitions: Vec<Transition>,
    /// Per date, largest gap between the mixture cell masses from the
    /// quantizer and the marginals of the joint weights.
    pub marginal_defects: Vec<f64>,
}

impl RmqLattice {
    pub fn dims(&self, k: usize) -> (usize, usize) {
        (self.v_grids[k].len(), self.s_grids[k].len())
    }

    pub fn joint(&self, k: usize, i: usize, j: usize) -> f64 {
        self.joint_weights[k][i * self.s_grids[k].len() + j]
    }

    pub fn steps(&self) -> usize {
        self.config.steps
    }

    /// Marginal of the joint weights over the variance index.
    pub fn s_marginal(&self, k: usize) -> Vec<f64> {
        let (nv, ns) = self.dims(k);
        (0..ns).map(|j| (0..nv).map(|i| self.joint(k, i, j)).sum()).collect()
    }

    pub fn v_marginal(&self, k: usize) -> Vec<f64> {
        let (nv, ns) = self.dims(k);
        (0..nv).map(|i| (0..ns).map(|j| self.joint(k, i, j)).sum()).collect()
    }
}

/// Mixture representation of the `t_{k+1}` marginal of `which`.
pub fn marginal_mixture(
    v_grid: &QuantGrid,
    s_grid: &QuantGrid,
    joint: &[f64],
    which: Coordinate,
    p: &SvjParams,
    delta: f64,
    drift: DriftForm,
) -> Result<GaussianMixture> {
    match which {
        Coordinate::V => {
            let mut means = Vec::with_capacity(v_grid.len());
            let mut sds = Vec::with_capacity(v_grid.len());
            for &v in &v_grid.points {
                means.push(v + p.kappa * (p.theta - v) * delta);
                let v = p.clamp_variance(v);
                sds.push((delta * p.sigma * p.sigma * p.q_of_v(v).max(0.0)).sqrt());
            }
            GaussianMixture::new(means, sds, v_grid.weights.clone())
        }
        Coordinate::S => {
            let ns = s_grid.len();
            let mut means = Vec::with_capacity(v_grid.len() * ns);
            let mut sds = Vec::with_capacity(v_grid.len() * ns);
            let mut weights = Vec::with_capacity(v_grid.len() * ns);
            for (i, &v) in v_grid.points.iter().enumerate() {
                for (j, &s) in s_grid.points.iter().enumerate() {
                    let law = euler_conditional_law(p, delta, (v, s), drift)?;
                    means.push(law.mean[1]);
                    sds.push(law.sd_s());
                    weights.push(joint[i * ns + j]);
                }
            }
            GaussianMixture::new(means, sds, weights)
        }
    }
}

/// Stationary grid of a mixture, tagged with its units.
pub fn rmq_newton_step(mixture: &GaussianMixture, init: &[f64], cfg: &NewtonConfig, units: Units) -> Result<QuantGrid> {
    mixture.quantize(init, cfg, units)
}

fn initial_guess(mixture: &GaussianMixture, prev: &QuantGrid, n: usize, bounds: Option<(f64, f64)>) -> Vec<f64> {
    let clamp = |x: f64| bounds.map_or(x, |(lo, hi)| x.clamp(lo, hi));
    if prev.len() == n {
        let shift = mixture.mean() - prev.mean();
        let warm: Vec<f64> = prev.points.iter().map(|x| clamp(x + shift)).collect();
        if warm.windows(2).all(|w| w[1] > w[0]) {
            return warm;
        }
    }
    let mut g = quantizer::moment_matched_grid(mixture, n);
    if let Some((lo, hi)) = bounds {
        // spread points that would pile up on a bound
        let span = (hi - lo) / (n as f64 + 1.0);
        for (i, x) in g.iter_mut().enumerate() {
            *x = x.clamp(lo + span * 1e-3 * (i as f64 + 1.0), hi - span * 1e-3 * (n - i) as f64);
        }
        for i in 1..n {
            if g[i] <= g[i - 1] {
                g[i] = g[i - 1] + span * 1e-3;
            }
        }
    }
    g
}

fn quantize_marginal(
    mixture: &GaussianMixture,
    prev: &QuantGrid,
    n: usize,
    cfg: &NewtonConfig,
    units: Units,
) -> Result<QuantGrid> {
    let init = initial_guess(mixture, prev, n, cfg.bounds);
    match mixture.quantize(&init, cfg, units) {
        Ok(g) => Ok(g),
        Err(first) => {
            // retry from the moment-matched start, then from a Lloyd grid;
            // the Lloyd grid itself is the last resort
            let fresh = QuantGrid::dirac(mixture.mean(), units);
            let init = initial_guess(mixture, &fresh, n, cfg.bounds);
            if let Ok(g) = mixture.quantize(&init, cfg, units) {
                return Ok(g);
            }
            let coarse = quantizer::lloyd(mixture, &init, 1e-3 * cfg.tol, quantizer::LLOYD_MAX_ITER, units).map_err(|_| first)?;
            Ok(mixture.quantize(&coarse.points, cfg, units).unwrap_or(coarse))
        }
    }
}

/// Moves points that left `[v_min, v_max]` onto the nearest bound and drops
/// the duplicates this creates. Weights are recomputed from the joint law
/// afterwards.
fn project_variance_grid(g: &mut QuantGrid, p: &SvjParams) -> bool {
    let mut pts: Vec<f64> = g.points.iter().map(|v| p.clamp_variance(*v)).collect();
    pts.dedup();
    let moved = pts != g.points;
    g.points = pts;
    moved
}

/// `P(V ∈ [a, b], S ∈ [c, d])` for all target cells, one source atom.
///
/// The outer variance integral runs in probability space `u = Φ((v − m_v)/s_v)`
/// with composite Gauss–Legendre panels; given `v` the price is Gaussian with
/// mean `m_s + (c_vs/s_v²)(v − m_v)` and variance `s_s² − c_vs²/s_v²`.
fn rectangle_row(
    law: &BivariateGaussian,
    v_edges: &[f64],
    s_edges: &[f64],
    gl: &(Vec<f64>, Vec<f64>),
    panels: usize,
    out: &mut [f64],
) {
    let nv = v_edges.len() - 1;
    let ns = s_edges.len() - 1;
    let (mv, ms) = (law.mean[0], law.mean[1]);
    let sv = law.sd_v();
    out.iter_mut().for_each(|x| *x = 0.0);
    let add_s_masses = |mean: f64, sd: f64, scale: f64, row: &mut [f64]| {
        let mut prev = 0.0;
        for j in 0..ns {
            let c = if j + 1 == ns { 1.0 } else { norm_cdf((s_edges[j + 1] - mean) / sd) };
            row[j] += scale * (c - prev);
            prev = c;
        }
    };
    if sv == 0.0 {
        let i = v_edges[1..nv].partition_point(|e| *e <= mv);
        add_s_masses(ms, law.sd_s(), 1.0, &mut out[i * ns..(i + 1) * ns]);
        return;
    }
    let beta = law.cov[0][1] / (sv * sv);
    let sd_cond = (law.cov[1][1] - law.cov[0][1] * beta).max(0.0).sqrt();
    for i in 0..nv {
        let ua = if i == 0 { 0.0 } else { norm_cdf((v_edges[i] - mv) / sv) };
        let ub = if i + 1 == nv { 1.0 } else { norm_cdf((v_edges[i + 1] - mv) / sv) };
        if ub <= ua {
            continue;
        }
        let row = &mut out[i * ns..(i + 1) * ns];
        if sd_cond == 0.0 || beta == 0.0 {
            // no dependence on v inside the cell
            add_s_masses(ms, if sd_cond > 0.0 { sd_cond } else { law.sd_s() }, ub - ua, row);
            continue;
        }
        let h = (ub - ua) / panels as f64;
        for k in 0..panels {
            let lo = ua + h * k as f64;
            for (x, w) in gl.0.iter().zip(&gl.1) {
                let u = lo + 0.5 * h * (x + 1.0);
                let v = mv + sv * norm_inv(u);
                add_s_masses(ms + beta * (v - mv), sd_cond, 0.5 * h * w, row);
            }
        }
    }
}

/// Joint weights at `t_{k+1}` and the transitions `t_k → t_{k+1}`.
#[allow(clippy::too_many_arguments)]
pub fn joint_and_transitions(
    v_from: &QuantGrid,
    s_from: &QuantGrid,
    joint_from: &[f64],
    v_to: &QuantGrid,
    s_to: &QuantGrid,
    p: &SvjParams,
    delta: f64,
    drift: DriftForm,
    panels: usize,
) -> Result<(Vec<f64>, Transition)> {
    let (nv, ns) = (v_from.len(), s_from.len());
    let (mv, ms) = (v_to.len(), s_to.len());
    let width = mv * ms;
    let v_edges = v_to.edges();
    let s_edges = s_to.edges();
    let gl = gauss_legendre(16);
    let rows: Vec<Result<(Vec<f64>, f64)>> = par::map_indexed(nv * ns, |idx| {
        let (i, j) = (idx / ns, idx % ns);
        let law = euler_conditional_law(p, delta, (v_from.points[i], s_from.points[j]), drift)?;
        let mut row = vec![0.0; width];
        rectangle_row(&law, &v_edges, &s_edges, &gl, panels, &mut row);
        let total: f64 = row.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::Numerical(format!("rectangle probabilities failed for atom ({i}, {j})")));
        }
        row.iter_mut().for_each(|x| *x /= total);
        Ok((row, (total - 1.0).abs()))
    });
    let mut probs = Vec::with_capacity(nv * ns * width);
    let mut defect: f64 = 0.0;
    let mut joint = vec![0.0; width];
    for (idx, r) in rows.into_iter().enumerate() {
        let (row, d) = r?;
        defect = defect.max(d);
        let w = joint_from[idx];
        for (acc, x) in joint.iter_mut().zip(&row) {
            *acc += w * x;
        }
        probs.extend_from_slice(&row);
    }
    Ok((joint, Transition { src: (nv, ns), dst: (mv, ms), probs, max_row_defect: defect }))
}

/// Builds the full lattice over `L` steps.
pub fn build_lattice(p: &SvjParams, cfg: &EulerConfig) -> Result<RmqLattice> {
    cfg.validate()?;
    let w = GaussianWeight::for_maturity(p, cfg.maturity);
    validate_params(p, cfg.maturity, &w).into_result()?;
    let delta = cfg.delta();
    let mut v_grids = vec![QuantGrid::dirac(p.v0, Units::Variance)];
    let mut s_grids = vec![QuantGrid::dirac(p.s0, Units::Price)];
    v_grids[0].meta.date = Some(0.0);
    s_grids[0].meta.date = Some(0.0);
    let mut joint_weights = vec![vec![1.0]];
    let mut transitions = Vec::with_capacity(cfg.steps);
    let mut marginal_defects = vec![0.0];
    let v_cfg = NewtonConfig { bounds: None, ..cfg.newton };
    let s_cfg = NewtonConfig { bounds: None, ..cfg.newton };

    for k in 0..cfg.steps {
        let step = |e: Error| Error::Lattice { step: k, source: Box::new(e) };
        let (vg, sg, jw) = (&v_grids[k], &s_grids[k], &joint_weights[k]);
        let vmix = marginal_mixture(vg, sg, jw, Coordinate::V, p, delta, cfg.drift).map_err(step)?;
        let smix = marginal_mixture(vg, sg, jw, Coordinate::S, p, delta, cfg.drift).map_err(step)?;
        let mut v_next = quantize_marginal(&vmix, vg, cfg.n_v, &v_cfg, Units::Variance).map_err(step)?;
        if project_variance_grid(&mut v_next, p) {
            v_next.weights = quantizer::cell_weights(&vmix, &v_next.points).map_err(step)?;
        }
        let mut s_next = quantize_marginal(&smix, sg, cfg.n_s, &s_cfg, Units::Price).map_err(step)?;
        let (joint, trans) =
            joint_and_transitions(vg, sg, jw, &v_next, &s_next, p, delta, cfg.drift, cfg.panels).map_err(step)?;

        // grid weights are the marginals of the joint law; the quantizer's
        // mixture masses agree up to the rectangle quadrature error
        let ns = s_next.len();
        let v_marg: Vec<f64> = (0..v_next.len()).map(|i| joint[i * ns..(i + 1) * ns].iter().sum()).collect();
        let s_marg: Vec<f64> = (0..ns).map(|j| (0..v_next.len()).map(|i| joint[i * ns + j]).sum()).collect();
        let defect = v_next
            .weights
            .iter()
            .zip(&v_marg)
            .chain(s_next.weights.iter().zip(&s_marg))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v_next.weights = v_marg;
        s_next.weights = s_marg;
        let t = delta * (k + 1) as f64;
        v_next.meta = GridMeta { n: cfg.n_v, m: None, date: Some(t) };
        s_next.meta = GridMeta { n: cfg.n_s, m: None, date: Some(t) };

        v_grids.push(v_next);
        s_grids.push(s_next);
        joint_weights.push(joint);
        transitions.push(trans);
        marginal_defects.push(defect);
    }
    Ok(RmqLattice { params: *p, config: *cfg, v_grids, s_grids, joint_weights, transitions, marginal_defects })
}
