//! Option pricing on quantization grids and lattices, with Monte Carlo and
//! least-squares Monte Carlo references.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{price_european_series, TruncatedDensity};
use crate::model::{validate_params, GaussianWeight, SvjParams};
use crate::par;
use crate::quantizer::{QuantGrid, Units};
use crate::rmq::{DriftForm, RmqLattice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    #[inline]
    pub fn payoff(self, s: f64, strike: f64) -> f64 {
        match self {
            OptionKind::Call => (s - strike).max(0.0),
            OptionKind::Put => (strike - s).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exercise {
    European,
    Bermudan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    pub exercise: Exercise,
    pub strike: f64,
    pub maturity: f64,
    /// Exercise times in years; the last one is the maturity. Empty for
    /// European options.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exercise_dates: Vec<f64>,
}

impl OptionSpec {
    pub fn european(kind: OptionKind, strike: f64, maturity: f64) -> Self {
        OptionSpec { kind, exercise: Exercise::European, strike, maturity, exercise_dates: Vec::new() }
    }

    pub fn bermudan(kind: OptionKind, strike: f64, maturity: f64, exercise_dates: Vec<f64>) -> Self {
        OptionSpec { kind, exercise: Exercise::Bermudan, strike, maturity, exercise_dates }
    }

    /// Bermudan option exercisable at `t_k = kT/L`, `k = 1..=L`.
    pub fn bermudan_uniform(kind: OptionKind, strike: f64, maturity: f64, dates: usize) -> Self {
        let dates = (1..=dates).map(|k| maturity * k as f64 / dates as f64).collect();
        Self::bermudan(kind, strike, maturity, dates)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(Error::InvalidInput(format!("strike must be positive, got {}", self.strike)));
        }
        if !(self.maturity > 0.0) || !self.maturity.is_finite() {
            return Err(Error::InvalidInput(format!("maturity must be positive, got {}", self.maturity)));
        }
        if self.exercise == Exercise::Bermudan {
            let d = &self.exercise_dates;
            if d.is_empty() {
                return Err(Error::InvalidInput("bermudan option needs exercise dates".into()));
            }
            if d.iter().any(|t| !(*t > 0.0)) || d.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput("exercise dates must be positive and increasing".into()));
            }
            if !close(*d.last().unwrap(), self.maturity) {
                return Err(Error::InvalidInput("last exercise date must equal the maturity".into()));
            }
        }
        Ok(())
    }

    /// Exercise times, the maturity alone for European options.
    pub fn dates(&self) -> Vec<f64> {
        match self.exercise {
            Exercise::European => vec![self.maturity],
            Exercise::Bermudan => self.exercise_dates.clone(),
        }
    }

    pub fn payoff(&self, s: f64) -> f64 {
        self.kind.payoff(s, self.strike)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Series,
    PolyQuant,
    Rmq,
    Mc,
    LongstaffSchwartz,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid_sizes: Vec<usize>,
    /// Stationarity residual or lattice consistency defect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    /// 95% half-width, `1.96·SE`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingReport {
    pub price: f64,
    pub method: Method,
    pub spec: OptionSpec,
    pub diagnostics: ReportDiagnostics,
}

impl PricingReport {
    pub fn std_error(&self) -> Option<f64> {
        self.diagnostics.std_error
    }
}

fn require_european(spec: &OptionSpec) -> Result<()> {
    spec.validate()?;
    if spec.exercise != Exercise::European {
        return Err(Error::InvalidInput("expected a european option".into()));
    }
    Ok(())
}

/// `e^{−rT} Σ payoff(xᵢ) pᵢ` on a price grid. Log-price grids must be mapped
/// with [`QuantGrid::exp_mapped`] first. Grids carrying a truncation order are
/// reported as polynomial quantization, the others as RMQ.
pub fn price_european_grid(grid: &QuantGrid, spec: &OptionSpec, r: f64) -> Result<PricingReport> {
    require_european(spec)?;
    match grid.units {
        Units::Price => {}
        Units::LogPrice => {
            return Err(Error::InvalidInput("log-price grid: exponentiate with exp_mapped before pricing".into()))
        }
        Units::Variance => return Err(Error::InvalidInput("cannot price a payoff on a variance grid".into())),
    }
    let price = (-r * spec.maturity).exp() * grid.expectation(|s| spec.payoff(s));
    let method = if grid.meta.m.is_some() { Method::PolyQuant } else { Method::Rmq };
    Ok(PricingReport {
        price,
        method,
        spec: spec.clone(),
        diagnostics: ReportDiagnostics {
            grid_sizes: vec![grid.len()],
            residual: Some(grid.diagnostics.residual),
            ..Default::default()
        },
    })
}

/// European price from the truncated Hermite series of the log-price density.
pub fn price_series(d: &TruncatedDensity, spec: &OptionSpec, r: f64) -> Result<PricingReport> {
    require_european(spec)?;
    let price = price_european_series(d, spec.strike, spec.maturity, r, spec.kind)?;
    Ok(PricingReport {
        price,
        method: Method::Series,
        spec: spec.clone(),
        diagnostics: ReportDiagnostics { grid_sizes: vec![d.order()], ..Default::default() },
    })
}

/// Lattice step index of each exercise date.
fn lattice_exercise_steps(lattice: &RmqLattice, spec: &OptionSpec) -> Result<Vec<bool>> {
    let steps = lattice.steps();
    let delta = lattice.config.delta();
    if !close(spec.maturity, lattice.config.maturity) {
        return Err(Error::InvalidInput(format!(
            "option maturity {} differs from lattice horizon {}",
            spec.maturity, lattice.config.maturity
        )));
    }
    let mut exercise = vec![false; steps + 1];
    for t in spec.dates() {
        let k = (t / delta).round();
        if !close(k * delta, t) || k < 1.0 || k as usize > steps {
            return Err(Error::InvalidInput(format!("exercise date {t} is not a lattice date")));
        }
        exercise[k as usize] = true;
    }
    Ok(exercise)
}

/// Backward induction on the RMQ lattice. European specs are priced as a
/// Bermudan option with the maturity as the only exercise date.
pub fn price_bermudan(lattice: &RmqLattice, spec: &OptionSpec, r: f64) -> Result<PricingReport> {
    spec.validate()?;
    let steps = lattice.steps();
    if lattice.transitions.len() != steps || lattice.joint_weights.len() != steps + 1 {
        return Err(Error::InvalidInput("lattice is missing transitions".into()));
    }
    let exercise = lattice_exercise_steps(lattice, spec)?;
    let disc = (-r * lattice.config.delta()).exp();

    let (nv, ns) = lattice.dims(steps);
    let s_last = &lattice.s_grids[steps].points;
    let mut value: Vec<f64> = (0..nv * ns).map(|idx| spec.payoff(s_last[idx % ns])).collect();
    for k in (0..steps).rev() {
        let (nv, ns) = lattice.dims(k);
        let tr = &lattice.transitions[k];
        let s_k = &lattice.s_grids[k].points;
        let next = &value;
        value = par::map_indexed(nv * ns, |idx| {
            let (i, j) = (idx / ns, idx % ns);
            let cont = disc * tr.row(i, j).iter().zip(next).map(|(p, u)| p * u).sum::<f64>();
            if exercise[k] {
                cont.max(spec.payoff(s_k[j]))
            } else {
                cont
            }
        });
    }
    let price = lattice.joint_weights[0].iter().zip(&value).map(|(w, u)| w * u).sum();
    let defect = lattice.transitions.iter().map(|t| t.max_row_defect).fold(0.0, f64::max);
    let grid_sizes = vec![lattice.config.n_v, lattice.config.n_s, steps];
    Ok(PricingReport {
        price,
        method: Method::Rmq,
        spec: spec.clone(),
        diagnostics: ReportDiagnostics {
            grid_sizes,
            residual: Some(lattice.marginal_defects.iter().copied().fold(defect, f64::max)),
            ..Default::default()
        },
    })
}

/// Euler Monte Carlo settings shared by the simulation-based pricers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub drift: DriftForm,
}

/// Paths per RNG stream. Fixed so results do not depend on the thread count.
pub const MC_CHUNK: usize = 4096;

impl McConfig {
    pub fn new(paths: usize, steps: usize, seed: u64) -> Self {
        McConfig { paths, steps, seed, drift: DriftForm::Proportional }
    }

    fn validate(&self) -> Result<()> {
        if self.paths < 2 || self.steps == 0 {
            return Err(Error::InvalidInput("Monte Carlo needs at least 2 paths and 1 step".into()));
        }
        Ok(())
    }
}

fn check_params(p: &SvjParams, maturity: f64) -> Result<()> {
    validate_params(p, maturity, &GaussianWeight::for_maturity(p, maturity)).into_result().map(|_| ())
}

/// One Euler step of `(V, S)`. The variance is clamped to `[v_min, v_max]`
/// where `Q` and the square roots are evaluated; the linear drift sees the
/// raw state. A price that crosses zero is absorbed there.
#[inline]
fn euler_step(p: &SvjParams, dt: f64, sqdt: f64, drift: DriftForm, v_raw: f64, s: f64, z1: f64, z2: f64) -> (f64, f64) {
    let v = p.clamp_variance(v_raw);
    let q = p.q_of_v(v).max(0.0);
    let sq = q.sqrt();
    let v_next = v_raw + p.kappa * (p.theta - v_raw) * dt + p.sigma * sq * sqdt * z1;
    let mean_s = match drift {
        DriftForm::Proportional => s * (1.0 + (p.r - p.delta) * dt),
        DriftForm::Additive => s + (p.r - p.delta) * dt,
    };
    let perp = (v - p.rho * p.rho * q).max(0.0).sqrt();
    let s_next = mean_s + s * sqdt * (p.rho * sq * z1 + perp * z2);
    (v_next, s_next.max(0.0))
}

/// Simulates chunk `c` and calls `visit(path, step, v, s)` after every step.
fn simulate_chunk(
    p: &SvjParams,
    maturity: f64,
    cfg: &McConfig,
    c: usize,
    range: std::ops::Range<usize>,
    mut visit: impl FnMut(usize, usize, f64, f64),
) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(c as u64);
    let dt = maturity / cfg.steps as f64;
    let sqdt = dt.sqrt();
    for path in range {
        let (mut v, mut s) = (p.v0, p.s0);
        for step in 1..=cfg.steps {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            (v, s) = euler_step(p, dt, sqdt, cfg.drift, v, s, z1, z2);
            visit(path, step, v, s);
        }
    }
}

/// Running mean and centered sum of squares.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Welford) -> Welford {
        if o.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Welford { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }

    fn std_error(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Sample mean and standard error of a Monte Carlo functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Estimates `E[f_m(V_T, S_T)]` for `m = 0..outputs` from one set of paths.
pub fn mc_terminal_expectations<F>(p: &SvjParams, maturity: f64, cfg: &McConfig, outputs: usize, f: F) -> Result<Vec<Estimate>>
where
    F: Fn(f64, f64, &mut [f64]) + Sync + Send,
{
    cfg.validate()?;
    check_params(p, maturity)?;
    let ranges = par::chunk_ranges(cfg.paths, MC_CHUNK);
    let per_chunk: Vec<Vec<Welford>> = par::map_indexed(ranges.len(), |c| {
        let mut acc = vec![Welford::default(); outputs];
        let mut buf = vec![0.0; outputs];
        simulate_chunk(p, maturity, cfg, c, ranges[c].clone(), |_, step, v, s| {
            if step == cfg.steps {
                f(v, s, &mut buf);
                acc.iter_mut().zip(&buf).for_each(|(a, x)| a.push(*x));
            }
        });
        acc
    });
    let total = per_chunk.into_iter().fold(vec![Welford::default(); outputs], |acc, chunk| {
        acc.into_iter().zip(chunk).map(|(a, b)| a.merge(b)).collect()
    });
    Ok(total.iter().map(|w| Estimate { mean: w.mean, std_error: w.std_error() }).collect())
}

fn mc_report(price: Estimate, spec: &OptionSpec, cfg: &McConfig, method: Method, notes: Vec<String>) -> PricingReport {
    PricingReport {
        price: price.mean,
        method,
        spec: spec.clone(),
        diagnostics: ReportDiagnostics {
            grid_sizes: vec![cfg.steps],
            std_error: Some(price.std_error),
            ci_half_width: Some(1.96 * price.std_error),
            paths: Some(cfg.paths),
            notes,
            ..Default::default()
        },
    }
}

/// Euler Monte Carlo price of a European option.
pub fn mc_european(p: &SvjParams, spec: &OptionSpec, paths: usize, steps: usize, seed: u64) -> Result<PricingReport> {
    let cfg = McConfig::new(paths, steps, seed);
    Ok(mc_european_ladder(p, std::slice::from_ref(spec), &cfg)?.remove(0))
}

/// Prices several European options with the same maturity on one path set.
pub fn mc_european_ladder(p: &SvjParams, specs: &[OptionSpec], cfg: &McConfig) -> Result<Vec<PricingReport>> {
    let Some(first) = specs.first() else { return Ok(Vec::new()) };
    for s in specs {
        require_european(s)?;
        if !close(s.maturity, first.maturity) {
            return Err(Error::InvalidInput("ladder options must share one maturity".into()));
        }
    }
    let disc = (-p.r * first.maturity).exp();
    let est = mc_terminal_expectations(p, first.maturity, cfg, specs.len(), |_, s, out| {
        for (o, spec) in out.iter_mut().zip(specs) {
            *o = disc * spec.payoff(s);
        }
    })?;
    Ok(est.into_iter().zip(specs).map(|(e, s)| mc_report(e, s, cfg, Method::Mc, Vec::new())).collect())
}

/// Monte Carlo estimates of `E[X_T]`, `E[X_T²]` and `E[V_T]` with
/// `X = ln S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub log_price: Estimate,
    pub log_price_sq: Estimate,
    pub variance: Estimate,
}

pub fn mc_moments(p: &SvjParams, maturity: f64, cfg: &McConfig) -> Result<MomentEstimates> {
    let e = mc_terminal_expectations(p, maturity, cfg, 3, |v, s, out| {
        let x = s.ln();
        out[0] = x;
        out[1] = x * x;
        out[2] = v;
    })?;
    Ok(MomentEstimates { log_price: e[0], log_price_sq: e[1], variance: e[2] })
}

/// Polynomial regression basis of total degree at most `degree`, in
/// `(S/K, V)` or in `S/K` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Basis {
    degree: usize,
    with_v: bool,
}

impl Basis {
    fn len(self) -> usize {
        if self.with_v {
            (self.degree + 1) * (self.degree + 2) / 2
        } else {
            self.degree + 1
        }
    }

    /// `1, S, V, S², SV, V², …` or `1, S, S², …`.
    fn row(self, s: f64, v: f64, out: &mut Vec<f64>) {
        out.clear();
        for d in 0..=self.degree {
            if self.with_v {
                for a in (0..=d).rev() {
                    out.push(s.powi(a as i32) * v.powi((d - a) as i32));
                }
            } else {
                out.push(s.powi(d as i32));
            }
        }
    }

    /// Candidates from richest to poorest.
    fn fallbacks(degree: usize) -> impl Iterator<Item = Basis> {
        (0..=degree).rev().flat_map(|d| [Basis { degree: d, with_v: true }, Basis { degree: d, with_v: false }])
    }
}

impl std::fmt::Display for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "degree {} in {}", self.degree, if self.with_v { "(S, V)" } else { "S" })
    }
}

/// Least-squares fit of `y`, falling back to poorer bases while the normal
/// matrix is rank deficient.
fn regress(xs: &[(f64, f64)], ys: &[f64], degree: usize) -> (Basis, Vec<f64>) {
    let mut row = Vec::new();
    for basis in Basis::fallbacks(degree) {
        let m = basis.len();
        if xs.len() < m {
            continue;
        }
        let mut ata = DMatrix::<f64>::zeros(m, m);
        let mut atb = DVector::<f64>::zeros(m);
        for (&(s, v), &y) in xs.iter().zip(ys) {
            basis.row(s, v, &mut row);
            for a in 0..m {
                atb[a] += row[a] * y;
                for b in 0..=a {
                    ata[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                ata[(b, a)] = ata[(a, b)];
            }
        }
        let svd = ata.svd(true, true);
        let smax = svd.singular_values.max();
        if svd.rank(1e-12 * smax) < m {
            continue;
        }
        if let Ok(beta) = svd.solve(&atb, 0.0) {
            return (basis, beta.iter().copied().collect());
        }
    }
    let mean = if ys.is_empty() { 0.0 } else { ys.iter().sum::<f64>() / ys.len() as f64 };
    (Basis { degree: 0, with_v: false }, vec![mean])
}

/// Longstaff–Schwartz price of a Bermudan option: Euler paths, regression
/// of discounted realized cash flows on in-the-money paths.
pub fn ls_bermudan(
    p: &SvjParams,
    spec: &OptionSpec,
    paths: usize,
    steps: usize,
    basis_degree: usize,
    seed: u64,
) -> Result<PricingReport> {
    spec.validate()?;
    let cfg = McConfig::new(paths, steps, seed);
    cfg.validate()?;
    check_params(p, spec.maturity)?;
    let dt = spec.maturity / steps as f64;
    let dates = spec.dates();
    let mut date_of_step = vec![usize::MAX; steps + 1];
    for (d, t) in dates.iter().enumerate() {
        let k = (t / dt).round();
        if !close(k * dt, *t) || k < 1.0 {
            return Err(Error::InvalidInput(format!("exercise date {t} is not on the {steps}-step simulation grid")));
        }
        date_of_step[k as usize] = d;
    }
    let nd = dates.len();

    // states at exercise dates, laid out date-major
    let ranges = par::chunk_ranges(paths, MC_CHUNK);
    let chunks: Vec<Vec<(f64, f64)>> = par::map_indexed(ranges.len(), |c| {
        let r = ranges[c].clone();
        let len = r.len();
        let start = r.start;
        let mut out = vec![(0.0, 0.0); len * nd];
        simulate_chunk(p, spec.maturity, &cfg, c, r, |path, step, v, s| {
            let d = date_of_step[step];
            if d != usize::MAX {
                out[d * len + (path - start)] = (s, p.clamp_variance(v));
            }
        });
        out
    });
    let mut state = vec![(0.0, 0.0); nd * paths];
    for (c, chunk) in chunks.iter().enumerate() {
        let r = &ranges[c];
        for d in 0..nd {
            state[d * paths + r.start..d * paths + r.end].copy_from_slice(&chunk[d * r.len()..(d + 1) * r.len()]);
        }
    }

    let k = spec.strike;
    let mut cash: Vec<f64> = (0..paths).map(|i| spec.payoff(state[(nd - 1) * paths + i].0)).collect();
    let mut when = vec![nd - 1; paths];
    let mut notes = Vec::new();
    for d in (0..nd.saturating_sub(1)).rev() {
        let t = dates[d];
        let at = &state[d * paths..(d + 1) * paths];
        let itm: Vec<usize> = (0..paths).filter(|&i| spec.payoff(at[i].0) > 0.0).collect();
        if itm.is_empty() {
            continue;
        }
        let xs: Vec<(f64, f64)> = itm.iter().map(|&i| (at[i].0 / k, at[i].1)).collect();
        let ys: Vec<f64> = itm.iter().map(|&i| cash[i] * (-p.r * (dates[when[i]] - t)).exp()).collect();
        let (used, beta) = regress(&xs, &ys, basis_degree);
        if used != (Basis { degree: basis_degree, with_v: true }) {
            notes.push(format!("date {t}: regression fell back to {used}"));
        }
        let mut row = Vec::new();
        for (n, &i) in itm.iter().enumerate() {
            used.row(xs[n].0, xs[n].1, &mut row);
            let cont: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let ex = spec.payoff(at[i].0);
            if ex > cont {
                cash[i] = ex;
                when[i] = d;
            }
        }
    }
    let mut w = Welford::default();
    for i in 0..paths {
        w.push(cash[i] * (-p.r * dates[when[i]]).exp());
    }
    let est = Estimate { mean: w.mean, std_error: w.std_error() };
    Ok(mc_report(est, spec, &cfg, Method::LongstaffSchwartz, notes))
}
