//! Stochastic volatility Jacobi model: parameters, validation, the generator
//! on a bivariate monomial basis and polynomial moments through the action
//! of the matrix exponential.
//!
//! The state is `(V, X)` with `X = ln S`:
//!
//! ```text
//! dV = κ(θ − V) dt + σ √Q(V) dW
//! dX = (r − δ − V/2) dt + ρ √Q(V) dW + √(V − ρ² Q(V)) dW⊥
//! Q(v) = (v − v_min)(v_max − v) / (√v_max − √v_min)²
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::hermite_normalized_coefficients;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvjParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub r: f64,
    pub delta: f64,
    pub v0: f64,
    pub s0: f64,
}

impl SvjParams {
    /// The reference parameter set used by the benchmarks and the
    /// acceptance suite.
    pub fn benchmark() -> Self {
        SvjParams {
            kappa: 1.7,
            theta: 0.06,
            sigma: 0.5,
            rho: -0.5,
            v_min: 0.01,
            v_max: 1.0,
            r: 0.04,
            delta: 0.0,
            v0: 0.1,
            s0: 100.0,
        }
    }

    /// Constant-variance limit: `v0 = θ = v_max`, so `Q(V) ≡ 0` and the log
    /// price is Gaussian with variance `v_max·T`.
    pub fn black_scholes_limit(vol: f64, r: f64, delta: f64, s0: f64) -> Self {
        let v = vol * vol;
        SvjParams {
            kappa: 1.0,
            theta: v,
            sigma: 0.5,
            rho: 0.0,
            v_min: v / 4.0,
            v_max: v,
            r,
            delta,
            v0: v,
            s0,
        }
    }

    pub fn x0(&self) -> f64 {
        self.s0.ln()
    }

    /// `Q(v)`; a quadratic vanishing at both variance bounds.
    pub fn q_of_v(&self, v: f64) -> f64 {
        (v - self.v_min) * (self.v_max - v) / self.q_norm()
    }

    fn q_norm(&self) -> f64 {
        let d = self.v_max.sqrt() - self.v_min.sqrt();
        d * d
    }

    /// Clamps a variance into `[v_min, v_max]`.
    pub fn clamp_variance(&self, v: f64) -> f64 {
        v.clamp(self.v_min, self.v_max)
    }

    /// `E[V_t]`, linear mean reversion.
    pub fn mean_variance(&self, t: f64) -> f64 {
        self.theta + (self.v0 - self.theta) * (-self.kappa * t).exp()
    }

    /// `E[X_t] = x₀ + (r − δ)t − ½∫₀ᵗ E[V_u] du`.
    pub fn mean_log_price(&self, t: f64) -> f64 {
        let integrated = if self.kappa.abs() < 1e-12 {
            self.v0 * t
        } else {
            self.theta * t + (self.v0 - self.theta) * (1.0 - (-self.kappa * t).exp()) / self.kappa
        };
        self.x0() + (self.r - self.delta) * t - 0.5 * integrated
    }
}

/// Gaussian weight `w = N(μ_w, σ_w²)` defining the Hermite basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianWeight {
    pub mu_w: f64,
    pub sigma_w: f64,
}

impl GaussianWeight {
    pub fn new(mu_w: f64, sigma_w: f64) -> Self {
        GaussianWeight { mu_w, sigma_w }
    }

    /// `σ_w = √(v_max T / 2) + 10⁻⁴`, `μ_w = E[X_T]`.
    pub fn for_maturity(p: &SvjParams, maturity: f64) -> Self {
        GaussianWeight {
            mu_w: p.mean_log_price(maturity),
            sigma_w: (p.v_max * maturity / 2.0).sqrt() + 1e-4,
        }
    }

    #[inline]
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mu_w) / self.sigma_w
    }

    #[inline]
    pub fn pdf(&self, x: f64) -> f64 {
        crate::special::norm_pdf(self.standardize(x)) / self.sigma_w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Whether `σ²(v_max−v_min)/(√v_max−√v_min)² ≤ 2κ·min{v_max−θ, θ−v_min}`,
    /// i.e. whether the variance stays off the boundary. Informational.
    pub interior_condition: bool,
    pub interior_lhs: f64,
    pub interior_rhs: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn warnings(&self) -> Vec<String> {
        if self.interior_condition {
            vec![]
        } else {
            vec![format!(
                "variance may reach the boundary: {:.6} > {:.6}",
                self.interior_lhs, self.interior_rhs
            )]
        }
    }

    pub fn into_result(self) -> Result<ValidationReport> {
        if self.is_valid() {
            Ok(self)
        } else {
            let msg: Vec<String> = self.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
            Err(Error::InvalidParams(msg.join("; ")))
        }
    }
}

/// Checks the admissibility conditions of the model and the weight.
pub fn validate_params(p: &SvjParams, maturity: f64, w: &GaussianWeight) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| checks.push(Check { name, passed, detail });

    let all = [p.kappa, p.theta, p.sigma, p.rho, p.v_min, p.v_max, p.r, p.delta, p.v0, p.s0, maturity, w.mu_w, w.sigma_w];
    push("finite", all.iter().all(|x| x.is_finite()), "all inputs must be finite".into());
    push("v_min_positive", p.v_min > 0.0, format!("v_min = {} must be > 0", p.v_min));
    push("v_min_below_v_max", p.v_min < p.v_max, format!("v_min = {} must be < v_max = {}", p.v_min, p.v_max));
    push(
        "v0_in_range",
        p.v0 >= p.v_min && p.v0 <= p.v_max,
        format!("v0 = {} must lie in [{}, {}]", p.v0, p.v_min, p.v_max),
    );
    push(
        "theta_in_range",
        p.theta >= p.v_min && p.theta <= p.v_max,
        format!("theta = {} must lie in [{}, {}]", p.theta, p.v_min, p.v_max),
    );
    push("rho_squared_below_one", p.rho * p.rho < 1.0, format!("rho = {} must satisfy rho^2 < 1", p.rho));
    push("kappa_nonnegative", p.kappa >= 0.0, format!("kappa = {}", p.kappa));
    push("sigma_positive", p.sigma > 0.0, format!("sigma = {}", p.sigma));
    push("s0_positive", p.s0 > 0.0, format!("s0 = {}", p.s0));
    push("maturity_positive", maturity > 0.0, format!("T = {maturity}"));
    let floor = p.v_max * maturity / 2.0;
    push(
        "weight_variance",
        w.sigma_w > 0.0 && w.sigma_w * w.sigma_w > floor,
        format!("sigma_w^2 = {} must exceed v_max*T/2 = {}", w.sigma_w * w.sigma_w, floor),
    );

    let d = p.v_max.sqrt() - p.v_min.sqrt();
    let lhs = p.sigma * p.sigma * (p.v_max - p.v_min) / (d * d);
    let rhs = 2.0 * p.kappa * (p.v_max - p.theta).min(p.theta - p.v_min);
    ValidationReport { checks, interior_condition: lhs <= rhs, interior_lhs: lhs, interior_rhs: rhs }
}

/// Graded monomial basis `vⁱ yʲ`, `i + j ≤ N`.
///
/// Degree `k` monomials occupy indices `k(k+1)/2 .. (k+1)(k+2)/2`; within a
/// degree they are ordered by increasing power of `v`, so `(0,k)` comes first
/// and `(k,0)` last.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBasis {
    degree_cap: usize,
    exponents: Vec<(usize, usize)>,
}

impl PolyBasis {
    pub fn new(degree_cap: usize) -> Self {
        let mut exponents = Vec::with_capacity((degree_cap + 1) * (degree_cap + 2) / 2);
        for k in 0..=degree_cap {
            for i in 0..=k {
                exponents.push((i, k - i));
            }
        }
        PolyBasis { degree_cap, exponents }
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exponents
    }

    /// Index of `vⁱ yʲ`, or `None` beyond the degree cap.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        let k = i + j;
        (k <= self.degree_cap).then(|| k * (k + 1) / 2 + i)
    }

    /// Range of indices holding degree-`k` monomials.
    pub fn degree_block(&self, k: usize) -> std::ops::Range<usize> {
        k * (k + 1) / 2..(k + 1) * (k + 2) / 2
    }

    /// Values of all basis monomials at `(v, y)`.
    pub fn evaluate(&self, v: f64, y: f64) -> Vec<f64> {
        let n = self.degree_cap;
        let mut vp = vec![1.0; n + 1];
        let mut yp = vec![1.0; n + 1];
        for k in 1..=n {
            vp[k] = vp[k - 1] * v;
            yp[k] = yp[k - 1] * y;
        }
        self.exponents.iter().map(|&(i, j)| vp[i] * yp[j]).collect()
    }
}

/// Affine change of the log-price coordinate, `y = (x − shift)/scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCoordinate {
    pub shift: f64,
    pub scale: f64,
}

impl LogCoordinate {
    pub const RAW: LogCoordinate = LogCoordinate { shift: 0.0, scale: 1.0 };

    pub fn from_weight(w: &GaussianWeight) -> Self {
        LogCoordinate { shift: w.mu_w, scale: w.sigma_w }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }
}

/// How `exp(tG)` is applied to a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExpMethod {
    /// Truncated Taylor series on sub-steps with `h‖G‖₁ ≤ 4`.
    #[default]
    Taylor,
    /// Adaptive Dormand–Prince 5(4) on `w' = G w`.
    RungeKutta,
}

/// The generator restricted to `Pol_N`, stored by columns: column `c` holds
/// the coordinates of `G(h_c)` on the basis.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    basis: PolyBasis,
    coord: LogCoordinate,
    columns: Vec<Vec<(usize, f64)>>,
}

/// Builds `G f = bᵀ∇f + ½ Tr(a ∇²f)` on the raw monomials `vⁱ xʲ`.
pub fn build_generator(p: &SvjParams, basis: &PolyBasis) -> GeneratorMatrix {
    build_generator_in(p, basis, LogCoordinate::RAW)
}

/// As [`build_generator`], for monomials `vⁱ yʲ` in the shifted and scaled
/// log-price `y = (x − shift)/scale`.
pub fn build_generator_in(p: &SvjParams, basis: &PolyBasis, coord: LogCoordinate) -> GeneratorMatrix {
    let c = p.q_norm();
    let sum = p.v_min + p.v_max;
    let prod = p.v_min * p.v_max;
    let s = coord.scale;
    let mut columns = Vec::with_capacity(basis.dim());
    for &(i, j) in basis.exponents() {
        let (fi, fj) = (i as f64, j as f64);
        let mut col: Vec<(usize, f64)> = Vec::with_capacity(12);
        let mut add = |ii: usize, jj: usize, val: f64| {
            if val != 0.0 {
                let idx = basis.index(ii, jj).expect("generator preserves degree");
                col.push((idx, val));
            }
        };
        if i >= 1 {
            // κ(θ − v) ∂_v
            add(i - 1, j, p.kappa * p.theta * fi);
            add(i, j, -p.kappa * fi);
        }
        if j >= 1 {
            // (r − δ − v/2)/scale ∂_y
            add(i, j - 1, (p.r - p.delta) * fj / s);
            add(i + 1, j - 1, -0.5 * fj / s);
        }
        if i >= 2 {
            // ½σ²Q(v) ∂²_v
            let q = 0.5 * p.sigma * p.sigma * fi * (fi - 1.0) / c;
            add(i, j, -q);
            add(i - 1, j, q * sum);
            add(i - 2, j, -q * prod);
        }
        if i >= 1 && j >= 1 {
            // ρσQ(v)/scale ∂_v∂_y
            let q = p.rho * p.sigma * fi * fj / (c * s);
            add(i + 1, j - 1, -q);
            add(i, j - 1, q * sum);
            add(i - 1, j - 1, -q * prod);
        }
        if j >= 2 {
            // ½ v/scale² ∂²_y
            add(i + 1, j - 2, 0.5 * fj * (fj - 1.0) / (s * s));
        }
        col.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
        for (r, v) in col {
            match merged.last_mut() {
                Some(last) if last.0 == r => last.1 += v,
                _ => merged.push((r, v)),
            }
        }
        columns.push(merged);
    }
    GeneratorMatrix { basis: basis.clone(), coord, columns }
}

impl GeneratorMatrix {
    pub fn basis(&self) -> &PolyBasis {
        &self.basis
    }

    pub fn coordinate(&self) -> LogCoordinate {
        self.coord
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.columns[col].iter().find(|e| e.0 == row).map_or(0.0, |e| e.1)
    }

    /// Sparse column `c`: coordinates of `G` applied to the `c`-th monomial.
    pub fn column(&self, col: usize) -> &[(usize, f64)] {
        &self.columns[col]
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (c, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `out = G x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (c, col) in self.columns.iter().enumerate() {
            let xc = x[c];
            if xc != 0.0 {
                for &(r, v) in col {
                    out[r] += v * xc;
                }
            }
        }
    }

    /// `out = Gᵀ x`.
    pub fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        for (c, col) in self.columns.iter().enumerate() {
            out[c] = col.iter().map(|&(r, v)| v * x[r]).sum();
        }
    }

    /// max(‖G‖₁, ‖G‖_∞), a bound for both `G` and `Gᵀ`.
    pub fn norm_bound(&self) -> f64 {
        let n = self.dim();
        let mut rows = vec![0.0; n];
        let mut col_max: f64 = 0.0;
        for col in &self.columns {
            let s: f64 = col.iter().map(|e| e.1.abs()).sum();
            col_max = col_max.max(s);
            for &(r, v) in col {
                rows[r] += v.abs();
            }
        }
        rows.into_iter().fold(col_max, f64::max)
    }

    /// `exp(tG) x` (or `exp(tGᵀ) x` when `transpose`).
    pub fn exp_action(&self, x: &[f64], t: f64, method: ExpMethod, transpose: bool) -> Result<ExpOutcome> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("horizon must be finite and non-negative, got {t}")));
        }
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!("vector length {} != basis dim {}", x.len(), self.dim())));
        }
        let op = |v: &[f64], out: &mut [f64]| {
            if transpose {
                self.apply_transpose(v, out)
            } else {
                self.apply(v, out)
            }
        };
        if t == 0.0 {
            let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Ok(ExpOutcome { value: x.to_vec(), peak_magnitude: peak, steps: 0 });
        }
        match method {
            ExpMethod::Taylor => taylor_action(op, x, t, self.norm_bound()),
            ExpMethod::RungeKutta => dopri_action(op, x, t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpOutcome {
    pub value: Vec<f64>,
    /// Largest absolute intermediate value encountered.
    pub peak_magnitude: f64,
    pub steps: usize,
}

fn taylor_action<F>(op: F, x: &[f64], t: f64, norm: f64) -> Result<ExpOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    const MAX_TERMS: usize = 80;
    let n = x.len();
    let substeps = ((t * norm / 4.0).ceil() as usize).max(1);
    let h = t / substeps as f64;
    let mut cur = x.to_vec();
    let mut term = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut peak: f64 = 0.0;
    for _ in 0..substeps {
        term.copy_from_slice(&cur);
        let mut settled = 0;
        let mut k = 1;
        loop {
            op(&term, &mut next);
            let f = h / k as f64;
            let mut small = true;
            for c in 0..n {
                term[c] = next[c] * f;
                cur[c] += term[c];
                peak = peak.max(term[c].abs());
                if term[c].abs() > 1e-17 * cur[c].abs() && term[c] != 0.0 {
                    small = false;
                }
            }
            settled = if small { settled + 1 } else { 0 };
            if settled >= 2 {
                break;
            }
            k += 1;
            if k > MAX_TERMS {
                return Err(Error::Numerical("Taylor series for exp(tG) did not settle".into()));
            }
        }
        for v in &cur {
            if !v.is_finite() {
                return Err(Error::Numerical("non-finite value in exp(tG) action".into()));
            }
            peak = peak.max(v.abs());
        }
    }
    Ok(ExpOutcome { value: cur, peak_magnitude: peak, steps: substeps })
}

fn dopri_action<F>(op: F, x: &[f64], t: f64) -> Result<ExpOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    // Dormand–Prince 5(4) tableau
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    const RTOL: f64 = 1e-13;
    let _ = C;
    let n = x.len();
    let mut y = x.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut time = 0.0;
    let mut h = t / 1000.0;
    let mut steps = 0;
    let mut peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    op(&y, &mut k[0]);
    while time < t {
        if steps > 2_000_000 {
            return Err(Error::Numerical("Runge-Kutta step budget exhausted".into()));
        }
        h = h.min(t - time);
        for s in 1..7 {
            for c in 0..n {
                let mut acc = y[c];
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += h * a * k[j][c];
                }
                stage[c] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            op(&stage, &mut tail[0]);
        }
        let mut err: f64 = 0.0;
        for c in 0..n {
            let mut hi = y[c];
            let mut lo = y[c];
            for s in 0..7 {
                hi += h * B5[s] * k[s][c];
                lo += h * B4[s] * k[s][c];
            }
            y5[c] = hi;
            let scale = RTOL * y[c].abs().max(hi.abs()) + 1e-300;
            err = err.max((hi - lo).abs() / scale);
        }
        if err <= 1.0 {
            time += h;
            std::mem::swap(&mut y, &mut y5);
            // FSAL: last stage is the derivative at the new point
            let last = k[6].clone();
            k[0] = last;
            steps += 1;
            peak = y.iter().fold(peak, |m, v| m.max(v.abs()));
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in Runge-Kutta moment integration".into()));
    }
    Ok(ExpOutcome { value: y, peak_magnitude: peak, steps })
}

/// `E[p(V_T, X_T) | V_t = v, X_t = x]` for `horizon = T − t`, with `p_vec`
/// the coordinates of `p` on the generator's basis.
pub fn conditional_moment(g: &GeneratorMatrix, p_vec: &[f64], horizon: f64, state: (f64, f64)) -> Result<f64> {
    conditional_moment_with(g, p_vec, horizon, state, ExpMethod::Taylor)
}

pub fn conditional_moment_with(
    g: &GeneratorMatrix,
    p_vec: &[f64],
    horizon: f64,
    state: (f64, f64),
    method: ExpMethod,
) -> Result<f64> {
    let evolved = g.exp_action(p_vec, horizon, method, false)?;
    let h = g.basis().evaluate(state.0, g.coordinate().apply(state.1));
    Ok(h.iter().zip(&evolved.value).map(|(a, b)| a * b).sum())
}

/// All moments `E[V_T^i Y_T^j]`, `i + j ≤ N`, from `(v0, x0)`, indexed as the basis.
pub fn moment_vector(g: &GeneratorMatrix, p: &SvjParams, horizon: f64, method: ExpMethod) -> Result<ExpOutcome> {
    let h0 = g.basis().evaluate(p.v0, g.coordinate().apply(p.x0()));
    g.exp_action(&h0, horizon, method, true)
}

/// Hermite moments `ℓ_n = E[H_n(X_T)]`, `n = 0..=M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteMoments {
    pub order: usize,
    pub values: Vec<f64>,
    pub weight: GaussianWeight,
    pub maturity: f64,
    /// Largest term `|c_{n,j} E[Y^j]|` of the monomial-to-Hermite change of
    /// basis; large values flag cancellation.
    pub max_intermediate: f64,
    /// Largest monomial moment `|E[V^i Y^j]|` seen by the solver.
    pub max_moment: f64,
}

impl HermiteMoments {
    /// Truncates to a lower order.
    pub fn truncated(&self, order: usize) -> HermiteMoments {
        let order = order.min(self.order);
        HermiteMoments { order, values: self.values[..=order].to_vec(), ..self.clone() }
    }

    /// Mean of the truncated law, `μ_w + σ_w ℓ₁`.
    pub fn mean(&self) -> f64 {
        self.weight.mu_w + self.weight.sigma_w * self.values.get(1).copied().unwrap_or(0.0)
    }

    /// Columns `n,ell_n`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,ell_n\n");
        for (n, v) in self.values.iter().enumerate() {
            s += &format!("{n},{v:.17e}\n");
        }
        s
    }

    /// Variance of the truncated law.
    pub fn variance(&self) -> f64 {
        let l1 = self.values.get(1).copied().unwrap_or(0.0);
        let l2 = self.values.get(2).copied().unwrap_or(0.0);
        let s = self.weight.sigma_w;
        // E[z²] = 1 + √2 ℓ₂ with z = (x − μ_w)/σ_w
        s * s * (1.0 + std::f64::consts::SQRT_2 * l2 - l1 * l1)
    }
}

/// Hermite moments of `X_T` up to order `M`.
pub fn hermite_moments(p: &SvjParams, maturity: f64, w: &GaussianWeight, order: usize) -> Result<HermiteMoments> {
    hermite_moments_with(p, maturity, w, order, ExpMethod::Taylor)
}

/// The `H_n` are expanded in monomials of `y = (x − μ_w)/σ_w` with the
/// normalized three-term recurrence; the moments `E[V^i Y^j]` come from one
/// action of `exp(T Gᵀ)` on the monomial values at the initial state. Since
/// `G` is block triangular by degree, this yields the same numbers as
/// evaluating each degree on its own sub-block.
pub fn hermite_moments_with(
    p: &SvjParams,
    maturity: f64,
    w: &GaussianWeight,
    order: usize,
    method: ExpMethod,
) -> Result<HermiteMoments> {
    validate_params(p, maturity, w).into_result()?;
    let basis = PolyBasis::new(order);
    let g = build_generator_in(p, &basis, LogCoordinate::from_weight(w));
    let moments = moment_vector(&g, p, maturity, method)?;
    let coeffs = hermite_normalized_coefficients(order);
    let mut peak: f64 = 0.0;
    let mut values = Vec::with_capacity(order + 1);
    for (n, row) in coeffs.iter().enumerate() {
        let mut acc = 0.0;
        for (j, c) in row.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let term = c * moments.value[basis.index(0, j).unwrap()];
            peak = peak.max(term.abs());
            acc += term;
        }
        if !acc.is_finite() {
            return Err(Error::Numerical(format!("non-finite Hermite moment at degree {n}")));
        }
        values.push(acc);
    }
    // H₀ = 1 and the moment of the constant is exactly one
    values[0] = 1.0;
    Ok(HermiteMoments { order, values, weight: *w, maturity, max_intermediate: peak, max_moment: moments.peak_magnitude })
}

/// `E[V_T^i X_T^j]` on the raw coordinates, for small `i + j`.
pub fn raw_moment(p: &SvjParams, maturity: f64, i: usize, j: usize) -> Result<f64> {
    let basis = PolyBasis::new(i + j);
    let g = build_generator(p, &basis);
    let mut e = vec![0.0; basis.dim()];
    e[basis.index(i, j).unwrap()] = 1.0;
    conditional_moment(&g, &e, maturity, (p.v0, p.x0()))
}
