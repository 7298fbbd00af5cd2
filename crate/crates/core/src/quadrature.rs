//! Numerical integration: adaptive Gauss–Kronrod (scalar and vector valued),
//! Gauss–Legendre and Gauss–Hermite rules.

use crate::error::{Error, Result};
use crate::special::hermite_normalized_into;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Stopping rule for the adaptive integrators.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-10, rel: 1e-12, max_segments: 4000 }
    }
}

impl Tolerance {
    pub fn abs(abs: f64) -> Self {
        Tolerance { abs, rel: 0.0, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct VecIntegral {
    pub value: Vec<f64>,
    pub error: f64,
    pub segments: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Maps the integration domain onto a finite parameter interval.
#[derive(Clone, Copy)]
enum Domain {
    Finite,
    UpperInfinite(f64),
    LowerInfinite(f64),
    Whole,
}

impl Domain {
    fn classify(a: f64, b: f64) -> (Domain, f64, f64) {
        match (a.is_finite(), b.is_finite()) {
            (true, true) => (Domain::Finite, a, b),
            (true, false) => (Domain::UpperInfinite(a), 0.0, 1.0),
            (false, true) => (Domain::LowerInfinite(b), 0.0, 1.0),
            (false, false) => (Domain::Whole, -1.0, 1.0),
        }
    }

    /// Returns (x, dx/dt).
    #[inline]
    fn map(self, t: f64) -> (f64, f64) {
        match self {
            Domain::Finite => (t, 1.0),
            Domain::UpperInfinite(a) => {
                let u = 1.0 - t;
                (a + t / u, 1.0 / (u * u))
            }
            Domain::LowerInfinite(b) => {
                let u = 1.0 - t;
                (b - t / u, 1.0 / (u * u))
            }
            Domain::Whole => {
                let u = 1.0 - t * t;
                (t / u, (1.0 + t * t) / (u * u))
            }
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    err: f64,
}

fn kronrod_segment<F>(f: &F, domain: Domain, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Result<Segment>
where
    F: Fn(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut abs_k = vec![0.0; dim];
    let mut samples: Vec<f64> = Vec::with_capacity(21 * dim);

    let eval = |t: f64, buf: &mut [f64]| -> Result<()> {
        let (x, jac) = domain.map(t);
        if jac == 0.0 || !x.is_finite() {
            buf.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        f(x, buf);
        for v in buf.iter_mut() {
            *v *= jac;
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite integrand at x = {x}")));
            }
        }
        Ok(())
    };

    eval(center, buf)?;
    for d in 0..dim {
        kron[d] = WGK[10] * buf[d];
        abs_k[d] = WGK[10] * buf[d].abs();
    }
    samples.extend_from_slice(buf);
    for j in 0..10 {
        let dx = half * XGK[j];
        eval(center - dx, buf)?;
        let lo = buf.to_vec();
        eval(center + dx, buf)?;
        for d in 0..dim {
            let s = lo[d] + buf[d];
            kron[d] += WGK[j] * s;
            abs_k[d] += WGK[j] * (lo[d].abs() + buf[d].abs());
            if j % 2 == 1 {
                gauss[d] += WG[j / 2] * s;
            }
        }
        samples.extend_from_slice(&lo);
        samples.extend_from_slice(buf);
    }

    // QUADPACK-style error rescaling, per component, take the worst one
    let mut err: f64 = 0.0;
    for d in 0..dim {
        let mean = kron[d] * 0.5;
        let mut asc = WGK[10] * (samples[d] - mean).abs();
        for j in 0..10 {
            let lo = samples[dim * (1 + 2 * j) + d];
            let hi = samples[dim * (2 + 2 * j) + d];
            asc += WGK[j] * ((lo - mean).abs() + (hi - mean).abs());
        }
        let resasc = asc * half.abs();
        let resabs = abs_k[d] * half.abs();
        let mut e = ((kron[d] - gauss[d]) * half).abs();
        if resasc != 0.0 && e != 0.0 {
            e = resasc * (200.0 * e / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * resabs);
        }
        err = err.max(e);
    }
    for k in kron.iter_mut() {
        *k *= half;
    }
    Ok(Segment { a, b, value: kron, err })
}

/// Adaptive 21-point Gauss–Kronrod integration of a vector-valued integrand
/// over `[a, b]`, where either bound may be infinite.
///
/// `f(x, out)` writes the `dim` components at `x`. Refinement bisects the
/// segment with the worst component error until the summed error meets the
/// tolerance against the largest component magnitude.
pub fn integrate_vec<F>(f: F, dim: usize, a: f64, b: f64, tol: Tolerance) -> Result<VecIntegral>
where
    F: Fn(f64, &mut [f64]),
{
    if a.is_nan() || b.is_nan() {
        return Err(Error::InvalidInput("NaN integration bound".into()));
    }
    if a == b {
        return Ok(VecIntegral { value: vec![0.0; dim], error: 0.0, segments: 0, converged: true });
    }
    if a > b {
        let mut r = integrate_vec(f, dim, b, a, tol)?;
        r.value.iter_mut().for_each(|v| *v = -*v);
        return Ok(r);
    }
    let (domain, ta, tb) = Domain::classify(a, b);
    let mut buf = vec![0.0; dim];
    let mut segments = vec![kronrod_segment(&f, domain, ta, tb, dim, &mut buf)?];

    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for s in &segments {
            for d in 0..dim {
                total[d] += s.value[d];
            }
            err += s.err;
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = tol.abs.max(tol.rel * scale);
        if err <= target || segments.len() >= tol.max_segments {
            return Ok(VecIntegral { value: total, error: err, segments: segments.len(), converged: err <= target });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, be), (i, s)| if s.err > be { (i, s.err) } else { (bi, be) });
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // interval exhausted at machine precision
            return Ok(VecIntegral { value: total, error: err, segments: segments.len() + 1, converged: false });
        }
        segments.push(kronrod_segment(&f, domain, s.a, mid, dim, &mut buf)?);
        segments.push(kronrod_segment(&f, domain, mid, s.b, dim, &mut buf)?);
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    let r = integrate_vec(|x, out: &mut [f64]| out[0] = f(x), 1, a, b, tol)?;
    Ok(Integral { value: r.value[0], error: r.error, converged: r.converged })
}

/// Integrates over `[a, b]` after splitting at the given interior breakpoints.
pub fn integrate_with_breaks<F>(f: F, a: f64, b: f64, breaks: &[f64], tol: Tolerance) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut value = 0.0;
    let mut error = 0.0;
    let mut converged = true;
    for w in pts.windows(2) {
        let r = integrate(&f, w[0], w[1], tol)?;
        value += r.value;
        error += r.error;
        converged &= r.converged;
    }
    Ok(Integral { value, error, converged })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Hermite rule for the standard normal weight φ (probabilists'
/// convention): `∫ f(z) φ(z) dz ≈ Σ wᵢ f(zᵢ)`, exact for degree ≤ 2n − 1.
///
/// Nodes start from the Golub–Welsch eigenvalues and are polished by Newton
/// on the normalized recurrence; weights use the Christoffel form
/// `1 / Σ_k Ĥ_k(zᵢ)²`, which keeps tail weights accurate.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    use nalgebra::{DMatrix, SymmetricEigen};
    if n == 0 {
        return (vec![], vec![]);
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut h = vec![0.0; n + 1];
    let mut weights = vec![0.0; n];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        for _ in 0..10 {
            hermite_normalized_into(*x, &mut h);
            let d = (n as f64).sqrt() * h[n - 1];
            let step = h[n] / d;
            *x -= step;
            if step.abs() < 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        hermite_normalized_into(*x, &mut h);
        *w = 1.0 / h[..n].iter().map(|v| v * v).sum::<f64>();
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{norm_cdf, norm_pdf};

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x - x + 1.0, -1.0, 2.0, Tolerance::default()).unwrap();
        assert!((r.value - (8.0 + 1.0 - 1.5 + 3.0)).abs() < 1e-13);
    }

    #[test]
    fn gaussian_tails_on_infinite_domains() {
        let tol = Tolerance { abs: 1e-13, rel: 1e-13, max_segments: 2000 };
        let up = integrate(norm_pdf, 1.2, f64::INFINITY, tol).unwrap();
        assert!((up.value - (1.0 - norm_cdf(1.2))).abs() < 1e-12, "{:?} {}", up, 1.0 - norm_cdf(1.2));
        let lo = integrate(norm_pdf, f64::NEG_INFINITY, -0.4, tol).unwrap();
        assert!((lo.value - norm_cdf(-0.4)).abs() < 1e-12);
        let all = integrate(|x| x * x * norm_pdf(x), f64::NEG_INFINITY, f64::INFINITY, tol).unwrap();
        assert!((all.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let a = integrate(|x| x.exp(), 0.0, 1.0, Tolerance::default()).unwrap().value;
        let b = integrate(|x| x.exp(), 1.0, 0.0, Tolerance::default()).unwrap().value;
        assert!((a + b).abs() < 1e-14);
        assert!((a - (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn legendre_integrates_high_degree() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((s - 2.0 / 31.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_rule_moments() {
        let (x, w) = gauss_hermite(40);
        let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!(m(3).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-12);
        assert!((m(10) - 945.0).abs() < 1e-9);
    }
}
