//! Reference computations shared by the integration suites.
#![allow(dead_code)]

use svjq::quadrature::{integrate_with_breaks, Tolerance};
use svjq::rmq::RmqLattice;
use svjq::special::{norm_cdf, norm_pdf};

pub fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let tol = Tolerance { abs: 1e-14, rel: 1e-13, max_segments: 20_000 };
    integrate_with_breaks(f, a, b, breaks, tol).unwrap().value
}

pub fn edges(pts: &[f64]) -> Vec<f64> {
    let mut e = vec![f64::NEG_INFINITY];
    e.extend(pts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    e.push(f64::INFINITY);
    e
}

/// Lloyd's fixed point for N(0,1) using the closed-form cell moments.
pub fn lloyd_standard_normal(n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * (i as f64 + 0.5) / n as f64).collect();
    let pdf = |z: f64| if z.is_finite() { norm_pdf(z) } else { 0.0 };
    for _ in 0..200_000 {
        let e = edges(&x);
        let next: Vec<f64> =
            (0..n).map(|i| (pdf(e[i]) - pdf(e[i + 1])) / (norm_cdf(e[i + 1]) - norm_cdf(e[i]))).collect();
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

/// Weighted mean over nodes of `|E[Ŝ_{k+1} | node] − s(1 + rΔ)| / s`.
pub fn conditional_drift(lat: &RmqLattice) -> f64 {
    let growth = 1.0 + lat.params.r * lat.config.delta();
    let mut total = 0.0;
    for k in 0..lat.steps() {
        let (nv, ns) = lat.dims(k);
        let next = &lat.s_grids[k + 1].points;
        for i in 0..nv {
            for j in 0..ns {
                let m: f64 = lat.transitions[k].row(i, j).iter().enumerate().map(|(idx, p)| p * next[idx % next.len()]).sum();
                let s = lat.s_grids[k].points[j];
                total += lat.joint(k, i, j) * (m - s * growth).abs() / s;
            }
        }
    }
    total
}
