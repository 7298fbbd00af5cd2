//! Property tests for the Hermite basis, the tail kernels and the stationary
//! quantizers.

mod common;

use common::{edges, quad};
use proptest::prelude::*;
use svjq::hermite::{coeff_h, coeff_l, hermite_h, orthonormality_check, tail_coefficients};
use svjq::model::{hermite_moments, HermiteMoments};
use svjq::quantizer::{self, poly, CellModel, GaussianMixture, NewtonConfig, Units};
use svjq::{GaussianWeight, SvjParams};

fn benchmark_moments(order: usize) -> HermiteMoments {
    let p = SvjParams::benchmark();
    let w = GaussianWeight::for_maturity(&p, 1.0);
    hermite_moments(&p, 1.0, &w, order).unwrap()
}

#[test]
fn hermite_basis_is_orthonormal_up_to_40() {
    let w = GaussianWeight::new(4.6, 0.7072);
    for m in 0..=40 {
        for n in 0..=m {
            let ip = orthonormality_check(m, n, &w);
            let target = if m == n { 1.0 } else { 0.0 };
            assert!((ip - target).abs() < 1e-8, "<H_{m}, H_{n}> = {ip}");
        }
    }
}

#[test]
fn tail_kernels_match_quadrature_at_ten_strikes() {
    let w = GaussianWeight::new(4.6, 0.7072);
    let hi = w.mu_w + 14.0 * w.sigma_w;
    for i in 0..10 {
        let k = (80.0 + 5.0 * i as f64).ln() - 0.3 + 0.15 * i as f64;
        let breaks: Vec<f64> = (-12..=12).map(|j| w.mu_w + j as f64 * w.sigma_w).collect();
        for n in [0usize, 1, 2, 3, 7, 15, 24, 33, 40] {
            let l_ref = quad(|x| hermite_h(n, x, &w) * w.pdf(x), k, hi, &breaks);
            let h_ref = quad(|x| x * hermite_h(n, x, &w) * w.pdf(x), k, hi, &breaks);
            assert!((coeff_l(n, k, &w) - l_ref).abs() < 1e-8, "l_{n}({k})");
            assert!((coeff_h(n, k, &w) - h_ref).abs() < 1e-8, "h_{n}({k})");
        }
    }
}

#[test]
fn tail_identity_full_line() {
    let w = GaussianWeight::new(-0.3, 1.3);
    let full = tail_coefficients(f64::NEG_INFINITY, &w, 40);
    // far below the bulk the finite-edge formulas must agree with −∞
    let deep = tail_coefficients(w.mu_w - 60.0 * w.sigma_w, &w, 40);
    for n in 0..=40 {
        assert!((full.l[n] - deep.l[n]).abs() < 1e-8, "l_{n}");
        assert!((full.h[n] - deep.h[n]).abs() < 1e-8, "h_{n}");
        assert!((full.k[n] - deep.k[n]).abs() < 1e-8, "k_{n}");
    }
    let none = tail_coefficients(f64::INFINITY, &w, 40);
    assert!(none.l.iter().chain(&none.h).chain(&none.k).all(|v| *v == 0.0));
}

fn fd_jacobian_error(lm: &HermiteMoments, points: &[f64]) -> f64 {
    let j = poly::jacobian(points, lm, &lm.weight).unwrap();
    let n = points.len();
    let scale = (0..n).map(|i| j.get(i, i).abs()).fold(0.0f64, f64::max);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for c in 0..n {
        let mut up = points.to_vec();
        let mut dn = points.to_vec();
        up[c] += h;
        dn[c] -= h;
        let ru = poly::master_residual(&up, lm, &lm.weight).unwrap();
        let rd = poly::master_residual(&dn, lm, &lm.weight).unwrap();
        for r in 0..n {
            let fd = (ru[r] - rd[r]) / (2.0 * h);
            worst = worst.max((fd - j.get(r, c)).abs() / scale);
        }
    }
    worst
}

#[test]
fn series_jacobian_matches_finite_differences() {
    let lm = benchmark_moments(80);
    for n in [5usize, 12, 30] {
        let (mu, var) = CellModel::mean_variance(&svjq::hermite::TruncatedDensity {
            moments: lm.clone(),
            weight: lm.weight,
        });
        let pts = quantizer::normal_quantile_grid(mu, var.sqrt(), n);
        let err = fd_jacobian_error(&lm, &pts);
        assert!(err < 1e-5, "N={n}: relative Jacobian error {err}");
    }
}

fn mixture_strategy() -> impl Strategy<Value = GaussianMixture> {
    prop::collection::vec((-3.0f64..3.0, 0.2f64..1.5, 0.1f64..1.0), 1..5)
        .prop_map(|c| {
            let (m, rest): (Vec<f64>, Vec<(f64, f64)>) = c.into_iter().map(|(a, b, w)| (a, (b, w))).unzip();
            let (s, w) = rest.into_iter().unzip();
            GaussianMixture::new(m, s, w).unwrap()
        })
}

fn mixture_distortion_quadrature(g: &GaussianMixture, pts: &[f64]) -> f64 {
    let e = edges(pts);
    let (lo, hi) = (-40.0, 40.0);
    let mut total = 0.0;
    for (i, x) in pts.iter().enumerate() {
        let a = e[i].max(lo);
        let b = e[i + 1].min(hi);
        total += quad(|y| (y - x) * (y - x) * g.density(y), a, b, &[]);
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hermite_values_obey_recurrence(z in -6.0f64..6.0) {
        let w = GaussianWeight::new(0.0, 1.0);
        for n in 1..40 {
            // √(n+1) H_{n+1} = z H_n − √n H_{n−1}
            let lhs = ((n + 1) as f64).sqrt() * hermite_h(n + 1, z, &w);
            let rhs = z * hermite_h(n, z, &w) - (n as f64).sqrt() * hermite_h(n - 1, z, &w);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn tail_differences_integrate_cells(a in -3.0f64..2.0, width in 0.05f64..2.0, mu in -1.0f64..1.0, s in 0.3f64..2.0) {
        let w = GaussianWeight::new(mu, s);
        let (lo, hi) = (mu + a * s, mu + (a + width) * s);
        let ta = tail_coefficients(lo, &w, 20);
        let tb = tail_coefficients(hi, &w, 20);
        for n in [0usize, 1, 2, 5, 11, 20] {
            let l = quad(|x| hermite_h(n, x, &w) * w.pdf(x), lo, hi, &[]);
            let h = quad(|x| x * hermite_h(n, x, &w) * w.pdf(x), lo, hi, &[]);
            let k = quad(|x| x * x * hermite_h(n, x, &w) * w.pdf(x), lo, hi, &[]);
            prop_assert!((ta.l[n] - tb.l[n] - l).abs() < 1e-8);
            prop_assert!((ta.h[n] - tb.h[n] - h).abs() < 1e-8);
            prop_assert!((ta.k[n] - tb.k[n] - k).abs() < 1e-8);
        }
    }

    #[test]
    fn mixture_gradient_matches_finite_differences(g in mixture_strategy(), n in 2usize..8) {
        let (mu, var) = g.mean_variance();
        let pts = quantizer::normal_quantile_grid(mu, var.sqrt(), n);
        let res = quantizer::residual(&g, &pts).unwrap();
        let h = 1e-5;
        for i in 0..n {
            let mut up = pts.clone();
            let mut dn = pts.clone();
            up[i] += h;
            dn[i] -= h;
            // ∂D/∂x_i = −2 E_i
            let fd = (mixture_distortion_quadrature(&g, &up) - mixture_distortion_quadrature(&g, &dn)) / (2.0 * h);
            prop_assert!((fd + 2.0 * res[i]).abs() < 1e-6, "cell {i}: fd {fd} vs {}", -2.0 * res[i]);
        }
    }

    #[test]
    fn mixture_jacobian_matches_finite_differences(g in mixture_strategy(), n in 2usize..10) {
        let (mu, var) = g.mean_variance();
        let pts = quantizer::normal_quantile_grid(mu, var.sqrt(), n);
        let j = quantizer::jacobian(&g, &pts).unwrap();
        let scale = (0..n).map(|i| j.get(i, i).abs()).fold(0.0f64, f64::max);
        let h = 1e-6;
        for c in 0..n {
            let mut up = pts.clone();
            let mut dn = pts.clone();
            up[c] += h;
            dn[c] -= h;
            let ru = quantizer::residual(&g, &up).unwrap();
            let rd = quantizer::residual(&g, &dn).unwrap();
            for r in 0..n {
                let fd = (ru[r] - rd[r]) / (2.0 * h);
                prop_assert!((fd - j.get(r, c)).abs() / scale < 1e-5);
            }
        }
    }

    #[test]
    fn stationary_mixture_grids_are_consistent(g in mixture_strategy(), n in 1usize..25) {
        let init = quantizer::moment_matched_grid(&g, n);
        let grid = quantizer::solve_stationary(&g, &init, &NewtonConfig::default(), Units::LogPrice).unwrap();
        prop_assert!(grid.points.windows(2).all(|w| w[1] > w[0]));
        let total: f64 = grid.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(grid.weights.iter().all(|p| *p >= 0.0));
        let res = quantizer::residual(&g, &grid.points).unwrap();
        prop_assert!(res.iter().all(|e| e.abs() < 1e-7), "residual {:?}", res);
        // stationarity preserves the mean
        let (mu, _) = g.mean_variance();
        prop_assert!((grid.mean() - mu).abs() < 1e-6 * (1.0 + n as f64));
    }

    #[test]
    fn mixture_cell_weights_match_quadrature(g in mixture_strategy(), n in 1usize..20) {
        let (mu, var) = g.mean_variance();
        let pts = quantizer::normal_quantile_grid(mu, var.sqrt(), n);
        let w = quantizer::cell_weights(&g, &pts).unwrap();
        let e = edges(&pts);
        for i in 0..n {
            let q = quad(|y| g.density(y), e[i].max(-40.0), e[i + 1].min(40.0), &[]);
            prop_assert!((w[i] - q).abs() < 1e-8);
        }
    }
}

#[test]
fn series_cell_weights_match_quadrature() {
    let lm = benchmark_moments(80);
    let grid = poly::quantize_log_price(&lm, 20).unwrap();
    let d = svjq::hermite::TruncatedDensity { moments: lm.clone(), weight: lm.weight };
    let e = edges(&grid.points);
    let (lo, hi) = (lm.weight.mu_w - 40.0 * lm.weight.sigma_w, lm.weight.mu_w + 40.0 * lm.weight.sigma_w);
    for i in 0..grid.len() {
        let q = quad(|x| d.density(x), e[i].max(lo), e[i + 1].min(hi), &[]);
        assert!((grid.weights[i] - q).abs() < 1e-8, "cell {i}: {} vs {q}", grid.weights[i]);
    }
    assert!((grid.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    let res = poly::master_residual(&grid.points, &lm, &lm.weight).unwrap();
    assert!(res.iter().all(|e| e.abs() < 1e-9));
}

#[test]
fn series_density_integrates_to_one() {
    let lm = benchmark_moments(80);
    let d = svjq::hermite::TruncatedDensity { moments: lm.clone(), weight: lm.weight };
    let w = lm.weight;
    let breaks: Vec<f64> = (-12..=12).map(|j| w.mu_w + j as f64 * w.sigma_w).collect();
    let total = quad(|x| d.density(x), w.mu_w - 40.0 * w.sigma_w, w.mu_w + 40.0 * w.sigma_w, &breaks);
    assert!((total - 1.0).abs() < 1e-8, "{total}");
    let mean = quad(|x| x * d.density(x), w.mu_w - 40.0 * w.sigma_w, w.mu_w + 40.0 * w.sigma_w, &breaks);
    assert!((mean - lm.mean()).abs() < 1e-8);
}
