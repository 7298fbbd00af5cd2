//! Invariants of the recursive marginal quantization lattice and of the
//! backward induction priced on it.

mod common;

use std::sync::OnceLock;

use svjq::pricing::{self, OptionKind, OptionSpec};
use svjq::rmq::{build_lattice, DriftForm, EulerConfig, RmqLattice};
use svjq::SvjParams;

use common::conditional_drift;

const R: f64 = 0.04;

fn benchmark_lattice() -> &'static RmqLattice {
    static LATTICE: OnceLock<RmqLattice> = OnceLock::new();
    LATTICE.get_or_init(|| build_lattice(&SvjParams::benchmark(), &EulerConfig::new(12, 1.0, 10, 20)).unwrap())
}

#[test]
fn probabilities_are_conserved() {
    let lat = benchmark_lattice();
    for (k, w) in lat.joint_weights.iter().enumerate() {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10, "date {k}");
        assert!(w.iter().all(|p| *p >= 0.0));
    }
    for tr in &lat.transitions {
        assert!(tr.max_row_defect < 1e-6, "row defect {}", tr.max_row_defect);
        for i in 0..tr.src.0 {
            for j in 0..tr.src.1 {
                assert!((tr.row(i, j).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
    assert!(lat.marginal_defects.iter().all(|d| *d < 1e-5), "{:?}", lat.marginal_defects);
    for k in 0..=lat.steps() {
        let v = &lat.v_grids[k];
        assert!(v.points.iter().all(|x| *x >= lat.params.v_min && *x <= lat.params.v_max));
        assert_eq!(lat.s_marginal(k), lat.s_grids[k].weights);
        assert_eq!(lat.v_marginal(k), v.weights);
    }
}

#[test]
fn transitions_propagate_joint_weights() {
    let lat = benchmark_lattice();
    for k in 0..lat.steps() - 1 {
        // push the weights at t_k two steps forward and compare with t_{k+2}
        let mut w = lat.joint_weights[k].clone();
        for step in [k, k + 1] {
            let tr = &lat.transitions[step];
            let mut next = vec![0.0; tr.dst.0 * tr.dst.1];
            for i in 0..tr.src.0 {
                for j in 0..tr.src.1 {
                    let a = w[i * tr.src.1 + j];
                    for (n, p) in next.iter_mut().zip(tr.row(i, j)) {
                        *n += a * p;
                    }
                }
            }
            w = next;
        }
        let target = &lat.joint_weights[k + 2];
        let gap = w.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-12, "dates {k}..{}: {gap}", k + 2);
    }
}

#[test]
fn conditional_martingale_defect_shrinks_with_price_grid() {
    let p = SvjParams::benchmark();
    let drifts: Vec<f64> = [5usize, 10, 20, 40]
        .iter()
        .map(|&ns| conditional_drift(&build_lattice(&p, &EulerConfig::new(12, 1.0, 10, ns)).unwrap()))
        .collect();
    assert!(drifts.windows(2).all(|w| w[1] < w[0]), "{drifts:?}");
}

#[test]
fn single_atom_lattice_matches_enumeration() {
    // one atom per date: the chain is the deterministic Euler recursion
    let p = SvjParams::black_scholes_limit(0.2, 0.02, 0.06, 100.0);
    let cfg = EulerConfig::new(12, 1.0, 1, 1);
    let lat = build_lattice(&p, &cfg).unwrap();
    let delta = cfg.delta();
    let path: Vec<f64> = (0..=12).map(|k| 100.0 * (1.0 + (p.r - p.delta) * delta).powi(k)).collect();
    for k in 0..=12 {
        assert!((lat.s_grids[k].points[0] - path[k]).abs() < 1e-9);
    }
    for (kind, strike) in [(OptionKind::Call, 90.0), (OptionKind::Put, 100.0), (OptionKind::Put, 110.0)] {
        let spec = OptionSpec::bermudan_uniform(kind, strike, 1.0, 12);
        let want = (1..=12).map(|k| (-p.r * k as f64 * delta).exp() * spec.payoff(path[k])).fold(0.0, f64::max);
        let got = pricing::price_bermudan(&lat, &spec, p.r).unwrap().price;
        assert!((got - want).abs() < 1e-9, "{kind:?} K={strike}: {got} vs {want}");
    }
}

#[test]
fn european_backward_induction_telescopes() {
    let lat = benchmark_lattice();
    for kind in [OptionKind::Call, OptionKind::Put] {
        for k in [80.0, 100.0, 120.0] {
            let spec = OptionSpec::european(kind, k, 1.0);
            let ind = pricing::price_bermudan(lat, &spec, R).unwrap().price;
            let direct = pricing::price_european_grid(&lat.s_grids[12], &spec, R).unwrap().price;
            assert!((ind - direct).abs() < 1e-10, "{kind:?} K={k}: {ind} vs {direct}");
        }
    }
}

#[test]
fn bermudan_prices_are_monotone() {
    let lat = benchmark_lattice();
    let price = |spec: &OptionSpec| pricing::price_bermudan(lat, spec, R).unwrap().price;
    for k in [85.0, 100.0, 115.0] {
        let eu = price(&OptionSpec::european(OptionKind::Put, k, 1.0));
        let quarterly = price(&OptionSpec::bermudan_uniform(OptionKind::Put, k, 1.0, 4));
        let monthly = price(&OptionSpec::bermudan_uniform(OptionKind::Put, k, 1.0, 12));
        assert!(eu <= quarterly && quarterly <= monthly, "K={k}: {eu} {quarterly} {monthly}");
        // without dividends the call premium only reflects the node-wise
        // martingale defect of the lattice
        let call_eu = price(&OptionSpec::european(OptionKind::Call, k, 1.0));
        let call_b = price(&OptionSpec::bermudan_uniform(OptionKind::Call, k, 1.0, 12));
        assert!(call_b >= call_eu && call_b - call_eu < 0.01 * call_eu, "K={k}: {call_eu} {call_b}");
    }
    let puts: Vec<f64> = (0..9).map(|i| price(&OptionSpec::bermudan_uniform(OptionKind::Put, 80.0 + 5.0 * i as f64, 1.0, 12))).collect();
    assert!(puts.windows(2).all(|w| w[1] > w[0]));
    assert!(puts.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] > -1e-10));
}

#[test]
fn exercise_dates_must_lie_on_the_lattice() {
    let lat = benchmark_lattice();
    let off = OptionSpec::bermudan(OptionKind::Put, 100.0, 1.0, vec![0.3, 1.0]);
    assert!(pricing::price_bermudan(lat, &off, R).is_err());
    let wrong_t = OptionSpec::european(OptionKind::Put, 100.0, 2.0);
    assert!(pricing::price_bermudan(lat, &wrong_t, R).is_err());
}

#[test]
fn constant_variance_lattice_converges_to_euler_monte_carlo() {
    let p = SvjParams::black_scholes_limit(0.25, R, 0.0, 100.0);
    let spec = OptionSpec::european(OptionKind::Call, 100.0, 1.0);
    let prices: Vec<f64> = [20usize, 40, 80]
        .iter()
        .map(|&ns| {
            let lat = build_lattice(&p, &EulerConfig::new(12, 1.0, 5, ns)).unwrap();
            assert_eq!(lat.dims(12).0, 1);
            pricing::price_bermudan(&lat, &spec, R).unwrap().price
        })
        .collect();
    // a convex payoff on stationary grids is priced from below
    assert!(prices.windows(2).all(|w| w[1] > w[0]), "{prices:?}");
    let mc = pricing::mc_european(&p, &spec, 1_000_000, 12, 1).unwrap();
    assert!((prices[2] - mc.price).abs() < 3.0 * mc.std_error().unwrap(), "{} vs {}", prices[2], mc.price);
}

#[test]
fn additive_drift_lowers_call_value() {
    let p = SvjParams::benchmark();
    let mut cfg = EulerConfig::new(12, 1.0, 6, 10);
    let prop = build_lattice(&p, &cfg).unwrap();
    cfg.drift = DriftForm::Additive;
    let add = build_lattice(&p, &cfg).unwrap();
    let spec = OptionSpec::european(OptionKind::Call, 100.0, 1.0);
    let a = pricing::price_bermudan(&prop, &spec, R).unwrap().price;
    let b = pricing::price_bermudan(&add, &spec, R).unwrap().price;
    // s + rΔ grows the price far less than s(1 + rΔ)
    assert!(a > b, "{a} vs {b}");
}
