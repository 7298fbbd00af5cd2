//! Engine timings. Compare the two builds with
//! `cargo bench -p svjq-core --bench engines` and
//! `cargo bench -p svjq-core --bench engines --no-default-features`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use svjq::model::hermite_moments;
use svjq::pricing::{self, McConfig, OptionKind, OptionSpec};
use svjq::quantizer::poly::quantize_log_price;
use svjq::rmq::{build_lattice, EulerConfig};
use svjq::{par, GaussianWeight, SvjParams};

fn mode() -> &'static str {
    if par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

fn strikes() -> Vec<OptionSpec> {
    (0..9).map(|i| OptionSpec::european(OptionKind::Call, 80.0 + 5.0 * i as f64, 1.0)).collect()
}

fn engines(c: &mut Criterion) {
    let p = SvjParams::benchmark();
    let w = GaussianWeight::for_maturity(&p, 1.0);
    let mut g = c.benchmark_group("engines");
    g.sample_size(10);

    g.bench_function(BenchmarkId::new("mc_ladder_100k", mode()), |b| {
        let cfg = McConfig::new(100_000, 100, 1);
        let specs = strikes();
        b.iter(|| pricing::mc_european_ladder(&p, &specs, &cfg).unwrap())
    });

    g.bench_function(BenchmarkId::new("lattice_12x10x20", mode()), |b| {
        b.iter(|| build_lattice(&p, &EulerConfig::new(12, 1.0, 10, 20)).unwrap())
    });

    g.bench_function(BenchmarkId::new("poly_ladder_M80_N20", mode()), |b| {
        let specs = strikes();
        b.iter(|| {
            let lm = hermite_moments(&p, 1.0, &w, 80).unwrap();
            let grid = quantize_log_price(&lm, 20).unwrap().exp_mapped();
            specs.iter().map(|s| pricing::price_european_grid(&grid, s, p.r).unwrap().price).sum::<f64>()
        })
    });
    g.finish();
}

criterion_group!(benches, engines);
criterion_main!(benches);
