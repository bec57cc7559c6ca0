use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use covmimo::chanest::mmse_filter;
use covmimo::covest::{optimize_factors_all, SamplingContext, UeSamplers};
use covmimo::parallel::{map_indexed, map_indexed_sequential, with_workers};
use covmimo::rng::{Stream, StreamKey};
use covmimo::scenario::build_scenario;
use covmimo::se::{uatf_sinr_monte_carlo_cell, CellModel, CombinerKind};
use covmimo::SystemParams;

fn params() -> SystemParams {
    SystemParams {
        m: 32,
        k: 4,
        l: 3,
        ..SystemParams::default()
    }
}

fn rzf_monte_carlo(c: &mut Criterion) {
    let p = params();
    let cov = build_scenario(&p).unwrap();
    let model = CellModel::new(&cov, 0).unwrap();
    let filters: Vec<_> = (0..p.k)
        .map(|k| mmse_filter(cov.r(0, 0, k), cov.q(0, k)).unwrap().filter)
        .collect();
    let key = StreamKey::new(Stream::MonteCarloBlock);

    let mut group = c.benchmark_group("rzf_uatf_2000_blocks");
    group.sample_size(10);
    for workers in [1, 0] {
        let label = if workers == 1 { "sequential" } else { "parallel" };
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                with_workers(workers, || {
                    uatf_sinr_monte_carlo_cell(CombinerKind::Rzf, &filters, &model, p.rho_ul, 2000, 1, key).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn factor_search(c: &mut Criterion) {
    let p = params();
    let cov = build_scenario(&p).unwrap();
    let samplers = UeSamplers::new(&cov, 0, 0).unwrap();
    let ctx = SamplingContext { n_q: 500, n_r: 50 };
    let key = StreamKey::new(Stream::FactorSearch);

    let mut group = c.benchmark_group("factor_search");
    group.sample_size(10);
    for workers in [1, 0] {
        let label = if workers == 1 { "sequential" } else { "parallel" };
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                with_workers(workers, || {
                    optimize_factors_all(cov.r(0, 0, 0), cov.q(0, 0), &samplers, ctx, 8, 0.05, &p, 1, key).unwrap()
                })
            })
        });
    }
    group.finish();
}

// Raw scheduling overhead of the index-ordered map.
fn indexed_map(c: &mut Criterion) {
    let work = |i: usize| (0..2000).fold(i as f64, |acc, x| (acc + x as f64).sqrt());
    let mut group = c.benchmark_group("map_indexed_4096");
    group.bench_function("sequential", |b| b.iter(|| black_box(map_indexed_sequential(4096, work))));
    group.bench_function("parallel", |b| b.iter(|| black_box(map_indexed(4096, work))));
    group.finish();
}

criterion_group!(benches, rzf_monte_carlo, factor_search, indexed_map);
criterion_main!(benches);
