use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use snapzip_core::born_models::{BornModel, ModelKind, PlanarModel};
use snapzip_core::estimators::{nishimori_bonds, vortex_free_energy};
use snapzip_core::lattice::{Boundary, ChainGeom};
use snapzip_core::lzcid::ShuffleBaseline;
use snapzip_core::sampler::{sample_chains, ChainConfig};
use snapzip_core::tn_ising::ContractOptions;
use snapzip_core::Exec;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn baseline(c: &mut Criterion) {
    let mut g = c.benchmark_group("baseline");
    g.sample_size(10);
    let lengths = [1024, 2048, 4096, 8192];
    for (name, exec) in EXECS {
        g.bench_with_input(BenchmarkId::new(name, "4 lengths x K=8"), &exec, |b, &exec| {
            b.iter(|| ShuffleBaseline::build(black_box(&lengths), 8, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn tfim_chains(c: &mut Criterion) {
    let mut g = c.benchmark_group("tfim_chains");
    g.sample_size(10);
    let m = BornModel::tfim(0.5, ChainGeom::new(64, Boundary::Open).unwrap()).unwrap();
    let cfg = ChainConfig::new(200, 3, 0);
    for (name, exec) in EXECS {
        g.bench_with_input(BenchmarkId::new(name, "L=64, 4 chains"), &exec, |b, &exec| {
            b.iter(|| sample_chains(&m, &cfg, 4, 200, exec).unwrap())
        });
    }
    g.finish();
}

fn disorder_average(c: &mut Criterion) {
    let mut g = c.benchmark_group("vortex_free_energy");
    g.sample_size(10);
    let m = PlanarModel::new(ModelKind::Nishimori, 0.1, 8, ContractOptions::new(1e-8, 64).unwrap()).unwrap();
    let bonds = nishimori_bonds(&m, 32, 5, Exec::Sequential).unwrap();
    for (name, exec) in EXECS {
        g.bench_with_input(BenchmarkId::new(name, "L=8, 32 disorder draws"), &exec, |b, &exec| {
            b.iter(|| vortex_free_energy(&m, black_box(&bonds), 0.5, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, baseline, tfim_chains, disorder_average);
criterion_main!(benches);
