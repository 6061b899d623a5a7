//! Sequential vs rayon execution of the three hot loops: Monte Carlo SER,
//! greedy codebook search and one autoencoder loss/gradient evaluation.
//!
//! `cargo bench -p swipt --bench parallel`. Without the `parallel` feature
//! both variants run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use swipt::channel::{ser_mc_with, ChannelSpec, MlDecoder};
use swipt::codebook::{build_info_codebook_with, GreedyConfig};
use swipt::constellation::layout_info;
use swipt::eh::HarvesterModel;
use swipt::nn::{composite_loss_with, AeSystem, Batch, Topology, TrainConfig};
use swipt::par::Exec;
use swipt::rng::{streams, substream};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let code = layout_info(64, 5.0).unwrap().to_code();
    let decoder = MlDecoder::new(&code);
    let spec = ChannelSpec::from_db(15.0, 5.0, 1).unwrap();
    let mut group = c.benchmark_group("ser_mc_64pt_100k");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ser_mc_with(&code, &decoder, &spec, 100_000, exec).unwrap())
        });
    }
    group.finish();
}

fn greedy(c: &mut Criterion) {
    let cfg = GreedyConfig::default();
    let mut group = c.benchmark_group("greedy_codebook_16x2");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_info_codebook_with(16, 2, 5.0, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn loss(c: &mut Criterion) {
    let cfg = TrainConfig::default();
    let sys = AeSystem::new(Topology::p2p(16, 50.0, 5.0).unwrap(), cfg, HarvesterModel::Canonical).unwrap();
    let batch = Batch::sample(&sys, 256, &mut substream(1, streams::MESSAGES), &mut substream(1, streams::NOISE));
    let mut group = c.benchmark_group("composite_loss_batch256");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| composite_loss_with(&sys, &batch, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, greedy, loss);
criterion_main!(benches);
