//! Batch screening throughput: the rayon fan-out versus the sequential loop,
//! on a pattern-only engine and on the full default pipeline.
//!
//! Run with `cargo bench -p sentinel-core`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use sentinel_core::engine::{Engine, EngineConfig};
use sentinel_core::evalkit::LabeledCorpus;

/// A mixed workload cycled out of the shipped corpus: attack-heavy enough to
/// exercise every pattern set, benign-heavy enough to be realistic.
fn workload(len: usize) -> Vec<String> {
    let corpus = LabeledCorpus::starter();
    corpus
        .items()
        .iter()
        .map(|item| item.text.clone())
        .cycle()
        .take(len)
        .collect()
}

fn bench_engine(c: &mut Criterion, name: &str, engine: &Engine) {
    let mut group = c.benchmark_group(name);
    for &batch in &[64usize, 512] {
        let prompts = workload(batch);
        group.throughput(Throughput::Elements(batch as u64));
        group.bench_with_input(BenchmarkId::new("parallel", batch), &prompts, |b, prompts| {
            b.iter(|| black_box(engine.screen_batch(prompts)))
        });
        group.bench_with_input(
            BenchmarkId::new("sequential", batch),
            &prompts,
            |b, prompts| b.iter(|| black_box(engine.screen_batch_sequential(prompts))),
        );
    }
    group.finish();
}

fn throughput(c: &mut Criterion) {
    let patterns_only = {
        let mut cfg = EngineConfig::default();
        cfg.semantic_enabled = false;
        Engine::new(cfg).expect("pattern-only engine builds")
    };
    bench_engine(c, "screen_batch/patterns_only", &patterns_only);

    let full = Engine::new(EngineConfig::default()).expect("default engine builds");
    bench_engine(c, "screen_batch/full_pipeline", &full);
}

criterion_group!(benches, throughput);
criterion_main!(benches);
