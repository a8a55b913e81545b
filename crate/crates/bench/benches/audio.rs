use std::sync::Arc;
use std::time::Duration;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use dualtone_core::generation::{blend_with_prior, stub_synthesize, BatchRunner, GenerationRequest};
use dualtone_core::{decode_wav, encode_wav, StubBackend};

fn synthesis(c: &mut Criterion) {
    c.bench_function("stub_synthesize 10 s", |b| {
        b.iter(|| stub_synthesize(black_box("calm piano, soft strings, slow tempo"), 42, 10.0, 16_000))
    });
    let fresh = stub_synthesize("calm piano", 1, 10.0, 16_000);
    let prior = stub_synthesize("soft strings", 2, 10.0, 16_000);
    c.bench_function("blend_with_prior 10 s", |b| b.iter(|| blend_with_prior(&fresh, &prior, black_box(0.5))));
}

fn wav(c: &mut Criterion) {
    let w = stub_synthesize("calm piano", 1, 10.0, 16_000);
    let bytes = encode_wav(&w).unwrap();
    c.bench_function("encode_wav 10 s", |b| b.iter(|| encode_wav(black_box(&w))));
    c.bench_function("decode_wav 10 s", |b| b.iter(|| decode_wav(black_box(&bytes))));
}

fn batch(c: &mut Criterion) {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let runner = BatchRunner::new(Arc::new(StubBackend), 12, Duration::from_secs(60));
    let prompts = [
        "calm piano, soft strings",
        "upbeat drums, synth bass",
        "ambient pads, slow tempo",
        "jazzy guitar, brushed drums",
    ];
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    group.bench_function("4 prompts x 3 clips x 10 s", |b| {
        b.to_async(&rt).iter_batched(
            || GenerationRequest::new(prompts, 7),
            |req| {
                let runner = runner.clone();
                async move { runner.run(&req).await.unwrap() }
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, synthesis, wav, batch);
criterion_main!(benches);
