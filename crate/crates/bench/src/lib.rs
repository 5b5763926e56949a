//! Criterion benchmarks: one training example (forward and backward) per
//! cell family, recall-task generation and the gradient-check suite.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use weinet_core::engine::rng;
use weinet_core::tasks::{generate_recall_example, length_policy};
use weinet_core::training::example_gradient;
use weinet_core::verify::gradcheck_suite;
use weinet_core::{Family, Model, ModelConfig, UpdateVariant};

/// The configurations benchmarked per step, labelled for reports.
pub fn cases() -> Vec<(&'static str, ModelConfig)> {
    let weinet = |variant| ModelConfig {
        family: Family::WeiNet,
        variant,
        ..ModelConfig::default()
    };
    let family = |family| ModelConfig {
        family,
        ..ModelConfig::default()
    };
    vec![
        ("weinet-rowcol", weinet(UpdateVariant::RowCol)),
        ("weinet-fullmatrix", weinet(UpdateVariant::FullMatrix)),
        ("weinet-gated", weinet(UpdateVariant::Gated)),
        (
            "weinet-rowcol-k2",
            ModelConfig {
                memories: 2,
                router: true,
                ..weinet(UpdateVariant::RowCol)
            },
        ),
        ("fw-ln", family(Family::FastWeights)),
        ("lstm", family(Family::Lstm)),
        ("rhn", family(Family::Rhn)),
    ]
}

/// A fixed recall example of nominal length `length` as symbol indices.
pub fn sample_sequence(length: usize) -> (Vec<usize>, usize) {
    let (pairs, pad) = length_policy(length, None).expect("supported length");
    let e = generate_recall_example(pairs, pad, &mut rng::stream(0, 0)).expect("valid pair count");
    (e.indices(), e.target.index())
}

fn example_step(c: &mut Criterion) {
    for length in [9, 50] {
        let mut group = c.benchmark_group(format!("example_gradient/L{length}"));
        let (xs, target) = sample_sequence(length);
        group.throughput(Throughput::Elements(length as u64));
        for (label, cfg) in cases() {
            let model = Model::<f32>::init(&cfg, 1).expect("valid config");
            group.bench_with_input(BenchmarkId::from_parameter(label), &xs, |b, xs| {
                b.iter(|| example_gradient(&model, black_box(xs), target).expect("forward and backward"))
            });
        }
        group.finish();
    }
}

fn task_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_recall_example");
    for length in [9, 30, 50] {
        let (pairs, pad) = length_policy(length, None).expect("supported length");
        let mut r = rng::stream(0, 1);
        group.bench_function(BenchmarkId::from_parameter(length), |b| {
            b.iter(|| generate_recall_example(pairs, pad, &mut r).expect("valid pair count"))
        });
    }
    group.finish();
}

fn gradcheck(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradcheck");
    group.sample_size(10);
    group.bench_function("suite", |b| b.iter(|| gradcheck_suite(1, None).expect("suite runs")));
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    example_step(c);
    task_generation(c);
    gradcheck(c);
}
