use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use kgprobe_bench::{chain_forest, places, places_suite, slot_pattern};
use kgprobe_core::oracles::metamorphic::check_responses;
use kgprobe_core::oracles::ontological::graph_checker;
use kgprobe_core::testgen::{generate_suite, TemplateRegistry};

fn ontological(c: &mut Criterion) {
    let mut group = c.benchmark_group("graph_checker");
    for (chains, len) in [(50, 5), (200, 10), (100, 40)] {
        let g = chain_forest(chains, len);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{chains}x{len}")), &g, |b, g| {
            b.iter(|| graph_checker(black_box(g)))
        });
    }
    group.finish();
}

fn metamorphic(c: &mut Criterion) {
    let suite = places_suite();
    let responses: Vec<_> = (0..suite.plans.len()).map(slot_pattern).collect();
    c.bench_function("check_responses/places", |b| {
        b.iter(|| {
            suite
                .plans
                .iter()
                .zip(&responses)
                .map(|(p, r)| check_responses("bench", p, r).1.total().errors)
                .sum::<usize>()
        })
    });
}

fn generation(c: &mut Criterion) {
    let (graph, paths) = places();
    let registry = TemplateRegistry::builtin();
    c.bench_function("generate_suite/places", |b| {
        b.iter(|| generate_suite(black_box(&graph), &paths, &registry, true).unwrap())
    });
}

criterion_group!(benches, ontological, metamorphic, generation);
criterion_main!(benches);
