use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use milsynth_bench::harness::split;
use milsynth_bench::{Domain, DomainSpec, Engine};
use milsynth_core::complexity::{space_size, SpaceParams};
use milsynth_core::{learn, learn_fc, EngineConfig};

fn cfg() -> EngineConfig {
    EngineConfig {
        wall_timeout: Duration::from_secs(30),
        ..Default::default()
    }
}

fn learning(c: &mut Criterion) {
    let mut group = c.benchmark_group("learn");
    group.sample_size(10);
    for domain in [Domain::Droplast, Domain::Chess, Domain::Encryption] {
        for engine in [Engine::Mi, Engine::Fc] {
            let data = split(&DomainSpec::bottom_up(domain, 1), 2, 0, 0);
            let task = domain
                .task(data.train_pos, data.train_neg, true, engine.metarules())
                .expect("generated tasks are valid");
            group.bench_function(format!("{domain}/{engine}"), |b| {
                b.iter(|| match engine {
                    Engine::Mi => black_box(learn(&task, &cfg()).program),
                    Engine::Fc => black_box(learn_fc(&task, &cfg()).ok().and_then(|l| l.program)),
                })
            });
        }
    }
    group.finish();
}

fn spaces(c: &mut Criterion) {
    c.bench_function("space_size", |b| {
        b.iter(|| space_size(black_box(&SpaceParams::new(11, 20, 2, 12).with_k(3)), true))
    });
}

criterion_group!(benches, learning, spaces);
criterion_main!(benches);
