//! Hot-path benchmarks: event queue churn, the per-cell admission decision,
//! and a short end-to-end run.

use cellbridge_core::switch::{gfr_first_cell_decision, DropPolicy, FifoPort, PortConfig};
use cellbridge_core::{Engine, RandomSource, ScenarioFile, SimTime};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

fn event_engine(c: &mut Criterion) {
    const EVENTS: u64 = 10_000;
    let mut group = c.benchmark_group("engine");
    group.throughput(Throughput::Elements(EVENTS));
    group.bench_function("schedule_and_drain_10k", |b| {
        b.iter_batched(
            || {
                let mut engine = Engine::new();
                // Reverse order exercises the heap rather than a sorted fill.
                for i in (0..EVENTS).rev() {
                    engine.schedule(SimTime::from_nanos(i * 50), i);
                }
                engine
            },
            |mut engine| {
                let mut acc = 0u64;
                engine.run_until(SimTime::from_millis(1), |_, _, payload| {
                    acc = acc.wrapping_add(payload);
                });
                acc
            },
            BatchSize::SmallInput,
        );
    });
    group.finish();
}

fn admission_decision(c: &mut Criterion) {
    let cfg = PortConfig {
        capacity_cells: 48_000,
        congestion_threshold_cells: 43_200,
        occupancy_scale: 1.5,
        tag_sensitive: false,
        policy: DropPolicy::GfrProbabilistic,
    };
    // Steady mid-ramp state: every decision takes the probabilistic path.
    let port = FifoPort::new(cfg.clone(), &[200], &[1.0]);
    let account = port.account(0);
    let mut rng = RandomSource::new(1);
    c.bench_function("gfr_first_cell_decision", |b| {
        b.iter(|| gfr_first_cell_decision(&cfg, 250, account, false, rng.next_uniform()));
    });
}

fn end_to_end_run(c: &mut Criterion) {
    let mut file = ScenarioFile::preset("single-drop125k").expect("preset exists");
    file.scenario.duration_s = 0.2;
    let config = file.resolve().expect("preset resolves");
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("single_connection_200ms", |b| {
        b.iter(|| config.build().run());
    });
    group.finish();
}

criterion_group!(benches, event_engine, admission_decision, end_to_end_run);
criterion_main!(benches);
