use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use arz_ftl::harness::{run_table, Config, RunOptions};
use arz_ftl::Execution;

fn table(c: &mut Criterion) {
    let mut cfg = Config::table1();
    for case in &mut cfg.cases {
        case.particles = vec![100, 500];
        case.reference_l1.clear();
    }
    let opts = RunOptions { timing: false };
    let mut group = c.benchmark_group("table");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| run_table(&cfg, *exec, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, table);
criterion_main!(benches);
