use criterion::{criterion_group, criterion_main, Criterion};
use slotbarter::config::ExperimentConfig;
use slotbarter::ecosystem::Privacy;
use slotbarter::harness::{expand_cells, run_paired};
use slotbarter::par::{map_cells, map_cells_sequential};

fn config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.replicates.placements = 4;
    cfg.grid.popularity = Some(vec![0.0, 0.5, 1.0]);
    cfg.grid.privacy = Some(vec![Privacy::Psi, Privacy::Psica]);
    cfg.strategy.exhaustive.grid_steps = 20;
    cfg
}

fn paired_cells(c: &mut Criterion) {
    let cfg = config();
    let cells = expand_cells(&cfg);
    let mut g = c.benchmark_group("paired_cells");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| map_cells(&cells, |x| run_paired(&cfg, x, None).unwrap()))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| map_cells_sequential(&cells, |x| run_paired(&cfg, x, None).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, paired_cells);
criterion_main!(benches);
