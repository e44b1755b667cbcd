use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedprice::experiment::{scenario_bound, scenario_fig1, ExperimentConfig};
use fedprice::game::{solve_so_complete, TypeProfile};
use fedprice::mechanism::{budget_check_complete, design_complete};
use fedprice::par::Execution;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn budget(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let params = cfg.game.params().unwrap();
    let alphas = TypeProfile::new((0..20).map(|i| 0.1 + 0.04 * i as f64).collect(), 1e-4).unwrap();
    let so = solve_so_complete(&alphas, &params).unwrap();
    let scheme = design_complete(&alphas, &so, &params).unwrap();
    let mut g = c.benchmark_group("budget_check_100k");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| budget_check_complete(&so, &scheme, 100_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::default();
    cfg.n_seeds = 8;
    cfg.bound.runs = 16;
    let mut g = c.benchmark_group("scenarios");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("fig1", name), |b| b.iter(|| scenario_fig1(&cfg, exec).unwrap()));
        g.bench_function(BenchmarkId::new("bound", name), |b| b.iter(|| scenario_bound(&cfg, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, budget, sweeps);
criterion_main!(benches);
