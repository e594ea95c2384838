use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use robustcov::diagnostics::f_stat_bruteforce;
use robustcov::opnorm::{estimate_opnorm, OpNormConfig};
use robustcov::p4::{estimate_cov_p4, P4Config};
use robustcov::simulation::sample_gaussian;
use robustcov::{Exec, PsdMatrix};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn opnorm(c: &mut Criterion) {
    let s = sample_gaussian(&PsdMatrix::identity(10), 4000, 1).unwrap();
    let cfg = OpNormConfig { eta: 0.0, ..Default::default() };
    let mut g = c.benchmark_group("opnorm_d10_n4000");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| estimate_opnorm(&s, &cfg, exec).unwrap()));
    }
    g.finish();
}

fn p4(c: &mut Criterion) {
    let s = sample_gaussian(&PsdMatrix::identity(5), 1500, 2).unwrap();
    let cfg = P4Config { eta: 0.0, ..Default::default() };
    let mut g = c.benchmark_group("p4_d5_n500x3");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| estimate_cov_p4(&s, &cfg, exec).unwrap()));
    }
    g.finish();
}

fn brute_force(c: &mut Criterion) {
    let s = sample_gaussian(&PsdMatrix::identity(4), 40, 3).unwrap();
    let mut g = c.benchmark_group("f_stat_n40_k3");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| f_stat_bruteforce(&s, 3, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, opnorm, p4, brute_force);
criterion_main!(benches);
