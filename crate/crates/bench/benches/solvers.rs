use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use garz_bench::{fig1, macro_, micro};
use garz_core::macroscopic::{self, MacroSolver};
use garz_core::microscopic::{self, Tolerances};
use garz_core::KernelFamily;

fn micro_rhs(c: &mut Criterion) {
    let mut g = c.benchmark_group("micro_rhs");
    for n in [126, 501, 2001] {
        let s = micro(n, KernelFamily::Constant);
        let x = s.initial_state();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| microscopic::rhs(&s, black_box(&x)).unwrap())
        });
    }
    g.finish();
}

fn micro_integrate(c: &mut Criterion) {
    let mut g = c.benchmark_group("micro_integrate_t1");
    g.sample_size(10);
    for family in [KernelFamily::Constant, KernelFamily::ConcaveQuadratic] {
        let s = micro(501, family);
        g.bench_function(family.name(), |b| {
            b.iter(|| microscopic::integrate(&s, 1.0, &[1.0], Tolerances::default()).unwrap())
        });
    }
    g.finish();
}

fn macro_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("macro_step");
    for dx in [1e-2, 2.5e-3] {
        let s = macro_(dx, 1.0, KernelFamily::Constant);
        let dt = MacroSolver::new(&s).unwrap().stable_dt();
        g.bench_with_input(BenchmarkId::from_parameter(dx), &dx, |b, _| {
            b.iter_batched(|| MacroSolver::new(&s).unwrap(), |mut sv| sv.step(dt).unwrap(), BatchSize::LargeInput)
        });
    }
    g.finish();
}

fn macro_integrate(c: &mut Criterion) {
    let mut g = c.benchmark_group("macro_integrate_t1");
    g.sample_size(10);
    for dx in [1e-2, 5e-3] {
        let s = macro_(dx, 1.0, KernelFamily::Constant);
        g.bench_with_input(BenchmarkId::from_parameter(dx), &dx, |b, _| {
            b.iter(|| macroscopic::integrate(&s, &[1.0]).unwrap())
        });
    }
    g.finish();
}

fn diagnostics(c: &mut Criterion) {
    let e = fig1(5.0);
    let s = e.micro_scenario().unwrap();
    let tr = microscopic::integrate(&s, e.t_end, &e.output_times, e.tolerances).unwrap();
    c.bench_function("lyapunov_series", |b| b.iter(|| microscopic::lyapunov_series(&tr, &e.index_policy).unwrap()));
}

criterion_group!(benches, micro_rhs, micro_integrate, macro_step, macro_integrate, diagnostics);
criterion_main!(benches);
