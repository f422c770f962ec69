//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use garz_core::analysis::{self, certify, Subject, Theorem, Verdict};
use garz_core::macroscopic::{self, BoundaryMode, MacroScenario, MacroTrajectory};
use garz_core::microscopic::{self, IndexPolicy, MicroScenario, MicroTrajectory, Tolerances};
use garz_core::{Experiment, Kernel, KernelFamily, LyapunovBound, PiecewiseConstant, Preset, VelocityModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: usize, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed())
}

fn run_micro(e: &Experiment) -> MicroTrajectory {
    let s = e.micro_scenario().unwrap();
    microscopic::integrate(&s, e.t_end, &e.output_times, e.tolerances).unwrap()
}

fn run_macro(e: &Experiment) -> MacroTrajectory {
    macroscopic::integrate(&e.macro_scenario().unwrap(), &e.output_times).unwrap()
}

fn macro_values(tr: &MacroTrajectory) -> Vec<f64> {
    tr.lyapunov().iter().map(|p| p.value).collect()
}

fn scenario_from_gaps(
    family: KernelFamily,
    eta: f64,
    vbar: f64,
    gaps: &[f64],
    omegas: Vec<f64>,
    ell: f64,
) -> MicroScenario {
    let mut x = vec![0.0];
    for g in gaps {
        x.push(x.last().unwrap() + g);
    }
    MicroScenario::new(Kernel::new(family, eta).unwrap(), VelocityModel::Greenshields, vbar, x, omegas, ell).unwrap()
}

/// Least-squares slope of `ln v` against `t`.
fn log_slope(t: &[f64], v: &[f64]) -> f64 {
    let y: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let den: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    num / den
}

fn fig1_micro(tr: &MicroTrajectory, elapsed: Duration) -> Outcome {
    let ly = microscopic::lyapunov_series(tr, &IndexPolicy::Apriori).unwrap();
    let l0 = ly.values[0].ln();
    let l20 = ly.values.last().unwrap().ln();
    let rate = match ly.bound {
        LyapunovBound::Constant { rate, .. } => rate,
        _ => f64::NAN,
    };
    let excess = ly.bound.excess(&ly.values).unwrap_or(f64::INFINITY);
    let pass = (l0 + 5.72).abs() <= 0.15
        && (l20 + 16.19).abs() <= 0.40
        && (rate + 0.5).abs() <= 1e-12
        && excess <= 1e-6
        && elapsed <= Duration::from_secs(300);
    outcome(
        1,
        "micro Lyapunov decay, constant kernel",
        pass,
        format!(
            "ln L(0) = {l0:.4}, ln L(20) = {l20:.4}, rate = {rate}, excess = {excess:.2e}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn fig1_macro(tr: &MacroTrajectory, elapsed: Duration) -> Outcome {
    let v = macro_values(tr);
    let l0 = v[0].ln();
    let l20 = v.last().unwrap().ln();
    let pass = (l0 + 5.70).abs() <= 0.10 && (l20 + 16.18).abs() <= 0.40 && elapsed <= Duration::from_secs(600);
    outcome(
        2,
        "macro Lyapunov decay, constant kernel",
        pass,
        format!("ln L(0) = {l0:.4}, ln L(20) = {l20:.4}, dx = {}, {:.1} s", tr.scenario().dx, elapsed.as_secs_f64()),
    )
}

fn plateau(tr: &MacroTrajectory) -> Outcome {
    let st = tr.at(1.0).unwrap();
    let peak = (0..st.n_cells())
        .filter(|&j| st.center(j) > 0.0 && st.center(j) < st.beta)
        .map(|j| st.rho[j])
        .fold(0.0, f64::max);
    let last = (0..st.n_cells()).filter(|&j| st.center(j) < st.beta).last().unwrap();
    let tail = st.rho[last];
    let pass = (peak - 0.5405).abs() <= 0.01 && (tail - 0.2).abs() <= 0.005;
    outcome(
        3,
        "density plateau and tail at T = 1",
        pass,
        format!("plateau = {peak:.4}, tail = {tail:.4} at x = {:.5}", st.center(last)),
    )
}

fn stability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_917);
    let mut worst = f64::NEG_INFINITY;
    let mut all_pass = true;
    for _ in 0..100 {
        let n_cars = rng.gen_range(5..=50usize);
        let family = KernelFamily::ALL[rng.gen_range(0..KernelFamily::ALL.len())];
        let eta = rng.gen_range(0.2..2.0);
        let omegas: Vec<f64> = (1..n_cars).map(|_| rng.gen_range(0.5..=1.0)).collect();
        let min_omega = omegas.iter().copied().fold(f64::INFINITY, f64::min);
        let vbar = min_omega * rng.gen_range(0.05..0.95);
        let ell = rng.gen_range(0.005..0.05);
        let probe = scenario_from_gaps(family, eta, vbar, &vec![ell; n_cars - 1], omegas.clone(), ell);
        let lbar = probe.equilibrium_gaps().unwrap();
        let s = scenario_from_gaps(family, eta, vbar, &lbar, omegas, ell);
        let diag = microscopic::jacobian_diagonal(&s).unwrap();
        let m = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(m);
        let rep = certify(Subject::MicroScenario(&s), Theorem::Stability).unwrap();
        all_pass &= rep.verdict == Verdict::Pass;
    }
    outcome(
        4,
        "negative linearization at equilibrium, 100 random scenarios",
        worst < -1e-12 && all_pass,
        format!("largest diagonal entry = {worst:.3e}"),
    )
}

fn concave_decreasing_scenario() -> MicroScenario {
    let ell = 0.01;
    let n = 30;
    let gaps: Vec<f64> = (0..n).map(|i| ell * (2.0 + 1.5 * (n - i) as f64 / n as f64)).collect();
    scenario_from_gaps(KernelFamily::ConcaveQuadratic, 0.5, 0.5, &gaps, vec![1.0; n], ell)
}

fn concave_increasing_scenario() -> MicroScenario {
    let ell = 0.01;
    let n = 40;
    let gaps: Vec<f64> = (0..n).map(|i| ell * (0.9 + 0.9 * i as f64 / n as f64)).collect();
    scenario_from_gaps(KernelFamily::ConcaveQuadratic, 0.5, 0.5, &gaps, vec![1.0; n], ell)
}

fn max_principle(fig1: &MicroTrajectory) -> Outcome {
    let a = certify(Subject::Micro(fig1), Theorem::MaxPrinciple).unwrap();
    let s = concave_decreasing_scenario();
    let tr = microscopic::integrate(&s, 10.0, &[], Tolerances::default()).unwrap();
    let b = certify(Subject::Micro(&tr), Theorem::MaxPrinciple).unwrap();
    let wa = a.worst_violation.unwrap_or(f64::INFINITY);
    let wb = b.worst_violation.unwrap_or(f64::INFINITY);
    outcome(
        5,
        "gap confinement, constant and concave kernels",
        a.verdict == Verdict::Pass && b.verdict == Verdict::Pass && wa <= 1e-8 && wb <= 1e-8,
        format!("constant: {} ({wa:.2e}), concave: {} ({wb:.2e})", a.verdict.name(), b.verdict.name()),
    )
}

fn monotone() -> Outcome {
    let s = concave_increasing_scenario();
    let tr = microscopic::integrate(&s, 10.0, &[], Tolerances::default()).unwrap();
    let rep = certify(Subject::Micro(&tr), Theorem::MonotoneGaps).unwrap();
    let w = rep.worst_violation.unwrap_or(f64::INFINITY);
    outcome(
        6,
        "gap monotonicity preserved, concave kernel",
        rep.verdict == Verdict::Pass && w <= 1e-10,
        format!("{} (worst break {w:.2e})", rep.verdict.name()),
    )
}

fn alpha_consistency(sharp: &MacroTrajectory, clamp: &MacroTrajectory) -> Outcome {
    let dev = macroscopic::alpha_ode_check(sharp);
    let dx = sharp.scenario().dx;
    outcome(
        7,
        "window boundary from mass matches its ODE",
        dev <= 2.0 * dx,
        format!(
            "max deviation = {dev:.5} (2 dx = {}), clamped realization {:.5}",
            2.0 * dx,
            macroscopic::alpha_ode_check(clamp)
        ),
    )
}

fn window_mass() -> Outcome {
    let s = MacroScenario::new(
        Kernel::new(KernelFamily::Constant, 0.5).unwrap(),
        VelocityModel::Greenshields,
        PiecewiseConstant::constant(0.0, 1.5, 0.3).unwrap(),
        PiecewiseConstant::constant(0.0, 1.5, 1.0).unwrap(),
        0.5,
        2.5e-3,
        5.0,
    )
    .unwrap();
    let tr = macroscopic::integrate(&s, &[5.0]).unwrap();
    let rep = certify(Subject::Macro(&tr), Theorem::WindowMass).unwrap();
    let gap = (tr.c_rho() - 0.15).abs();
    outcome(
        8,
        "minimal window mass equals the initial window mass",
        rep.verdict == Verdict::Pass && gap <= 1e-6 * 0.5,
        format!("c_rho = {:.9}, |c_rho - 0.15| = {gap:.2e}, {}", tr.c_rho(), rep.verdict.name()),
    )
}

fn convergence() -> Outcome {
    let n_list = [126, 251, 501];
    let study = |mode| {
        let s = Preset::Fig1Fig2.experiment().macro_scenario().unwrap().with_boundary(mode);
        analysis::convergence_study(&s, &n_list, &[2.5e-3], 1.0).unwrap()
    };
    let fmt =
        |t: &analysis::ConvergenceTable| t.errors.iter().map(|r| format!("{:.6}", r[0])).collect::<Vec<_>>().join(", ");
    let sharp = study(BoundaryMode::SharpFront);
    let clamp = study(BoundaryMode::Clamp);
    outcome(
        9,
        "micro to macro L1 error decreases with N",
        sharp.decreasing_in_n[0],
        format!("errors {} (clamped realization {})", fmt(&sharp), fmt(&clamp)),
    )
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn conservation(micro: &MicroTrajectory, macro_: &MacroTrajectory) -> Outcome {
    let balance = macro_.balance_residual();
    let s = micro.scenario();
    let x_lead = *s.x0().last().unwrap();
    let leader = micro.samples().iter().map(|st| (st.leader() - (x_lead + s.vbar() * st.t)).abs()).fold(0.0, f64::max);

    let short = Experiment { t_end: 2.0, output_times: vec![1.0, 2.0], ..Preset::Fig1Fig2.experiment() };
    let (m1, m2) = (run_micro(&short), run_micro(&short));
    let (c1, c2) = (run_macro(&short), run_macro(&short));
    let micro_same = m1.samples().len() == m2.samples().len()
        && m1.samples().iter().zip(m2.samples()).all(|(a, b)| a.t.to_bits() == b.t.to_bits() && same_bits(&a.x, &b.x));
    let macro_same = same_bits(&macro_values(&c1), &macro_values(&c2))
        && c1.samples().iter().zip(c2.samples()).all(|(a, b)| same_bits(&a.rho, &b.rho) && same_bits(&a.q, &b.q));
    outcome(
        10,
        "conservation, exact leader, bitwise reruns",
        balance <= 1e-12 && leader <= 1e-12 && micro_same && macro_same,
        format!("balance {balance:.2e}, leader error {leader:.2e}, micro identical {micro_same}, macro identical {macro_same}"),
    )
}

fn low_density(tr: &MicroTrajectory) -> Outcome {
    let all = microscopic::lyapunov_series(tr, &IndexPolicy::All).unwrap();
    let finite = all.values.iter().all(|v| v.is_finite());
    let v = &all.values;
    let start = (1..v.len()).find(|&k| v[k] > v[k - 1]).map(|k| k - 1);
    let (t0, t1) = match start {
        Some(s) => {
            let end = (s + 1..v.len()).take_while(|&k| v[k] > v[k - 1]).last().unwrap();
            (all.times[s], all.times[end])
        }
        None => (f64::NAN, f64::NAN),
    };
    let rises = t0 <= 0.5 * all.times.last().unwrap();
    let j = microscopic::lyapunov_series(tr, &IndexPolicy::Apriori).unwrap();
    let excess = j.bound.excess(&j.values).unwrap_or(f64::INFINITY);
    outcome(
        11,
        "all-cars sum rises first, restricted sum obeys its bound",
        finite && rises && excess <= 1e-6,
        format!("increasing on [{t0}, {t1}], J = {}, excess = {excess:.2e}", j.indices[0]),
    )
}

fn three_state(runs: &[(KernelFamily, MicroTrajectory, MacroTrajectory)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (family, micro, macro_) in runs {
        let policy = match microscopic::compute_j(micro.scenario()).unwrap() {
            Some(_) => IndexPolicy::Apriori,
            None => IndexPolicy::All,
        };
        let ly = microscopic::lyapunov_series(micro, &policy).unwrap();
        let mv = macro_values(macro_);
        let mt: Vec<f64> = macro_.lyapunov().iter().map(|p| p.t).collect();
        let micro_slope = log_slope(&ly.times, &ly.values);
        let macro_slope = log_slope(&mt, &mv);
        let micro_drop = ly.values.last().unwrap().ln() - ly.values[0].ln();
        let macro_drop = mv.last().unwrap().ln() - mv[0].ln();
        let micro_cert = certify(Subject::Micro(micro), Theorem::LyapunovConcave).unwrap().verdict;
        let macro_cert = certify(Subject::Macro(macro_), Theorem::LyapunovMacro).unwrap().verdict;
        pass &= micro_slope < 0.0
            && macro_slope < 0.0
            && micro_drop < 0.0
            && macro_drop < 0.0
            && micro_cert == Verdict::NotApplicable
            && macro_cert == Verdict::NotApplicable;
        parts.push(format!(
            "{}: micro slope {micro_slope:.3} drop {micro_drop:.2} ({}), macro slope {macro_slope:.3} drop {macro_drop:.2} ({})",
            family.name(),
            micro_cert.name(),
            macro_cert.name()
        ));
    }
    outcome(12, "decay outside the certified kernels", pass, parts.join("; "))
}

fn main() -> ExitCode {
    let fig1 = Preset::Fig1Fig2.experiment();
    let sharp = Experiment { boundary: BoundaryMode::SharpFront, ..fig1.clone() };
    let fig3 = Preset::Fig3LowDensity.experiment();
    let fig4 = Preset::Fig4ThreeState.experiment();

    let mut results = std::thread::scope(|sc| {
        let micro1 = sc.spawn(|| timed(|| run_micro(&fig1)));
        let macro1 = sc.spawn(|| timed(|| run_macro(&fig1)));
        let macro_sharp = sc.spawn(|| run_macro(&sharp));
        let micro3 = sc.spawn(|| run_micro(&fig3));
        let fig4_runs: Vec<_> = [KernelFamily::LinearPositive, KernelFamily::ConvexQuadratic]
            .into_iter()
            .map(|f| {
                let e = fig4.clone().with_kernel(f).unwrap();
                sc.spawn(move || (f, run_micro(&e), run_macro(&e)))
            })
            .collect();
        let c4 = sc.spawn(stability);
        let c6 = sc.spawn(monotone);
        let c8 = sc.spawn(window_mass);
        let c9 = sc.spawn(convergence);

        let (micro1, t_micro) = micro1.join().unwrap();
        let (macro1, t_macro) = macro1.join().unwrap();
        let macro_sharp = macro_sharp.join().unwrap();
        let fig4_runs: Vec<_> = fig4_runs.into_iter().map(|h| h.join().unwrap()).collect();
        vec![
            fig1_micro(&micro1, t_micro),
            fig1_macro(&macro1, t_macro),
            plateau(&macro1),
            c4.join().unwrap(),
            max_principle(&micro1),
            c6.join().unwrap(),
            alpha_consistency(&macro_sharp, &macro1),
            c8.join().unwrap(),
            c9.join().unwrap(),
            conservation(&micro1, &macro1),
            low_density(&micro3.join().unwrap()),
            three_state(&fig4_runs),
        ]
    });
    results.sort_by_key(|o| o.id);

    let mut failed = 0;
    for o in &results {
        println!("criterion {:2} {} {}: {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
