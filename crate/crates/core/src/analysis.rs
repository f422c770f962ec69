//! Micro/macro comparison, convergence tables and theorem certificates.

use std::fmt;
use std::str::FromStr;

use crate::error::{GarzError, Result};
use crate::macroscopic::{self, MacroScenario, MacroTrajectory};
use crate::microscopic::{self, IndexPolicy, MicroScenario, MicroTrajectory, Tolerances};
use crate::profile::PiecewiseConstant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub t: f64,
    pub l1_error: f64,
    pub n_cars: usize,
    pub dx: f64,
}

/// `int_lo^hi |p - q|`, exact for step functions; points outside a profile read zero.
pub fn l1_distance(p: &PiecewiseConstant, q: &PiecewiseConstant, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut pts = vec![lo, hi];
    for r in [p, q] {
        pts.extend(r.breakpoints_in(lo, hi));
        for e in [r.a(), r.b()] {
            if e > lo && e < hi {
                pts.push(e);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (p.value_at(m).unwrap_or(0.0) - q.value_at(m).unwrap_or(0.0)).abs() * (w[1] - w[0])
        })
        .sum()
}

fn check_physics(micro: &MicroScenario, macro_: &MacroScenario) -> Result<()> {
    let mut diff = Vec::new();
    if micro.kernel() != &macro_.kernel {
        diff.push("kernel");
    }
    if micro.velocity() != &macro_.velocity {
        diff.push("velocity");
    }
    if micro.vbar() != macro_.vbar {
        diff.push("control speed");
    }
    if diff.is_empty() {
        Ok(())
    } else {
        Err(GarzError::MismatchedPhysics(diff.join(", ")))
    }
}

/// L1 distance at `t` over `[x_0(t), min(x_N(t), beta(t))]`.
pub fn micro_macro_l1(micro: &MicroTrajectory, macro_: &MacroTrajectory, t: f64) -> Result<ComparisonReport> {
    check_physics(micro.scenario(), macro_.scenario())?;
    let ms = micro.at(t)?;
    let cs = macro_.at(t)?;
    let p = microscopic::density_profile(micro.scenario(), ms)?;
    let q = cs.density_profile();
    let lo = ms.x[0];
    let hi = ms.leader().min(cs.beta);
    Ok(ComparisonReport {
        t,
        l1_error: l1_distance(&p, &q, lo, hi),
        n_cars: micro.scenario().n_cars(),
        dx: macro_.scenario().dx,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub t: f64,
    pub n_list: Vec<usize>,
    pub dx_list: Vec<f64>,
    /// `errors[i][k]` for `n_list[i]` and `dx_list[k]`.
    pub errors: Vec<Vec<f64>>,
    /// Per grid width, whether the error strictly decreases along `n_list`.
    pub decreasing_in_n: Vec<bool>,
    /// Per car count, whether the error strictly decreases along `dx_list`.
    pub decreasing_in_dx: Vec<bool>,
}

fn strictly_decreasing(v: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = v.collect();
    v.windows(2).all(|w| w[1] < w[0])
}

/// L1 errors at `t` for every pair of car count and cell width, with the
/// micro scenario built from the macroscopic initial data.
pub fn convergence_study(
    scenario: &MacroScenario,
    n_list: &[usize],
    dx_list: &[f64],
    t: f64,
) -> Result<ConvergenceTable> {
    let base = MacroScenario { t_end: t, ..scenario.clone() };
    base.validate()?;
    let (micros, macros) = std::thread::scope(|sc| {
        let micro_jobs: Vec<_> = n_list
            .iter()
            .map(|&n| {
                let s = &base;
                sc.spawn(move || {
                    let m = MicroScenario::from_profiles(s.kernel, s.velocity, s.vbar, &s.rho0, &s.omega0, n)?;
                    microscopic::integrate(&m, t, &[t], Tolerances::default())
                })
            })
            .collect();
        let macro_jobs: Vec<_> = dx_list
            .iter()
            .map(|&dx| {
                let s = &base;
                sc.spawn(move || macroscopic::integrate(&s.clone().with_dx(dx)?, &[t]))
            })
            .collect();
        let micros: Vec<Result<MicroTrajectory>> = micro_jobs.into_iter().map(|h| h.join().unwrap()).collect();
        let macros: Vec<Result<MacroTrajectory>> = macro_jobs.into_iter().map(|h| h.join().unwrap()).collect();
        (micros, macros)
    });
    let micros = micros.into_iter().collect::<Result<Vec<_>>>()?;
    let macros = macros.into_iter().collect::<Result<Vec<_>>>()?;
    let mut errors = Vec::with_capacity(n_list.len());
    for mi in &micros {
        errors.push(macros.iter().map(|ma| micro_macro_l1(mi, ma, t).map(|r| r.l1_error)).collect::<Result<Vec<_>>>()?);
    }
    let decreasing_in_n = (0..dx_list.len()).map(|k| strictly_decreasing(errors.iter().map(|r| r[k]))).collect();
    let decreasing_in_dx = errors.iter().map(|r| strictly_decreasing(r.iter().copied())).collect();
    Ok(ConvergenceTable {
        t,
        n_list: n_list.to_vec(),
        dx_list: dx_list.to_vec(),
        errors,
        decreasing_in_n,
        decreasing_in_dx,
    })
}

/// Results that can be certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// Negative diagonal of the gap linearization at equilibrium.
    Stability,
    /// Gaps stay between their initial value and equilibrium.
    MaxPrinciple,
    /// Exponential Lyapunov decay for the constant kernel.
    LyapunovConstant,
    /// Lyapunov decay for concave kernels and monotone data.
    LyapunovConcave,
    /// Lyapunov decay of the density model.
    LyapunovMacro,
    /// Monotone gaps stay monotone.
    MonotoneGaps,
    /// Window mass threshold equals the initial window mass.
    WindowMass,
}

impl Theorem {
    pub const ALL: [Theorem; 7] = [
        Theorem::Stability,
        Theorem::MaxPrinciple,
        Theorem::LyapunovConstant,
        Theorem::LyapunovConcave,
        Theorem::LyapunovMacro,
        Theorem::MonotoneGaps,
        Theorem::WindowMass,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Theorem::Stability => "T1_stability",
            Theorem::MaxPrinciple => "L1_maxprinciple",
            Theorem::LyapunovConstant => "T2_constant",
            Theorem::LyapunovConcave => "T3_concave",
            Theorem::LyapunovMacro => "T4_macro",
            Theorem::MonotoneGaps => "LA1_monotone",
            Theorem::WindowMass => "L3_crho",
        }
    }

    pub fn is_macro(self) -> bool {
        matches!(self, Theorem::LyapunovMacro | Theorem::WindowMass)
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Theorem {
    type Err = GarzError;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL.into_iter().find(|t| t.id() == s).ok_or_else(|| GarzError::UnknownTheorem(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "not-applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub theorem: Theorem,
    pub hypotheses: Vec<(String, bool)>,
    /// Measured violation of the conclusion, compared against `tolerance`.
    pub worst_violation: Option<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub note: String,
}

impl CertificateReport {
    fn new(theorem: Theorem, hypotheses: Vec<(String, bool)>, tolerance: f64) -> Self {
        Self {
            theorem,
            hypotheses,
            worst_violation: None,
            tolerance,
            verdict: Verdict::NotApplicable,
            note: String::new(),
        }
    }

    fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(|(_, ok)| *ok)
    }

    fn conclude(mut self, worst: f64, note: impl Into<String>) -> Self {
        self.note = note.into();
        if !self.hypotheses_hold() {
            self.verdict = Verdict::NotApplicable;
            self.worst_violation = Some(worst);
            return self;
        }
        self.worst_violation = Some(worst);
        self.verdict = if worst <= self.tolerance { Verdict::Pass } else { Verdict::Fail };
        self
    }

    fn skip(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self.verdict = Verdict::NotApplicable;
        self
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {}", self.theorem, self.verdict.name())?;
        for (h, ok) in &self.hypotheses {
            writeln!(f, "  [{}] {h}", if *ok { "x" } else { " " })?;
        }
        match self.worst_violation {
            Some(w) => writeln!(f, "  worst violation {w:e} (tolerance {:e})", self.tolerance)?,
            None => writeln!(f, "  worst violation n/a")?,
        }
        if !self.note.is_empty() {
            writeln!(f, "  {}", self.note)?;
        }
        Ok(())
    }
}

/// What a certificate is evaluated on.
#[derive(Debug, Clone, Copy)]
pub enum Subject<'a> {
    MicroScenario(&'a MicroScenario),
    Micro(&'a MicroTrajectory),
    Macro(&'a MacroTrajectory),
}

pub const STABILITY_MARGIN: f64 = -1e-12;
pub const MAX_PRINCIPLE_TOL: f64 = 1e-8;
pub const MICRO_BOUND_TOL: f64 = 1e-6;
pub const MACRO_BOUND_TOL: f64 = 1e-3;
pub const MONOTONE_TOL: f64 = 1e-10;
/// Relative to `eta`.
pub const WINDOW_MASS_TOL: f64 = 1e-6;

/// Checks the hypotheses of `theorem` on `subject`, then its conclusion.
pub fn certify(subject: Subject<'_>, theorem: Theorem) -> Result<CertificateReport> {
    match (theorem, subject) {
        (Theorem::Stability, Subject::MicroScenario(s)) => stability(s),
        (Theorem::Stability, Subject::Micro(tr)) => stability(tr.scenario()),
        (t, Subject::Macro(tr)) if t.is_macro() => certify_macro(tr, t),
        (t, Subject::Micro(tr)) if !t.is_macro() => certify_micro(tr, t),
        (t, _) => {
            let need = if t.is_macro() { "a density trajectory" } else { "a car trajectory" };
            Ok(CertificateReport::new(t, Vec::new(), 0.0).skip(format!("requires {need}")))
        }
    }
}

fn stability(s: &MicroScenario) -> Result<CertificateReport> {
    let min_omega = s.omegas().iter().copied().fold(f64::INFINITY, f64::min);
    let feasible = s.vbar() <= min_omega;
    let admissible = s.velocity().vprime_max(s.omegas()).is_ok();
    let rep = CertificateReport::new(
        Theorem::Stability,
        vec![
            ("control speed below every marker".into(), feasible),
            ("velocity strictly decreasing".into(), admissible),
        ],
        STABILITY_MARGIN,
    );
    if !(feasible && admissible) {
        return Ok(rep.skip("no equilibrium to linearize around"));
    }
    let diag = microscopic::jacobian_diagonal(s)?;
    let worst = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(rep.conclude(worst, "worst violation is the largest diagonal entry"))
}

fn concave_case(tr: &MicroTrajectory, j: usize) -> Result<bool> {
    microscopic::concave_decay_applies(tr.scenario(), j)
}

fn certify_micro(tr: &MicroTrajectory, theorem: Theorem) -> Result<CertificateReport> {
    let s = tr.scenario();
    let j = microscopic::compute_j(s)?;
    let reach = ("a priori index J exists".to_string(), j.is_some());
    let Some(j) = j else {
        let tol = match theorem {
            Theorem::MaxPrinciple => MAX_PRINCIPLE_TOL,
            Theorem::MonotoneGaps => MONOTONE_TOL,
            _ => MICRO_BOUND_TOL,
        };
        return Ok(CertificateReport::new(theorem, vec![reach], tol).skip("no car satisfies the reach condition"));
    };
    let constant = s.kernel().is_constant();
    let concave = concave_case(tr, j)?;
    let case_b = "concave kernel, one marker and monotone gaps on one side of equilibrium".to_string();
    match theorem {
        Theorem::MaxPrinciple => {
            let rep = CertificateReport::new(
                theorem,
                vec![reach, ("constant kernel or the concave monotone case".into(), constant || concave)],
                MAX_PRINCIPLE_TOL,
            );
            let worst = microscopic::max_principle_check(tr, j)?.worst;
            Ok(rep.conclude(worst, format!("gaps {j}..{}", s.n_gaps())))
        }
        Theorem::MonotoneGaps => {
            let rep = CertificateReport::new(theorem, vec![reach, (case_b, concave)], MONOTONE_TOL);
            match microscopic::monotone_gaps(tr, j) {
                Some(w) => Ok(rep.conclude(w, format!("gaps {j}..{}", s.n_gaps()))),
                None => Ok(rep.skip("initial gaps are not monotone")),
            }
        }
        Theorem::LyapunovConstant | Theorem::LyapunovConcave => {
            let hyp = if theorem == Theorem::LyapunovConstant {
                ("constant kernel".to_string(), constant)
            } else {
                (case_b, concave)
            };
            let rep = CertificateReport::new(theorem, vec![reach, hyp], MICRO_BOUND_TOL);
            if !rep.hypotheses_hold() {
                return Ok(rep.skip("hypotheses not met"));
            }
            let ly = microscopic::lyapunov_series(tr, &IndexPolicy::Apriori)?;
            match ly.bound.excess(&ly.values) {
                Some(w) => Ok(rep.conclude(w, "worst violation is max L / bound - 1")),
                None => Ok(rep.skip("no bound available")),
            }
        }
        _ => unreachable!(),
    }
}

fn certify_macro(tr: &MacroTrajectory, theorem: Theorem) -> Result<CertificateReport> {
    let s = tr.scenario();
    match theorem {
        Theorem::LyapunovMacro => {
            let rep = CertificateReport::new(
                theorem,
                vec![(
                    "constant kernel, or concave kernel with one marker and monotone data near b".into(),
                    macroscopic::macro_decay_applies(s),
                )],
                MACRO_BOUND_TOL,
            );
            let values: Vec<f64> = tr.lyapunov().iter().map(|p| p.value).collect();
            match macroscopic::bound_macro(tr).excess(&values) {
                Some(w) => Ok(rep.conclude(w, "worst violation is max L / bound - 1")),
                None => Ok(rep.skip("hypotheses not met")),
            }
        }
        Theorem::WindowMass => {
            let rep = CertificateReport::new(
                theorem,
                vec![(
                    "one marker and density below equilibrium, or constant kernel with fast start".into(),
                    macroscopic::window_mass_shortcut_applies(s),
                )],
                WINDOW_MASS_TOL * s.eta(),
            );
            let want = s.rho0.integral(s.b() - s.eta(), s.b());
            Ok(rep.conclude((tr.c_rho() - want).abs(), format!("c_rho = {}, initial window mass = {want}", tr.c_rho())))
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Kernel, KernelFamily};
    use crate::velocity::VelocityModel;

    #[test]
    fn l1_of_shifted_steps() {
        let p = PiecewiseConstant::new(&[(0.0, 1.0), (1.0, 0.5)], 2.0).unwrap();
        let q = PiecewiseConstant::new(&[(0.5, 1.0)], 2.5).unwrap();
        // |1-0| on [0,.5], 0 on [.5,1], .5 on [1,2], on [2,2.5] q=1 outside the window
        assert!((l1_distance(&p, &q, 0.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((l1_distance(&p, &q, 0.0, 2.5) - 1.5).abs() < 1e-15);
        assert_eq!(l1_distance(&p, &p, 0.0, 2.0), 0.0);
    }

    #[test]
    fn theorem_ids_round_trip() {
        for t in Theorem::ALL {
            assert_eq!(t.id().parse::<Theorem>().unwrap(), t);
        }
        assert!(matches!("T9".parse::<Theorem>(), Err(GarzError::UnknownTheorem(_))));
    }

    fn equilibrium_micro() -> MicroScenario {
        // rho_eq = 0.5 at omega = 1, vbar = 0.5
        let rho = PiecewiseConstant::constant(0.0, 1.5, 0.5).unwrap();
        let omega = PiecewiseConstant::constant(0.0, 1.5, 1.0).unwrap();
        MicroScenario::from_profiles(
            Kernel::new(KernelFamily::Constant, 0.5).unwrap(),
            VelocityModel::Greenshields,
            0.5,
            &rho,
            &omega,
            76,
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_certificates() {
        let s = equilibrium_micro();
        let tr = microscopic::integrate(&s, 2.0, &[], Tolerances::default()).unwrap();
        let r = certify(Subject::Micro(&tr), Theorem::MaxPrinciple).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r}");
        assert!(r.worst_violation.unwrap() < 1e-12);
        let r = certify(Subject::MicroScenario(&s), Theorem::Stability).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r}");
        for t in [Theorem::LyapunovConstant, Theorem::LyapunovConcave, Theorem::MonotoneGaps] {
            let r = certify(Subject::Micro(&tr), t).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "{r}");
        }
        let r = certify(Subject::MicroScenario(&s), Theorem::WindowMass).unwrap();
        assert_eq!(r.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn mismatched_physics_rejected() {
        let s = equilibrium_micro();
        let tr = microscopic::integrate(&s, 1.0, &[1.0], Tolerances::default()).unwrap();
        let m = MacroScenario::new(
            Kernel::new(KernelFamily::LinearVanishing, 0.5).unwrap(),
            VelocityModel::Greenshields,
            PiecewiseConstant::constant(0.0, 1.5, 0.5).unwrap(),
            PiecewiseConstant::constant(0.0, 1.5, 1.0).unwrap(),
            0.5,
            0.01,
            1.0,
        )
        .unwrap();
        let mt = macroscopic::integrate(&m, &[1.0]).unwrap();
        assert!(matches!(micro_macro_l1(&tr, &mt, 1.0), Err(GarzError::MismatchedPhysics(_))));
    }

    #[test]
    fn equilibrium_comparison_is_small() {
        let m = MacroScenario::new(
            Kernel::new(KernelFamily::Constant, 0.5).unwrap(),
            VelocityModel::Greenshields,
            PiecewiseConstant::constant(0.0, 1.5, 0.5).unwrap(),
            PiecewiseConstant::constant(0.0, 1.5, 1.0).unwrap(),
            0.5,
            0.005,
            1.0,
        )
        .unwrap();
        let table = convergence_study(&m, &[76], &[0.01, 0.005], 1.0).unwrap();
        // only the smeared tail of the density scheme differs
        for e in &table.errors[0] {
            assert!(*e < 0.02, "{e}");
        }
        assert!(table.decreasing_in_dx[0]);
    }
}
