//! CSV emission. Floats carry 17 significant digits; lines end in LF.

use std::fmt::Write as _;

use garz_core::analysis::{CertificateReport, ComparisonReport, ConvergenceTable};
use garz_core::macroscopic::{MacroScenario, MacroState};
use garz_core::microscopic::{MicroScenario, MicroState};

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const MICRO_HEADER: &str = "t,i,x,gap,density";
pub const MACRO_HEADER: &str = "t,x_center,rho,q,omega,rho_eq";
pub const LYAPUNOV_HEADER: &str = "t,L,ln_L,bound,ln_bound,alpha,beta";

fn micro_rows(out: &mut String, scenario: &MicroScenario, state: &MicroState) {
    let n = state.x.len();
    for (i, &x) in state.x.iter().enumerate() {
        let (gap, density) = if i + 1 < n {
            let y = state.x[i + 1] - x;
            (num(y), num(scenario.ell() / y))
        } else {
            (String::new(), String::new())
        };
        let _ = writeln!(out, "{},{i},{},{gap},{density}", num(state.t), num(x));
    }
}

/// One row per car; the leader has no gap ahead and leaves both fields empty.
pub fn micro_csv<'a>(scenario: &MicroScenario, states: impl IntoIterator<Item = &'a MicroState>) -> String {
    let mut out = format!("{MICRO_HEADER}\n");
    for st in states {
        micro_rows(&mut out, scenario, st);
    }
    out
}

pub fn macro_csv(scenario: &MacroScenario, state: &MacroState) -> String {
    let mut out = format!("{MACRO_HEADER}\n");
    let omega = state.omega(scenario.omega_b());
    let eq = state.equilibrium_field(scenario);
    for j in 0..state.n_cells() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(state.t),
            num(state.center(j)),
            num(state.rho[j]),
            num(state.q[j]),
            num(omega[j]),
            num(eq[j])
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovRow {
    pub t: f64,
    pub value: f64,
    pub bound: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

pub fn lyapunov_csv(rows: &[LyapunovRow]) -> String {
    let mut out = format!("{LYAPUNOV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(r.t),
            num(r.value),
            num(r.value.ln()),
            opt(r.bound),
            opt(r.bound.map(f64::ln)),
            opt(r.alpha),
            opt(r.beta)
        );
    }
    out
}

pub fn certificates_csv(reports: &[(&str, CertificateReport)]) -> String {
    let mut out = String::from("theorem,scale,verdict,hypotheses_met,worst_violation,tolerance,note\n");
    for (scale, r) in reports {
        let met = r.hypotheses.iter().all(|(_, ok)| *ok);
        let _ = writeln!(
            out,
            "{},{scale},{},{met},{},{},{}",
            r.theorem,
            r.verdict.name(),
            opt(r.worst_violation),
            num(r.tolerance),
            quote(&r.note)
        );
    }
    out
}

pub fn certificates_text(reports: &[(&str, CertificateReport)]) -> String {
    let mut out = String::new();
    for (scale, r) in reports {
        let _ = write!(out, "[{scale}] {r}");
    }
    out
}

pub fn comparison_csv(reports: &[ComparisonReport]) -> String {
    let mut out = String::from("t,l1_error,n_cars,dx\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{},{}", num(r.t), num(r.l1_error), r.n_cars, num(r.dx));
    }
    out
}

pub fn convergence_csv(table: &ConvergenceTable) -> String {
    let mut out = String::from("t,n_cars,dx,l1_error\n");
    for (n, row) in table.n_list.iter().zip(&table.errors) {
        for (dx, e) in table.dx_list.iter().zip(row) {
            let _ = writeln!(out, "{},{n},{},{}", num(table.t), num(*dx), num(*e));
        }
    }
    out
}

/// File-name form of a sample time, e.g. `2.25`.
pub fn time_tag(t: f64) -> String {
    format!("{t}")
}
