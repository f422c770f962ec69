use super::integrate::MacroTrajectory;
use super::{fill_markers, MacroScenario, MacroState, Segment};
use crate::bound::{cumulative_trapezoid, LyapunovBound};
use crate::error::{GarzError, Result};
use crate::velocity::VelocityModel;

const HYPOTHESIS_TOL: f64 = 1e-12;

fn marked_segments(state: &MacroState, omega_b: f64) -> Vec<(Segment, f64)> {
    let segs = state.segments();
    let omega = fill_markers(segs.iter().map(|s| (s.rho, s.q)), segs.len(), omega_b);
    segs.into_iter().zip(omega).collect()
}

fn mass_between(segs: &[Segment], lo: f64, hi: f64) -> f64 {
    segs.iter()
        .map(|s| {
            let len = s.hi.min(hi) - s.lo.max(lo);
            if len > 0.0 {
                s.rho * len
            } else {
                0.0
            }
        })
        .sum()
}

/// `int_{beta - eta}^{beta} rho`.
pub fn window_mass(state: &MacroState, eta: f64) -> f64 {
    mass_between(&state.segments(), state.beta - eta, state.beta)
}

/// Rightmost `x >= beta - eta` with `int_x^beta rho >= c_rho`, located by a
/// backward walk from `beta` with linear interpolation inside a segment.
pub fn alpha(state: &MacroState, eta: f64, c_rho: f64) -> Result<f64> {
    let beta = state.beta;
    if c_rho <= 0.0 {
        return Ok(beta);
    }
    let lo = beta - eta;
    let slack = HYPOTHESIS_TOL * c_rho.max(1.0);
    let mut acc = 0.0;
    for s in state.segments().iter().rev() {
        if s.lo >= beta {
            continue;
        }
        if s.hi <= lo {
            break;
        }
        let hi = s.hi.min(beta);
        let l = s.lo.max(lo);
        let m = s.rho * (hi - l);
        if acc + m >= c_rho - slack {
            return Ok((hi - (c_rho - acc) / s.rho).clamp(l, hi));
        }
        acc += m;
    }
    if acc >= c_rho - slack {
        Ok(lo)
    } else {
        Err(GarzError::InsufficientWindowMass { mass: acc, threshold: c_rho })
    }
}

/// Window from the a priori mass bound `eta min{rho_eq(omega_0(a)), rho_b, inf rho_0}`.
///
/// Only a diagnostic: this threshold does not track the car count.
pub fn alpha_a_priori(scenario: &MacroScenario, state: &MacroState) -> Result<f64> {
    let rho_a = scenario.rho_eq(scenario.omega0.first_value());
    let inf0 = scenario.rho0.pieces().map(|(_, r)| r).fold(f64::INFINITY, f64::min);
    let c = scenario.eta() * rho_a.min(scenario.boundary_density()?).min(inf0);
    alpha(state, scenario.eta(), c)
}

/// `int_alpha^beta (rho - rho_eq(omega))^2`.
pub fn lyapunov_macro(scenario: &MacroScenario, state: &MacroState, alpha: f64) -> f64 {
    marked_segments(state, scenario.omega_b())
        .into_iter()
        .map(|(s, w)| {
            let len = s.hi.min(state.beta) - s.lo.max(alpha);
            if len > 0.0 {
                let d = s.rho - scenario.rho_eq(w);
                d * d * len
            } else {
                0.0
            }
        })
        .sum()
}

/// `inf_{[alpha0, b]} min(rho_0, rho_eq(omega_0))`.
pub fn rho_min_macro(scenario: &MacroScenario, alpha0: f64) -> f64 {
    let b = scenario.b();
    let lo = alpha0.min(b);
    let dens = scenario.rho0.min_on(lo, b).unwrap_or(f64::INFINITY);
    let eq = scenario.omega0.map(|w| scenario.rho_eq(w)).min_on(lo, b).unwrap_or(f64::INFINITY);
    dens.min(eq)
}

fn uniform_marker(scenario: &MacroScenario, lo: f64, hi: f64) -> Option<f64> {
    let w = scenario.omega0.value_at(lo.max(scenario.a()))?;
    let mut vals = scenario.omega0.breakpoints_in(lo, hi).filter_map(|x| scenario.omega0.value_at(x));
    vals.all(|v| (v - w).abs() <= HYPOTHESIS_TOL).then_some(w)
}

/// Constant kernel, or a concave kernel with one marker on `[b - eta, b]`
/// and initial density monotone on one side of its equilibrium there.
pub fn macro_decay_applies(scenario: &MacroScenario) -> bool {
    let k = &scenario.kernel;
    if k.is_constant() {
        return true;
    }
    if !k.is_concave() {
        return false;
    }
    let (lo, b) = (scenario.b() - scenario.eta(), scenario.b());
    let Some(w) = uniform_marker(scenario, lo, b) else {
        return false;
    };
    let rbar = scenario.rho_eq(w);
    let Some(min) = scenario.rho0.min_on(lo, b) else {
        return false;
    };
    let max = scenario.rho0.map(|r| -r).min_on(lo, b).map(|m| -m).unwrap_or(min);
    let inc = scenario.rho0.monotone_on(lo, b) == Some(true);
    let dec = scenario.rho0.map(|r| -r).monotone_on(lo, b) == Some(true);
    (inc && max <= rbar + HYPOTHESIS_TOL) || (dec && min >= rbar - HYPOTHESIS_TOL)
}

/// Uniform marker with either `rho_0 <= rho_eq` everywhere, or a constant
/// kernel, linear velocity and `V(0, b - eta) >= vbar`. Under these
/// `c_rho = int_{b - eta}^b rho_0`.
pub fn window_mass_shortcut_applies(scenario: &MacroScenario) -> bool {
    let (a, b) = (scenario.a(), scenario.b());
    let Some(w) = uniform_marker(scenario, a, b) else {
        return false;
    };
    let rbar = scenario.rho_eq(w);
    if scenario.rho0.pieces().all(|(_, r)| r <= rbar + HYPOTHESIS_TOL) {
        return true;
    }
    if !scenario.kernel.is_constant() || scenario.velocity != VelocityModel::Greenshields {
        return false;
    }
    let lo = b - scenario.eta();
    let mut pts = vec![lo, b];
    pts.extend(scenario.rho0.breakpoints_in(lo, b));
    pts.sort_by(f64::total_cmp);
    let v: f64 = pts
        .windows(2)
        .map(|p| {
            let r = scenario.rho0.value_at(0.5 * (p[0] + p[1])).unwrap_or(0.0);
            scenario.kernel.mass_unchecked(p[0] - lo, p[1] - lo) * scenario.velocity.speed(r, w)
        })
        .sum();
    v >= scenario.vbar - HYPOTHESIS_TOL
}

/// Largest `|alpha_ODE - alpha_mass|` over the recorded steps.
pub fn alpha_ode_check(trajectory: &MacroTrajectory) -> f64 {
    trajectory.records().iter().map(|r| (r.alpha_ode - r.alpha).abs()).fold(0.0, f64::max)
}

/// Envelope `L(0) exp(2 v'_max rho_min int_0^t W(beta - alpha))` at the
/// Lyapunov sample times.
pub fn bound_macro(trajectory: &MacroTrajectory) -> LyapunovBound {
    let s = trajectory.scenario();
    if !macro_decay_applies(s) {
        let why = if s.kernel.is_concave() {
            "concave kernel without uniform marker and monotone data near b"
        } else {
            "kernel is neither constant nor concave"
        };
        return LyapunovBound::NotApplicable(why.into());
    }
    let samples = trajectory.lyapunov();
    let l0 = samples[0].value;
    let c = 2.0 * trajectory.vprime_max() * trajectory.rho_min();
    if s.kernel.is_constant() {
        let rate = c / s.eta();
        let values = samples.iter().map(|p| l0 * (rate * p.t).exp()).collect();
        return LyapunovBound::Constant { rate, values };
    }
    let recs = trajectory.records();
    let t: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let w: Vec<f64> = recs.iter().map(|r| s.kernel.eval(r.beta - r.alpha)).collect();
    let integral = cumulative_trapezoid(&t, &w);
    let values = samples.iter().map(|p| l0 * (c * integral[p.record]).exp()).collect();
    LyapunovBound::Concave { values }
}
