use super::diagnostics::{alpha, lyapunov_macro, rho_min_macro, window_mass, window_mass_shortcut_applies};
use super::{MacroScenario, MacroSolver, MacroState};
use crate::error::{GarzError, Result};
use crate::microscopic::sample_grid;

/// Window quantities after one step (or at `t = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub beta: f64,
    pub window_mass: f64,
    /// `alpha` from the mass condition.
    pub alpha: f64,
    /// `alpha` from forward Euler on `d alpha/dt = V(t, alpha)`.
    pub alpha_ode: f64,
    /// `V` and `rho` at `beta - eta`.
    pub v_window: f64,
    pub rho_window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Index into the step records.
    pub record: usize,
}

#[derive(Debug, Clone)]
pub struct MacroTrajectory {
    scenario: MacroScenario,
    samples: Vec<MacroState>,
    records: Vec<StepRecord>,
    lyapunov: Vec<LyapunovSample>,
    c_rho: f64,
    shortcut_window_mass: Option<f64>,
    rho_min: f64,
    vprime_max: f64,
    balance_residual: f64,
    steps: usize,
}

impl MacroTrajectory {
    pub fn scenario(&self) -> &MacroScenario {
        &self.scenario
    }

    /// States at the requested output times.
    pub fn samples(&self) -> &[MacroState] {
        &self.samples
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn lyapunov(&self) -> &[LyapunovSample] {
        &self.lyapunov
    }

    /// Smallest window mass over the run.
    pub fn c_rho(&self) -> f64 {
        self.c_rho
    }

    /// `int_{b - eta}^b rho_0` when the shortcut hypotheses hold.
    pub fn shortcut_window_mass(&self) -> Option<f64> {
        self.shortcut_window_mass
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_min
    }

    pub fn vprime_max(&self) -> f64 {
        self.vprime_max
    }

    pub fn balance_residual(&self) -> f64 {
        self.balance_residual
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn at(&self, t: f64) -> Result<&MacroState> {
        let tol = 1e-12 * self.scenario.t_end.max(1.0);
        self.samples.iter().find(|s| (s.t - t).abs() <= tol).ok_or(GarzError::MissingSample(t))
    }
}

fn density_at(state: &MacroState, x: f64) -> f64 {
    state.segments().iter().find(|s| s.lo <= x && x < s.hi).map_or(0.0, |s| s.rho)
}

/// Steps through every stop, calling `visit` at `t = 0` and after each step
/// with whether a stop was reached.
fn march(
    scenario: &MacroScenario,
    stops: &[f64],
    mut visit: impl FnMut(&mut MacroSolver, bool) -> Result<()>,
) -> Result<MacroSolver> {
    let mut solver = MacroSolver::new(scenario)?;
    visit(&mut solver, true)?;
    for &s in stops.iter().filter(|&&s| s > 0.0) {
        while solver.state().t < s {
            solver.step_until(s)?;
            let hit = solver.state().t == s;
            visit(&mut solver, hit)?;
        }
    }
    Ok(solver)
}

/// Runs the scheme to `t_end`.
///
/// A first pass finds `c_rho`; the second records `alpha`, the Lyapunov
/// values on the uniform sample grid and the states at `output_times`.
pub fn integrate(scenario: &MacroScenario, output_times: &[f64]) -> Result<MacroTrajectory> {
    scenario.validate()?;
    let t_end = scenario.t_end;
    if let Some(&t) = output_times.iter().find(|&&t| !(0.0..=t_end).contains(&t)) {
        return Err(GarzError::InvalidScenario(format!("output time {t} outside [0, {t_end}]")));
    }
    let eta = scenario.eta();
    let stops = sample_grid(t_end, output_times);

    let mut c_rho = f64::INFINITY;
    march(scenario, &stops, |s, _| {
        c_rho = c_rho.min(window_mass(s.state(), eta));
        Ok(())
    })?;

    let tol = 1e-12 * t_end.max(1.0);
    let mut outputs: Vec<f64> = output_times.to_vec();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup_by(|b, a| (*b - *a).abs() <= tol);

    let mut records: Vec<StepRecord> = Vec::new();
    let mut lyapunov = Vec::with_capacity(stops.len());
    let mut samples = Vec::with_capacity(outputs.len());
    let mut alpha_ode = 0.0;
    let mut speed = 0.0;
    let mut next_out = 0;
    let solver = march(scenario, &stops, |s, hit| {
        let t = s.state().t;
        let a = alpha(s.state(), eta, c_rho)?;
        alpha_ode = match records.last() {
            None => a,
            Some(r) => alpha_ode + (t - r.t) * speed,
        };
        speed = s.velocity_at(alpha_ode);
        let st = s.state();
        let lo = st.beta - eta;
        records.push(StepRecord {
            t,
            beta: st.beta,
            window_mass: window_mass(st, eta),
            alpha: a,
            alpha_ode,
            v_window: s.velocity_at(lo),
            rho_window: density_at(s.state(), lo),
        });
        if hit {
            let st = s.state();
            lyapunov.push(LyapunovSample {
                t,
                value: lyapunov_macro(scenario, st, a),
                alpha: a,
                beta: st.beta,
                record: records.len() - 1,
            });
            while next_out < outputs.len() && (outputs[next_out] - t).abs() <= tol {
                samples.push(st.clone());
                next_out += 1;
            }
        }
        Ok(())
    })?;

    let omegas: Vec<f64> = scenario.omega0.pieces().map(|(_, w)| w).collect();
    let shortcut_window_mass =
        window_mass_shortcut_applies(scenario).then(|| scenario.rho0.integral(scenario.b() - eta, scenario.b()));
    Ok(MacroTrajectory {
        rho_min: rho_min_macro(scenario, records[0].alpha),
        vprime_max: scenario.velocity.vprime_max(&omegas)?,
        scenario: scenario.clone(),
        samples,
        records,
        lyapunov,
        c_rho,
        shortcut_window_mass,
        balance_residual: solver.balance_residual(),
        steps: solver.steps(),
    })
}
