//! Follow-the-leader dynamics with nonlocal look-ahead.
//!
//! Cars `0..=N` drive on a line, car `N` leads at the control speed `vbar`.
//! Each follower averages the speeds `v(ell / y, omega)` of the gaps ahead of
//! it, weighted by the kernel mass that falls on each gap.

mod diagnostics;
mod integrate;

pub use diagnostics::{
    bulk_set, compute_j, concave_decay_applies, jacobian_diagonal, lyapunov_micro, lyapunov_series,
    max_principle_check, monotone_gaps, rho_min_micro, BulkSet, IndexPolicy, MaxPrincipleReport, MicroLyapunov,
};
pub use integrate::{integrate, sample_grid, IntegrationStats, MicroTrajectory, Tolerances};

use crate::error::{GarzError, Result};
use crate::kernel::Kernel;
use crate::profile::PiecewiseConstant;
use crate::velocity::VelocityModel;

#[derive(Debug, Clone, PartialEq)]
pub struct MicroScenario {
    kernel: Kernel,
    velocity: VelocityModel,
    vbar: f64,
    x0: Vec<f64>,
    omegas: Vec<f64>,
    ell: f64,
}

impl MicroScenario {
    /// `omegas` holds one marker per follower, i.e. `x0.len() - 1` entries.
    pub fn new(
        kernel: Kernel,
        velocity: VelocityModel,
        vbar: f64,
        x0: Vec<f64>,
        omegas: Vec<f64>,
        ell: f64,
    ) -> Result<Self> {
        if x0.len() < 2 {
            return Err(GarzError::InvalidScenario("need at least two cars".into()));
        }
        if omegas.len() != x0.len() - 1 {
            return Err(GarzError::InvalidScenario(format!("{} markers for {} followers", omegas.len(), x0.len() - 1)));
        }
        if let Some(k) = x0.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(GarzError::CorruptedState { index: k });
        }
        if !(ell > 0.0) {
            return Err(GarzError::InvalidScenario(format!("mass per car must be positive, got {ell}")));
        }
        if !(vbar > 0.0) {
            return Err(GarzError::InvalidScenario(format!("control speed must be positive, got {vbar}")));
        }
        for &w in &omegas {
            if !(w > 0.0) {
                return Err(GarzError::InvalidScenario(format!("marker must be positive, got {w}")));
            }
            if vbar > w {
                return Err(GarzError::InfeasibleControl { vbar, omega: w });
            }
        }
        Ok(Self { kernel, velocity, vbar, x0, omegas, ell })
    }

    /// Places `n_cars` cars with equal mass `M / N` between neighbours and
    /// reads each follower's marker from `omega0` at the middle of the gap ahead.
    pub fn from_profiles(
        kernel: Kernel,
        velocity: VelocityModel,
        vbar: f64,
        rho0: &PiecewiseConstant,
        omega0: &PiecewiseConstant,
        n_cars: usize,
    ) -> Result<Self> {
        let (x0, ell) = place_cars(rho0, n_cars)?;
        let omegas = x0
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .map(|x| {
                omega0
                    .value_at(x)
                    .ok_or_else(|| GarzError::InvalidProfile(format!("marker profile does not cover x = {x}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(kernel, velocity, vbar, x0, omegas, ell)
    }

    /// Same scenario with the mass per car replaced, e.g. `1/N`.
    pub fn with_ell(mut self, ell: f64) -> Result<Self> {
        if !(ell > 0.0) {
            return Err(GarzError::InvalidScenario(format!("mass per car must be positive, got {ell}")));
        }
        self.ell = ell;
        Ok(self)
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn velocity(&self) -> &VelocityModel {
        &self.velocity
    }

    pub fn vbar(&self) -> f64 {
        self.vbar
    }

    pub fn eta(&self) -> f64 {
        self.kernel.eta()
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// Number of cars, `N + 1`.
    pub fn n_cars(&self) -> usize {
        self.x0.len()
    }

    /// Number of gaps, `N`.
    pub fn n_gaps(&self) -> usize {
        self.x0.len() - 1
    }

    pub fn initial_state(&self) -> MicroState {
        MicroState { t: 0.0, x: self.x0.clone() }
    }

    pub fn initial_gaps(&self) -> Vec<f64> {
        gaps_of(&self.x0)
    }

    /// Equilibrium gaps `ell / rho_eq(vbar, omega_i)`.
    pub fn equilibrium_gaps(&self) -> Result<Vec<f64>> {
        self.omegas.iter().map(|&w| self.velocity.equilibrium_gap(self.vbar, w, self.ell)).collect()
    }

    /// Equilibrium density behind the leader.
    pub fn boundary_density(&self) -> Result<f64> {
        self.velocity.equilibrium_density(self.vbar, *self.omegas.last().unwrap())
    }

    /// Car speeds from the gaps; `out` has `N + 1` entries.
    pub(crate) fn car_speeds(&self, gaps: &[f64], gap_speed: &mut [f64], out: &mut [f64]) {
        let n = gaps.len();
        for k in 0..n {
            gap_speed[k] = self.velocity.speed(self.ell / gaps[k], self.omegas[k]);
        }
        for i in 0..n {
            let mut s = 0.0;
            let mut u = 0.0;
            self.kernel.walk_weights(
                n - i,
                |j| {
                    s += gaps[i + j];
                    s
                },
                |j, g| u += g * if i + j < n { gap_speed[i + j] } else { self.vbar },
            );
            out[i] = u;
        }
        out[n] = self.vbar;
    }

    /// Time derivative of the gaps.
    pub(crate) fn gap_rhs(&self, gaps: &[f64], work: &mut RhsWork, out: &mut [f64]) {
        self.car_speeds(gaps, &mut work.gap_speed, &mut work.speeds);
        for i in 0..gaps.len() {
            out[i] = work.speeds[i + 1] - work.speeds[i];
        }
    }
}

pub(crate) struct RhsWork {
    gap_speed: Vec<f64>,
    speeds: Vec<f64>,
}

impl RhsWork {
    pub(crate) fn new(n_gaps: usize) -> Self {
        Self { gap_speed: vec![0.0; n_gaps], speeds: vec![0.0; n_gaps + 1] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub t: f64,
    pub x: Vec<f64>,
}

impl MicroState {
    pub fn gaps(&self) -> Vec<f64> {
        gaps_of(&self.x)
    }

    pub fn leader(&self) -> f64 {
        *self.x.last().unwrap()
    }
}

fn gaps_of(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Equal-mass placement of `n_cars` cars under `rho0`.
///
/// Returns positions with `x_0 = a`, `x_N = b` and mass `ell = M / N`
/// between neighbours.
pub fn place_cars(rho0: &PiecewiseConstant, n_cars: usize) -> Result<(Vec<f64>, f64)> {
    if n_cars < 2 {
        return Err(GarzError::InvalidScenario("need at least two cars".into()));
    }
    if rho0.pieces().any(|(_, v)| v < 0.0) {
        return Err(GarzError::InvalidProfile("negative density".into()));
    }
    let total = rho0.total();
    if !(total > 0.0) {
        return Err(GarzError::ZeroMass);
    }
    let n = n_cars - 1;
    let ell = total / n as f64;
    let mut x = Vec::with_capacity(n_cars);
    x.push(rho0.a());
    for i in 1..n {
        x.push(rho0.invert_cumulative(ell * i as f64));
    }
    x.push(rho0.b());
    if let Some(k) = x.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(GarzError::CorruptedState { index: k });
    }
    Ok((x, ell))
}

/// Piecewise-constant density `ell / y_i` on `[x_i, x_{i+1})`.
pub fn density_profile(scenario: &MicroScenario, state: &MicroState) -> Result<PiecewiseConstant> {
    if let Some(k) = state.x.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(GarzError::CorruptedState { index: k });
    }
    let n = state.x.len() - 1;
    let values = state.gaps().iter().map(|&y| scenario.ell / y).collect();
    Ok(PiecewiseConstant::from_parts(state.x[..n].to_vec(), values, state.x[n]))
}

/// Car speeds `dx_i/dt`, leader last.
pub fn rhs(scenario: &MicroScenario, state: &MicroState) -> Result<Vec<f64>> {
    if state.x.len() != scenario.n_cars() {
        return Err(GarzError::InvalidScenario(format!(
            "state has {} cars, scenario {}",
            state.x.len(),
            scenario.n_cars()
        )));
    }
    if let Some(k) = state.x.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(GarzError::CorruptedState { index: k });
    }
    let gaps = state.gaps();
    let mut gap_speed = vec![0.0; gaps.len()];
    let mut out = vec![0.0; gaps.len() + 1];
    scenario.car_speeds(&gaps, &mut gap_speed, &mut out);
    Ok(out)
}
