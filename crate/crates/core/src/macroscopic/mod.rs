//! Finite-volume solver for the nonlocal second-order system in the
//! conservative variables `(rho, q = rho omega)`.
//!
//! The support starts on `[a, b]`, with zero inflow at `a` and the
//! equilibrium state `(rho_b, omega(b))` held ahead of the boundary
//! `beta(t) = b + vbar t`.

mod correlate;
mod diagnostics;
mod integrate;
mod solver;

pub use diagnostics::{
    alpha, alpha_a_priori, alpha_ode_check, bound_macro, lyapunov_macro, macro_decay_applies, rho_min_macro,
    window_mass, window_mass_shortcut_applies,
};
pub use integrate::{integrate, LyapunovSample, MacroTrajectory, StepRecord};
pub use solver::MacroSolver;

use crate::error::{GarzError, Result};
use crate::kernel::Kernel;
use crate::profile::PiecewiseConstant;
use crate::velocity::VelocityModel;

/// Densities below this are vacuum; `q / rho` is never formed there.
pub const VACUUM: f64 = 1e-12;

/// How the state ahead of `beta(t)` is realised on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// The cell holding `beta` is split; mass never crosses `beta`.
    SharpFront,
    /// Every cell reaching past `beta` is reset to the boundary state each step.
    #[default]
    Clamp,
    /// Plain initial value problem on the extended data.
    Ivp,
}

impl BoundaryMode {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryMode::SharpFront => "sharp",
            BoundaryMode::Clamp => "clamp",
            BoundaryMode::Ivp => "ivp",
        }
    }
}

impl std::str::FromStr for BoundaryMode {
    type Err = GarzError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sharp" => Ok(BoundaryMode::SharpFront),
            "clamp" => Ok(BoundaryMode::Clamp),
            "ivp" => Ok(BoundaryMode::Ivp),
            _ => Err(GarzError::InvalidScenario(format!("unknown boundary mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroScenario {
    pub kernel: Kernel,
    pub velocity: VelocityModel,
    pub rho0: PiecewiseConstant,
    pub omega0: PiecewiseConstant,
    pub vbar: f64,
    pub dx: f64,
    pub t_end: f64,
    pub boundary: BoundaryMode,
    /// CFL safety factor.
    pub cfl: f64,
}

impl MacroScenario {
    pub fn new(
        kernel: Kernel,
        velocity: VelocityModel,
        rho0: PiecewiseConstant,
        omega0: PiecewiseConstant,
        vbar: f64,
        dx: f64,
        t_end: f64,
    ) -> Result<Self> {
        let s = Self { kernel, velocity, rho0, omega0, vbar, dx, t_end, boundary: BoundaryMode::default(), cfl: 0.9 };
        s.validate()?;
        Ok(s)
    }

    pub fn with_boundary(mut self, mode: BoundaryMode) -> Self {
        self.boundary = mode;
        self
    }

    pub fn with_dx(mut self, dx: f64) -> Result<Self> {
        self.dx = dx;
        self.validate()?;
        Ok(self)
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Result<Self> {
        self.kernel = kernel;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.a(), self.b());
        if (self.omega0.a() - a).abs() > 1e-12 || (self.omega0.b() - b).abs() > 1e-12 {
            return Err(GarzError::InvalidProfile("density and marker profiles must share [a, b]".into()));
        }
        if !(b > a + self.eta()) {
            return Err(GarzError::InvalidScenario(format!(
                "domain [{a}, {b}] must be longer than the reach {}",
                self.eta()
            )));
        }
        if !(self.dx > 0.0 && self.dx < b - a) {
            return Err(GarzError::InvalidScenario(format!("invalid cell width {}", self.dx)));
        }
        if !(self.t_end > 0.0) {
            return Err(GarzError::InvalidScenario(format!("end time must be positive, got {}", self.t_end)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(GarzError::InvalidScenario(format!("CFL factor {} outside (0, 1]", self.cfl)));
        }
        for (_, w) in self.omega0.pieces() {
            if !(w > 0.0) {
                return Err(GarzError::InvalidProfile(format!("marker must be positive, got {w}")));
            }
        }
        for (_, r) in self.rho0.pieces() {
            if !(0.0..=self.velocity.rho_max(1.0)).contains(&r) {
                return Err(GarzError::InvalidProfile(format!("density {r} outside [0, rho_max]")));
            }
        }
        if !(self.vbar > 0.0) {
            return Err(GarzError::InvalidScenario(format!("control speed must be positive, got {}", self.vbar)));
        }
        self.boundary_density()?;
        Ok(())
    }

    pub fn a(&self) -> f64 {
        self.rho0.a()
    }

    pub fn b(&self) -> f64 {
        self.rho0.b()
    }

    pub fn eta(&self) -> f64 {
        self.kernel.eta()
    }

    pub fn omega_b(&self) -> f64 {
        self.omega0.last_value()
    }

    /// `rho_b` with `v(rho_b, omega(b)) = vbar`.
    pub fn boundary_density(&self) -> Result<f64> {
        self.velocity.equilibrium_density(self.vbar, self.omega_b())
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.b() + self.vbar * t
    }

    /// Equilibrium density for a marker, zero where `omega <= vbar`.
    pub fn rho_eq(&self, omega: f64) -> f64 {
        self.velocity.equilibrium_density(self.vbar, omega.max(self.vbar)).unwrap_or(0.0)
    }

    /// Left edge and cell count of the computational grid.
    pub fn grid(&self) -> (f64, usize) {
        let pad = (self.eta() / self.dx - 1e-9).ceil();
        let xl = self.a() - pad * self.dx;
        let xr = self.b() + self.vbar * self.t_end + self.eta();
        let n = ((xr - xl) / self.dx - 1e-9).ceil() as usize;
        (xl, n)
    }
}

/// Free part of the cell cut by `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontCell {
    pub cell: usize,
    /// Free fraction of the cell, in `(0, 1]`.
    pub theta: f64,
    pub rho: f64,
    pub q: f64,
    /// Boundary state on the rest of the cell.
    pub rho_b: f64,
    pub q_b: f64,
}

/// A constant stretch of the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub rho: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub t: f64,
    pub x_left: f64,
    pub dx: f64,
    /// Cell averages; the front cell holds the mix of free and boundary parts.
    pub rho: Vec<f64>,
    pub q: Vec<f64>,
    pub beta: f64,
    pub front: Option<FrontCell>,
}

impl MacroState {
    pub fn n_cells(&self) -> usize {
        self.rho.len()
    }

    pub fn edge(&self, j: usize) -> f64 {
        self.x_left + j as f64 * self.dx
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_left + (j as f64 + 0.5) * self.dx
    }

    /// Constant stretches left to right; the front cell contributes its free
    /// part and the boundary part separately.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::with_capacity(self.n_cells() + 1);
        for j in 0..self.n_cells() {
            let lo = self.edge(j);
            let hi = self.edge(j + 1);
            match self.front {
                Some(f) if f.cell == j => {
                    let cut = if f.theta < 1.0 { self.beta.clamp(lo, hi) } else { hi };
                    out.push(Segment { lo, hi: cut, rho: f.rho, q: f.q });
                    if f.theta < 1.0 {
                        out.push(Segment { lo: cut, hi, rho: f.rho_b, q: f.q_b });
                    }
                }
                _ => out.push(Segment { lo, hi, rho: self.rho[j], q: self.q[j] }),
            }
        }
        out
    }

    /// Density as a step function over the grid.
    pub fn density_profile(&self) -> PiecewiseConstant {
        let segs = self.segments();
        let b = segs.last().unwrap().hi;
        PiecewiseConstant::from_parts(segs.iter().map(|s| s.lo).collect(), segs.iter().map(|s| s.rho).collect(), b)
    }

    /// Cell markers `q / rho`, with vacuum cells taking the nearest
    /// non-vacuum marker downstream (`omega_b` past the last one).
    pub fn omega(&self, omega_b: f64) -> Vec<f64> {
        fill_markers(self.rho.iter().copied().zip(self.q.iter().copied()), self.n_cells(), omega_b)
    }

    /// Per-cell equilibrium density `rho_eq(omega_j)`.
    pub fn equilibrium_field(&self, scenario: &MacroScenario) -> Vec<f64> {
        self.omega(scenario.omega_b()).into_iter().map(|w| scenario.rho_eq(w)).collect()
    }

    /// Total density mass on the grid.
    pub fn mass(&self) -> f64 {
        self.segments().iter().map(|s| s.rho * (s.hi - s.lo)).sum()
    }
}

pub(crate) fn fill_markers(cells: impl DoubleEndedIterator<Item = (f64, f64)>, n: usize, omega_b: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut fill = omega_b;
    for (k, (r, q)) in cells.rev().enumerate() {
        if r >= VACUUM {
            fill = q / r;
        }
        out[n - 1 - k] = fill;
    }
    out
}

/// Face velocities `V_j = sum_k g_k v(rho_{j+k+1}, omega_{j+k+1})` of a
/// state, direct summation; cells past the grid read the boundary state.
pub fn nonlocal_velocity(scenario: &MacroScenario, state: &MacroState, weights: &[f64]) -> Result<Vec<f64>> {
    let rho_b = scenario.boundary_density()?;
    let vb = scenario.velocity.speed(rho_b, scenario.omega_b());
    let omega = state.omega(scenario.omega_b());
    let n = state.n_cells();
    let m = weights.len();
    let mut u = Vec::with_capacity(n + m);
    for c in 1..n + m {
        u.push(if c < n {
            match state.front {
                Some(f) if f.cell == c => {
                    let w = if f.rho >= VACUUM { f.q / f.rho } else { omega[c] };
                    f.theta * scenario.velocity.speed(f.rho, w) + (1.0 - f.theta) * vb
                }
                Some(f) if c > f.cell => vb,
                _ => scenario.velocity.speed(state.rho[c], omega[c]),
            }
        } else {
            vb
        });
    }
    let mut out = vec![0.0; n];
    correlate::correlate_direct(weights, &u, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;

    pub(crate) fn fig1(boundary: BoundaryMode) -> MacroScenario {
        MacroScenario::new(
            Kernel::new(KernelFamily::Constant, 0.5).unwrap(),
            VelocityModel::Greenshields,
            PiecewiseConstant::new(&[(-1.5, 0.5), (0.0, 0.3)], 1.5).unwrap(),
            PiecewiseConstant::new(&[(-1.5, 1.0), (0.0, 0.625)], 1.5).unwrap(),
            0.5,
            2.5e-3,
            20.0,
        )
        .unwrap()
        .with_boundary(boundary)
    }

    #[test]
    fn grid_extent() {
        let s = fig1(BoundaryMode::SharpFront);
        let (xl, n) = s.grid();
        assert!((xl + 2.0).abs() < 1e-12);
        assert!((xl + n as f64 * s.dx - 12.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_short_domain() {
        let r = MacroScenario::new(
            Kernel::new(KernelFamily::Constant, 0.5).unwrap(),
            VelocityModel::Greenshields,
            PiecewiseConstant::constant(0.0, 0.4, 0.3).unwrap(),
            PiecewiseConstant::constant(0.0, 0.4, 1.0).unwrap(),
            0.5,
            0.01,
            1.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn markers_fill_vacuum_from_downstream() {
        let w = fill_markers([(0.0, 0.0), (0.5, 0.4), (0.0, 0.0), (0.2, 0.1)].into_iter(), 4, 0.7);
        assert_eq!(w, vec![0.8, 0.8, 0.5, 0.5]);
        let w = fill_markers([(0.2, 0.1), (0.0, 0.0)].into_iter(), 2, 0.7);
        assert_eq!(w, vec![0.5, 0.7]);
    }

    #[test]
    fn nonlocal_velocity_hand_example() {
        let s = fig1(BoundaryMode::Ivp);
        let st = MacroState {
            t: 0.0,
            x_left: 0.0,
            dx: 0.25,
            rho: vec![0.1, 0.2, 0.4, 0.6],
            q: vec![0.1, 0.2, 0.4, 0.6],
            beta: 1.0,
            front: None,
        };
        let w = [0.75, 0.25];
        let v = nonlocal_velocity(&s, &st, &w).unwrap();
        let vb = 0.625 * (1.0 - 0.2);
        assert!((v[0] - (0.75 * 0.8 + 0.25 * 0.6)).abs() < 1e-15);
        assert!((v[1] - (0.75 * 0.6 + 0.25 * 0.4)).abs() < 1e-15);
        assert!((v[2] - (0.75 * 0.4 + 0.25 * vb)).abs() < 1e-15);
        assert!((v[3] - vb).abs() < 1e-15);
    }

    #[test]
    fn segments_split_front() {
        let st = MacroState {
            t: 0.0,
            x_left: 0.0,
            dx: 1.0,
            rho: vec![0.3, 0.3 * 0.25 + 0.2 * 0.75, 0.2],
            q: vec![0.3, 0.3 * 0.25 + 0.125 * 0.75, 0.125],
            beta: 1.25,
            front: Some(FrontCell { cell: 1, theta: 0.25, rho: 0.3, q: 0.3, rho_b: 0.2, q_b: 0.125 }),
        };
        let segs = st.segments();
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[1].hi, 1.25);
        assert!((segs[2].rho - 0.2).abs() < 1e-15);
        assert!((st.mass() - (0.3 + 0.3 * 0.25 + 0.2 * 0.75 + 0.2)).abs() < 1e-15);
    }
}
