use super::correlate::Correlator;
use super::{BoundaryMode, FrontCell, MacroScenario, MacroState, VACUUM};
use crate::error::{GarzError, Result};
use crate::profile::PiecewiseConstant;

/// Explicit upwind stepping of one macroscopic scenario.
pub struct MacroSolver {
    scn: MacroScenario,
    state: MacroState,
    rho_b: f64,
    q_b: f64,
    v_b: f64,
    m: usize,
    corr: Correlator,
    u: Vec<f64>,
    faces: Vec<f64>,
    lo: usize,
    hi: usize,
    fresh: bool,
    residual: f64,
    steps: usize,
}

fn product_integral(p: &PiecewiseConstant, r: &PiecewiseConstant, lo: f64, hi: f64) -> f64 {
    let lo = lo.max(p.a());
    let hi = hi.min(p.b());
    if hi <= lo {
        return 0.0;
    }
    let mut pts: Vec<f64> = vec![lo, hi];
    pts.extend(p.breakpoints_in(lo, hi));
    pts.extend(r.breakpoints_in(lo, hi));
    pts.sort_by(f64::total_cmp);
    pts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            p.value_at(mid).unwrap_or(0.0) * r.value_at(mid).unwrap_or(0.0) * (w[1] - w[0])
        })
        .sum()
}

impl MacroSolver {
    pub fn new(scenario: &MacroScenario) -> Result<Self> {
        scenario.validate()?;
        let scn = scenario.clone();
        let rho_b = scn.boundary_density()?;
        let omega_b = scn.omega_b();
        let q_b = rho_b * omega_b;
        let v_b = scn.velocity.speed(rho_b, omega_b);
        let weights = scn.kernel.weights_macro(scn.dx)?;
        let (xl, n) = scn.grid();
        let dx = scn.dx;
        let b = scn.b();
        let mut rho = vec![0.0; n];
        let mut q = vec![0.0; n];
        for j in 0..n {
            let lo = xl + j as f64 * dx;
            let hi = lo + dx;
            let ahead = (hi - lo.max(b)).max(0.0);
            rho[j] = (scn.rho0.integral(lo, hi) + rho_b * ahead) / dx;
            q[j] = (product_integral(&scn.rho0, &scn.omega0, lo, hi) + q_b * ahead) / dx;
        }
        let mut front = None;
        if scn.boundary == BoundaryMode::SharpFront {
            let (k, theta) = locate(xl, dx, b);
            let lo = xl + k as f64 * dx;
            let len = theta * dx;
            let rf = scn.rho0.integral(lo, b) / len;
            let qf = product_integral(&scn.rho0, &scn.omega0, lo, b) / len;
            front = Some(FrontCell { cell: k, theta, rho: rf, q: qf, rho_b, q_b });
            rho[k] = theta * rf + (1.0 - theta) * rho_b;
            q[k] = theta * qf + (1.0 - theta) * q_b;
            for j in k + 1..n {
                rho[j] = rho_b;
                q[j] = q_b;
            }
        }
        let m = weights.len();
        Ok(Self {
            state: MacroState { t: 0.0, x_left: xl, dx, rho, q, beta: b, front },
            scn,
            rho_b,
            q_b,
            v_b,
            m,
            corr: Correlator::new(weights),
            u: Vec::new(),
            faces: Vec::new(),
            lo: 0,
            hi: 0,
            fresh: false,
            residual: 0.0,
            steps: 0,
        })
    }

    pub fn scenario(&self) -> &MacroScenario {
        &self.scn
    }

    pub fn state(&self) -> &MacroState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Largest per-step conservation residual seen so far, over `rho` and `q`.
    pub fn balance_residual(&self) -> f64 {
        self.residual
    }

    fn last_free(&self) -> usize {
        match self.state.front {
            Some(f) => f.cell,
            None => self.state.n_cells() - 1,
        }
    }

    fn compute_faces(&mut self) {
        if self.fresh {
            return;
        }
        let st = &self.state;
        let n = st.n_cells();
        let hi = self.last_free();
        let lo = st.rho[..=hi].iter().position(|&r| r > 0.0).unwrap_or(hi);
        let m = self.m;
        let vel = self.scn.velocity;
        let omega_b = self.scn.omega_b();
        // cell speeds for c in lo+1 ..= hi+m
        let top = hi + m + 1;
        self.u.clear();
        self.u.resize(top - lo - 1, self.v_b);
        let mut fill = omega_b;
        let mut c = (n - 1).min(top - 1);
        while c > lo {
            let slot = c - lo - 1;
            self.u[slot] = match st.front {
                Some(f) if c > f.cell => self.v_b,
                Some(f) if c == f.cell => {
                    if f.rho >= VACUUM {
                        fill = f.q / f.rho;
                    }
                    f.theta * vel.speed(f.rho, fill) + (1.0 - f.theta) * self.v_b
                }
                _ => {
                    if st.rho[c] >= VACUUM {
                        fill = st.q[c] / st.rho[c];
                    }
                    vel.speed(st.rho[c], fill)
                }
            };
            c -= 1;
        }
        self.faces.clear();
        self.faces.resize(hi - lo + 1, 0.0);
        self.corr.correlate(&self.u, &mut self.faces);
        self.lo = lo;
        self.hi = hi;
        self.fresh = true;
    }

    /// `V` at face `j + 1/2`, for `j` in the active range.
    pub fn face_velocity(&mut self, j: usize) -> f64 {
        self.compute_faces();
        if j < self.lo {
            return self.faces[0];
        }
        self.faces.get(j - self.lo).copied().unwrap_or(self.v_b)
    }

    /// Face velocities interpolated linearly in `x`.
    pub fn velocity_at(&mut self, x: f64) -> f64 {
        self.compute_faces();
        let s = (x - self.state.x_left) / self.state.dx - 1.0;
        let lo = self.lo as f64;
        let hi = self.hi as f64;
        if s <= lo {
            return self.faces[0];
        }
        if s >= hi {
            return *self.faces.last().unwrap();
        }
        let j = s.floor();
        let w = s - j;
        let k = j as usize - self.lo;
        (1.0 - w) * self.faces[k] + w * self.faces[k + 1]
    }

    pub fn max_velocity(&mut self) -> f64 {
        self.compute_faces();
        self.faces.iter().copied().fold(self.v_b, f64::max)
    }

    /// CFL step `cfl dx / max(V, vbar)`.
    pub fn stable_dt(&mut self) -> f64 {
        let vmax = self.max_velocity().max(self.scn.vbar);
        self.scn.cfl * self.scn.dx / vmax
    }

    /// One step of length `dt`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let t1 = self.state.t + dt;
        self.advance(dt, t1)
    }

    /// One CFL step, shortened to land exactly on `target`; returns the step taken.
    pub fn step_until(&mut self, target: f64) -> Result<f64> {
        let t = self.state.t;
        let dt = self.stable_dt();
        if t + dt >= target - 1e-12 * target.abs().max(1.0) {
            self.advance(target - t, target)?;
            Ok(target - t)
        } else {
            self.advance(dt, t + dt)?;
            Ok(dt)
        }
    }

    fn advance(&mut self, dt: f64, t1: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.stable_dt() * (1.0 + 1e-9) {
            return Err(GarzError::InvalidScenario(format!("time step {dt} violates the CFL bound")));
        }
        self.compute_faces();
        let (lo, hi) = (self.lo, self.hi);
        let dx = self.state.dx;
        let lam = dt / dx;
        let beta1 = self.scn.beta(t1);
        let st = &mut self.state;
        let faces = &self.faces;
        let flux = |j: usize, v: &[f64]| faces[j - lo] * v[j];

        let last_full = match st.front {
            Some(f) => f.cell,
            None => hi + 1,
        };
        let resid_r;
        let resid_q;
        let mut prev_r = 0.0;
        let mut prev_q = 0.0;
        let mut new_r = vec![0.0; last_full.saturating_sub(lo)];
        let mut new_q = vec![0.0; new_r.len()];
        for j in lo..last_full {
            let fr = flux(j, &st.rho);
            let fq = flux(j, &st.q);
            let dr = -lam * (fr - prev_r);
            let dq = -lam * (fq - prev_q);
            new_r[j - lo] = st.rho[j] + dr;
            new_q[j - lo] = st.q[j] + dq;
            prev_r = fr;
            prev_q = fq;
        }
        match st.front {
            None => {
                // outflow through the right end of the grid
                let out_r = prev_r * dt;
                let out_q = prev_q * dt;
                let mut dm_r = 0.0;
                let mut dm_q = 0.0;
                for j in lo..last_full {
                    dm_r += (new_r[j - lo] - st.rho[j]) * dx;
                    dm_q += (new_q[j - lo] - st.q[j]) * dx;
                }
                resid_r = (dm_r + out_r).abs();
                resid_q = (dm_q + out_q).abs();
                for j in lo..last_full {
                    st.rho[j] = new_r[j - lo];
                    st.q[j] = new_q[j - lo];
                }
                if self.scn.boundary == BoundaryMode::Clamp {
                    for j in 0..st.n_cells() {
                        if st.x_left + (j + 1) as f64 * dx > beta1 + 1e-9 * dx {
                            st.rho[j] = self.rho_b;
                            st.q[j] = self.q_b;
                        }
                    }
                }
            }
            Some(f) => {
                let k = f.cell;
                let (k1, theta1) = locate(st.x_left, dx, beta1);
                let before_r: f64 = (lo..k).map(|j| st.rho[j] * dx).sum::<f64>() + f.rho * f.theta * dx;
                let before_q: f64 = (lo..k).map(|j| st.q[j] * dx).sum::<f64>() + f.q * f.theta * dx;
                let mass_r = f.rho * f.theta * dx + dt * prev_r;
                let mass_q = f.q * f.theta * dx + dt * prev_q;
                for j in lo..k {
                    st.rho[j] = new_r[j - lo];
                    st.q[j] = new_q[j - lo];
                }
                let nf = if k1 == k {
                    FrontCell { theta: theta1, rho: mass_r / (theta1 * dx), q: mass_q / (theta1 * dx), ..f }
                } else if k1 == k + 1 {
                    let v = faces[k - lo];
                    let sweep = theta1 * dx / self.scn.vbar;
                    let out_r = sweep * v * f.rho;
                    let out_q = sweep * v * f.q;
                    st.rho[k] = (mass_r - out_r) / dx;
                    st.q[k] = (mass_q - out_q) / dx;
                    FrontCell { cell: k1, theta: theta1, rho: out_r / (theta1 * dx), q: out_q / (theta1 * dx), ..f }
                } else {
                    return Err(GarzError::InvalidScenario(format!(
                        "boundary moved {} cells in one step",
                        k1 as isize - k as isize
                    )));
                };
                if nf.cell >= st.n_cells() {
                    return Err(GarzError::InvalidScenario("grid too short for the time horizon".into()));
                }
                st.rho[nf.cell] = nf.theta * nf.rho + (1.0 - nf.theta) * self.rho_b;
                st.q[nf.cell] = nf.theta * nf.q + (1.0 - nf.theta) * self.q_b;
                st.front = Some(nf);
                let after_r: f64 = (lo..nf.cell).map(|j| st.rho[j] * dx).sum::<f64>() + nf.rho * nf.theta * dx;
                let after_q: f64 = (lo..nf.cell).map(|j| st.q[j] * dx).sum::<f64>() + nf.q * nf.theta * dx;
                resid_r = (after_r - before_r).abs();
                resid_q = (after_q - before_q).abs();
            }
        }
        st.t = t1;
        st.beta = beta1;
        self.residual = self.residual.max(resid_r).max(resid_q);
        self.steps += 1;
        self.fresh = false;

        let limit = match st.front {
            Some(f) => f.cell + 1,
            None => st.n_cells(),
        };
        for j in lo..limit {
            let r = match st.front {
                Some(f) if f.cell == j => f.rho,
                _ => st.rho[j],
            };
            if r < 0.0 {
                if r < -1e-13 {
                    return Err(GarzError::NegativeDensity { t: t1, cell: j, value: r });
                }
                st.rho[j] = st.rho[j].max(0.0);
            }
        }
        Ok(())
    }
}

/// Cell holding `x` (upper edges inclusive) and the covered fraction.
fn locate(xl: f64, dx: f64, x: f64) -> (usize, f64) {
    let r = (x - xl) / dx;
    let k = ((r - 1e-9).ceil() as usize).max(1) - 1;
    let theta = (r - k as f64).clamp(0.0, 1.0);
    (k, theta)
}
