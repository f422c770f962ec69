//! Dormand–Prince 4(5) time stepping of the gap system.
//!
//! The state is the vector of gaps; the leader is advanced exactly and the
//! positions are rebuilt from it by suffix sums.

use super::{MicroScenario, MicroState, RhsWork};
use crate::error::{GarzError, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Number of uniform intervals in the diagnostic sampling grid.
pub const GRID_INTERVALS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { atol: 1e-9, rtol: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub guard_rejections: usize,
    pub rhs_evaluations: usize,
    /// Smallest gap over all accepted steps.
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroTrajectory {
    scenario: MicroScenario,
    samples: Vec<MicroState>,
    stats: IntegrationStats,
}

impl MicroTrajectory {
    pub fn scenario(&self) -> &MicroScenario {
        &self.scenario
    }

    pub fn samples(&self) -> &[MicroState] {
        &self.samples
    }

    pub fn stats(&self) -> &IntegrationStats {
        &self.stats
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Sample taken at time `t` (matched to `1e-12` relative).
    pub fn at(&self, t: f64) -> Result<&MicroState> {
        let tol = 1e-12 * self.samples.last().map_or(1.0, |s| s.t.abs().max(1.0));
        self.samples.iter().find(|s| (s.t - t).abs() <= tol).ok_or(GarzError::MissingSample(t))
    }
}

/// Uniform grid on `[0, t_end]` merged with the requested output times.
pub fn sample_grid(t_end: f64, output_times: &[f64]) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..=GRID_INTERVALS)
        .map(|k| t_end * k as f64 / GRID_INTERVALS as f64)
        .chain(output_times.iter().copied())
        .collect();
    ts.sort_by(f64::total_cmp);
    let tol = 1e-12 * t_end.max(1.0);
    ts.dedup_by(|b, a| (*b - *a).abs() <= tol);
    ts
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    let n = err.len();
    let mut acc = 0.0;
    for i in 0..n {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}

fn positions(scenario: &MicroScenario, t: f64, gaps: &[f64]) -> Vec<f64> {
    let n = gaps.len();
    let mut x = vec![0.0; n + 1];
    x[n] = scenario.x0()[n] + scenario.vbar() * t;
    for i in (0..n).rev() {
        x[i] = x[i + 1] - gaps[i];
    }
    x
}

/// Integrates the car system on `[0, t_end]`.
///
/// Samples are stored on a uniform grid of `GRID_INTERVALS` intervals plus
/// every entry of `output_times`.
pub fn integrate(
    scenario: &MicroScenario,
    t_end: f64,
    output_times: &[f64],
    tol: Tolerances,
) -> Result<MicroTrajectory> {
    if !(t_end > 0.0) {
        return Err(GarzError::InvalidScenario(format!("end time must be positive, got {t_end}")));
    }
    if let Some(&t) = output_times.iter().find(|&&t| !(0.0..=t_end).contains(&t)) {
        return Err(GarzError::InvalidScenario(format!("output time {t} outside [0, {t_end}]")));
    }
    let grid = sample_grid(t_end, output_times);
    let n = scenario.n_gaps();
    let guard = scenario.ell() * 1e-6;
    let h_min = 1e-14 * t_end;
    let mut work = RhsWork::new(n);
    let mut stats = IntegrationStats::default();

    let mut y = scenario.initial_gaps();
    stats.min_gap = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];

    scenario.gap_rhs(&y, &mut work, &mut k1);
    stats.rhs_evaluations += 1;

    let mut samples = Vec::with_capacity(grid.len());
    samples.push(MicroState { t: 0.0, x: scenario.x0().to_vec() });
    let mut next = 1;

    let norm = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / n as f64).sqrt();
    let d0 = norm(&y);
    let d1 = norm(&k1);
    let mut h = if d0 > 1e-5 && d1 > 1e-5 { 0.01 * d0 / d1 } else { 1e-6 * t_end };
    h = h.min(t_end);

    let mut t = 0.0;
    let stage_ok = |s: &[f64]| s.iter().all(|&g| g > 0.0);

    while t < t_end {
        let last = t + h >= t_end * (1.0 - 1e-15);
        if last {
            h = t_end - t;
        }
        if h < h_min {
            return Err(GarzError::StepSizeUnderflow { t, h, state: positions(scenario, t, &y) });
        }

        let mut ok = true;
        macro_rules! eval {
            ($out:expr, $($k:expr => $a:expr),+) => {{
                for i in 0..n {
                    stage[i] = y[i] + h * (0.0 $(+ $a * $k[i])+);
                }
                if ok && !stage_ok(&stage) {
                    ok = false;
                }
                if ok {
                    scenario.gap_rhs(&stage, &mut work, &mut $out);
                    stats.rhs_evaluations += 1;
                }
            }};
        }
        eval!(k2, k1 => A21);
        eval!(k3, k1 => A31, k2 => A32);
        eval!(k4, k1 => A41, k2 => A42, k3 => A43);
        eval!(k5, k1 => A51, k2 => A52, k3 => A53, k4 => A54);
        eval!(k6, k1 => A61, k2 => A62, k3 => A63, k4 => A64, k5 => A65);
        if ok {
            for i in 0..n {
                y1[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            if y1.iter().any(|&g| g <= guard) {
                ok = false;
            }
        }
        if !ok {
            stats.rejected += 1;
            stats.guard_rejections += 1;
            h *= 0.5;
            continue;
        }
        scenario.gap_rhs(&y1, &mut work, &mut k7);
        stats.rhs_evaluations += 1;
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&err, &y, &y1, &tol);
        if e > 1.0 || !e.is_finite() {
            stats.rejected += 1;
            let fac = if e.is_finite() { (0.9 * e.powf(-0.2)).max(0.2) } else { 0.2 };
            h *= fac;
            continue;
        }

        let t1 = if last { t_end } else { t + h };
        while next < grid.len() && grid[next] <= t1 {
            let s = grid[next];
            let theta = ((s - t) / h).clamp(0.0, 1.0);
            let gaps = hermite(&y, &k1, &y1, &k7, h, theta);
            samples.push(MicroState { t: s, x: positions(scenario, s, &gaps) });
            next += 1;
        }

        stats.accepted += 1;
        stats.min_gap = y1.iter().copied().fold(stats.min_gap, f64::min);
        std::mem::swap(&mut y, &mut y1);
        std::mem::swap(&mut k1, &mut k7);
        t = t1;
        let fac = if e > 0.0 { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h *= fac;
    }

    Ok(MicroTrajectory { scenario: scenario.clone(), samples, stats })
}

fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, s: f64) -> Vec<f64> {
    if s == 1.0 {
        return y1.to_vec();
    }
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len()).map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]).collect()
}
