use super::{MicroScenario, MicroState, MicroTrajectory};
use crate::bound::{cumulative_trapezoid, LyapunovBound};
use crate::error::{GarzError, Result};

const HYPOTHESIS_TOL: f64 = 1e-12;

/// Smallest `J` with `sum_{i >= J} max(y_i(0), Lbar_i) <= eta`.
pub fn compute_j(scenario: &MicroScenario) -> Result<Option<usize>> {
    let y0 = scenario.initial_gaps();
    let lbar = scenario.equilibrium_gaps()?;
    let mut sum = 0.0;
    let mut j = None;
    for i in (0..y0.len()).rev() {
        sum += y0[i].max(lbar[i]);
        if sum > scenario.eta() {
            break;
        }
        j = Some(i);
    }
    Ok(j)
}

/// Cars that stay within `eta` of the leader at every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BulkSet {
    pub indices: Vec<usize>,
}

impl BulkSet {
    pub fn first(&self) -> Option<usize> {
        self.indices.first().copied()
    }
}

pub fn bulk_set(trajectory: &MicroTrajectory) -> BulkSet {
    let n = trajectory.scenario().n_gaps();
    let eta = trajectory.scenario().eta();
    let indices = (0..n)
        .filter(|&i| {
            trajectory.samples().iter().all(|s| {
                let lead = s.leader();
                s.x[i] >= lead - eta && s.x[i] <= lead
            })
        })
        .collect();
    BulkSet { indices }
}

/// Which gaps enter the Lyapunov sum.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum IndexPolicy {
    /// `J..N` from the a priori reach condition.
    #[default]
    Apriori,
    /// The cars found within reach at every sample.
    Bulk,
    /// Every gap.
    All,
    /// An explicit set of gap indices.
    Custom(Vec<usize>),
}

impl IndexPolicy {
    pub fn resolve(&self, trajectory: &MicroTrajectory) -> Result<Vec<usize>> {
        let s = trajectory.scenario();
        let n = s.n_gaps();
        match self {
            IndexPolicy::Apriori => {
                let j = compute_j(s)?.ok_or_else(|| {
                    GarzError::InvalidScenario("no car satisfies the a priori reach condition".into())
                })?;
                Ok((j..n).collect())
            }
            IndexPolicy::Bulk => Ok(bulk_set(trajectory).indices),
            IndexPolicy::All => Ok((0..n).collect()),
            IndexPolicy::Custom(v) => {
                let mut v = v.clone();
                v.sort_unstable();
                v.dedup();
                if let Some(&i) = v.iter().find(|&&i| i >= n) {
                    return Err(GarzError::InvalidScenario(format!("gap index {i} out of range (N = {n})")));
                }
                Ok(v)
            }
        }
    }
}

/// `min_{i = first..=N} min(ell / y_i(0), ell / Lbar_i)`; index `N` adds the
/// equilibrium density behind the leader.
pub fn rho_min_micro(scenario: &MicroScenario, first: usize) -> Result<f64> {
    let y0 = scenario.initial_gaps();
    let lbar = scenario.equilibrium_gaps()?;
    let ell = scenario.ell();
    let mut m = scenario.boundary_density()?;
    for i in first..y0.len() {
        m = m.min(ell / y0[i]).min(ell / lbar[i]);
    }
    Ok(m)
}

/// `sum_i y_i (ell / y_i - ell / Lbar_i)^2` over `indices`.
pub fn lyapunov_micro(scenario: &MicroScenario, state: &MicroState, indices: &[usize]) -> Result<f64> {
    let lbar = scenario.equilibrium_gaps()?;
    let ell = scenario.ell();
    let mut sum = 0.0;
    for &i in indices {
        let y = state.x[i + 1] - state.x[i];
        let d = ell / y - ell / lbar[i];
        sum += y * d * d;
    }
    Ok(sum)
}

/// Sign pattern of `values`: `Some(true)` nondecreasing, `Some(false)`
/// nonincreasing, within `tol`.
fn monotone_direction(values: &[f64], tol: f64) -> Option<bool> {
    if values.windows(2).all(|w| w[1] >= w[0] - tol) {
        Some(true)
    } else if values.windows(2).all(|w| w[1] <= w[0] + tol) {
        Some(false)
    } else {
        None
    }
}

/// Concave kernel, one marker on `first..N`, and initial gaps monotone on
/// one side of the equilibrium gap (increasing below it or decreasing above).
pub fn concave_decay_applies(scenario: &MicroScenario, first: usize) -> Result<bool> {
    let n = scenario.n_gaps();
    if !scenario.kernel().is_concave() || first >= n {
        return Ok(false);
    }
    let w = scenario.omegas()[first];
    if scenario.omegas()[first..].iter().any(|&o| (o - w).abs() > HYPOTHESIS_TOL) {
        return Ok(false);
    }
    let lbar = scenario.velocity().equilibrium_gap(scenario.vbar(), w, scenario.ell())?;
    let y = &scenario.initial_gaps()[first..];
    let below = y.iter().all(|&g| g <= lbar + HYPOTHESIS_TOL);
    let above = y.iter().all(|&g| g >= lbar - HYPOTHESIS_TOL);
    let inc = y.windows(2).all(|w| w[1] >= w[0] - HYPOTHESIS_TOL);
    let dec = y.windows(2).all(|w| w[1] <= w[0] + HYPOTHESIS_TOL);
    let ok = (inc && below) || (dec && above);
    Ok(ok)
}

fn is_suffix(indices: &[usize], n: usize) -> Option<usize> {
    let first = *indices.first()?;
    (indices.len() == n - first && indices.iter().enumerate().all(|(k, &i)| i == first + k)).then_some(first)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroLyapunov {
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub rho_min: Option<f64>,
    pub vprime_max: f64,
    pub bound: LyapunovBound,
}

/// Lyapunov values at every sample together with the applicable bound.
///
/// A bound is produced only for a suffix `first..N` of gaps lying within
/// the a priori index `J` or the observed bulk set.
pub fn lyapunov_series(trajectory: &MicroTrajectory, policy: &IndexPolicy) -> Result<MicroLyapunov> {
    let s = trajectory.scenario();
    let n = s.n_gaps();
    let indices = policy.resolve(trajectory)?;
    let times = trajectory.times();
    let values = trajectory.samples().iter().map(|st| lyapunov_micro(s, st, &indices)).collect::<Result<Vec<_>>>()?;
    let vprime_max = s.velocity().vprime_max(s.omegas())?;

    let within = |first: usize| -> Result<bool> {
        if compute_j(s)?.is_some_and(|j| first >= j) {
            return Ok(true);
        }
        let bulk = bulk_set(trajectory);
        Ok((first..n).all(|i| bulk.indices.binary_search(&i).is_ok()))
    };
    let mut rho_min = None;
    let bound = match is_suffix(&indices, n) {
        None => LyapunovBound::NotApplicable("summation set is not a trailing block of cars".into()),
        Some(first) if !within(first)? => {
            LyapunovBound::NotApplicable("summation set leaves the reach of the leader".into())
        }
        Some(first) => {
            let rm = rho_min_micro(s, first)?;
            rho_min = Some(rm);
            let l0 = values[0];
            if s.kernel().is_constant() {
                let rate = 2.0 / s.eta() * vprime_max * rm;
                let values = times.iter().map(|&t| l0 * (rate * t).exp()).collect();
                LyapunovBound::Constant { rate, values }
            } else if concave_decay_applies(s, first)? {
                let w: Vec<f64> =
                    trajectory.samples().iter().map(|st| s.kernel().eval(st.leader() - st.x[first])).collect();
                let values = cumulative_trapezoid(&times, &w)
                    .into_iter()
                    .map(|i| l0 * (2.0 * vprime_max * rm * i).exp())
                    .collect();
                LyapunovBound::Concave { values }
            } else if s.kernel().is_concave() {
                LyapunovBound::NotApplicable("concave kernel without uniform markers and monotone gaps".into())
            } else {
                LyapunovBound::NotApplicable("kernel is neither constant nor concave".into())
            }
        }
    };
    Ok(MicroLyapunov { indices, times, values, rho_min, vprime_max, bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPrincipleReport {
    /// Worst excursion of each checked gap outside its band.
    pub per_gap: Vec<(usize, f64)>,
    pub worst: f64,
}

/// Excursions of `y_i(t)` outside `[min(y_i(0), Lbar_i), max(y_i(0), Lbar_i)]`
/// for gaps `first..N`.
pub fn max_principle_check(trajectory: &MicroTrajectory, first: usize) -> Result<MaxPrincipleReport> {
    let s = trajectory.scenario();
    let y0 = s.initial_gaps();
    let lbar = s.equilibrium_gaps()?;
    let mut per_gap = Vec::new();
    let mut worst: f64 = 0.0;
    for i in first..s.n_gaps() {
        let lo = y0[i].min(lbar[i]);
        let hi = y0[i].max(lbar[i]);
        let mut v: f64 = 0.0;
        for st in trajectory.samples() {
            let y = st.x[i + 1] - st.x[i];
            v = v.max(lo - y).max(y - hi);
        }
        worst = worst.max(v);
        per_gap.push((i, v));
    }
    Ok(MaxPrincipleReport { per_gap, worst })
}

/// Largest break of the initial monotone direction of gaps `first..N` over
/// all samples; `None` when the initial gaps are not monotone.
pub fn monotone_gaps(trajectory: &MicroTrajectory, first: usize) -> Option<f64> {
    let y0 = trajectory.scenario().initial_gaps();
    let increasing = monotone_direction(&y0[first..], HYPOTHESIS_TOL)?;
    let mut worst: f64 = 0.0;
    for st in trajectory.samples() {
        for i in first..y0.len().saturating_sub(1) {
            let a = st.x[i + 1] - st.x[i];
            let b = st.x[i + 2] - st.x[i + 1];
            let d = if increasing { a - b } else { b - a };
            worst = worst.max(d);
        }
    }
    Some(worst)
}

/// Diagonal of the gap linearization at equilibrium,
/// `mass(0, Lbar_i) dv/drho(ell / Lbar_i) ell / Lbar_i^2`.
pub fn jacobian_diagonal(scenario: &MicroScenario) -> Result<Vec<f64>> {
    let lbar = scenario.equilibrium_gaps()?;
    let ell = scenario.ell();
    Ok(lbar
        .iter()
        .zip(scenario.omegas())
        .map(|(&l, &w)| {
            let g = scenario.kernel().mass_unchecked(0.0, l);
            g * scenario.velocity().dspeed_drho(ell / l, w) * ell / (l * l)
        })
        .collect())
}
