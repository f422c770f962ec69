pub const ROUNDOFF_FLOOR: f64 = 1e-24;

/// Exponential envelope for a Lyapunov series.
#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovBound {
    /// `L(0) exp(rate t)`.
    Constant {
        rate: f64,
        values: Vec<f64>,
    },
    /// `L(0) exp(2 v'_max rho_min int_0^t W(s) ds)` with the window length of the model.
    Concave {
        values: Vec<f64>,
    },
    NotApplicable(String),
}

impl LyapunovBound {
    pub fn values(&self) -> Option<&[f64]> {
        match self {
            LyapunovBound::Constant { values, .. } | LyapunovBound::Concave { values } => Some(values),
            LyapunovBound::NotApplicable(_) => None,
        }
    }

    /// Largest `L / bound - 1` over the samples; `None` without a bound.
    /// Values below `ROUNDOFF_FLOOR` count as zero.
    pub fn excess(&self, lyapunov: &[f64]) -> Option<f64> {
        let b = self.values()?;
        Some(
            lyapunov
                .iter()
                .zip(b)
                .map(|(&l, &u)| if l <= u + ROUNDOFF_FLOOR { (l - u) / u.max(ROUNDOFF_FLOOR) } else { (l - u) / u })
                .fold(f64::NEG_INFINITY, f64::max)
                .max(-1.0),
        )
    }
}

/// Running trapezoid integral, starting at zero.
pub(crate) fn cumulative_trapezoid(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (f[k] + f[k - 1]) * (t[k] - t[k - 1]);
        }
        out.push(acc);
    }
    out
}
