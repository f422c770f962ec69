//! Piecewise-constant profiles on a bounded interval.

use crate::error::{GarzError, Result};

/// A right-continuous step function on `[a, b]`.
///
/// Piece `k` holds `values[k]` on `[starts[k], starts[k+1])`, the last piece
/// extends up to and including `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    starts: Vec<f64>,
    values: Vec<f64>,
    b: f64,
}

impl PiecewiseConstant {
    /// Builds a profile from `(start, value)` pairs; the first start is `a`.
    pub fn new(pieces: &[(f64, f64)], b: f64) -> Result<Self> {
        let Some(&(a, _)) = pieces.first() else {
            return Err(GarzError::InvalidProfile("no pieces".into()));
        };
        if !(b > a) {
            return Err(GarzError::InvalidProfile(format!("empty domain [{a}, {b}]")));
        }
        for w in pieces.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(GarzError::InvalidProfile(format!(
                    "breakpoints must increase: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if pieces.last().unwrap().0 >= b {
            return Err(GarzError::InvalidProfile(format!("breakpoint beyond right end {b}")));
        }
        if pieces.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(GarzError::InvalidProfile("non-finite entry".into()));
        }
        Ok(Self { starts: pieces.iter().map(|p| p.0).collect(), values: pieces.iter().map(|p| p.1).collect(), b })
    }

    pub fn constant(a: f64, b: f64, value: f64) -> Result<Self> {
        Self::new(&[(a, value)], b)
    }

    pub fn a(&self) -> f64 {
        self.starts[0]
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.starts.iter().copied().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn end_of(&self, k: usize) -> f64 {
        self.starts.get(k + 1).copied().unwrap_or(self.b)
    }

    fn piece_index(&self, x: f64) -> usize {
        self.starts.partition_point(|&s| s <= x).saturating_sub(1)
    }

    /// Value at `x`, or `None` outside `[a, b]`.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        if x < self.a() || x > self.b {
            return None;
        }
        Some(self.values[self.piece_index(x)])
    }

    pub fn first_value(&self) -> f64 {
        self.values[0]
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `\int_lo^hi` of the profile, with the range clipped to `[a, b]`.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.a());
        let hi = hi.min(self.b);
        if hi <= lo {
            return 0.0;
        }
        let mut sum = 0.0;
        for k in self.piece_index(lo)..self.len() {
            let s = self.starts[k].max(lo);
            let e = self.end_of(k).min(hi);
            if e > s {
                sum += self.values[k] * (e - s);
            }
            if self.end_of(k) >= hi {
                break;
            }
        }
        sum
    }

    pub fn total(&self) -> f64 {
        self.integral(self.a(), self.b)
    }

    /// Smallest value taken on `[lo, hi]` (clipped to the domain).
    pub fn min_on(&self, lo: f64, hi: f64) -> Option<f64> {
        let lo = lo.max(self.a());
        let hi = hi.min(self.b);
        if hi < lo {
            return None;
        }
        let first = self.piece_index(lo);
        let last = self.piece_index(hi);
        self.values[first..=last].iter().copied().reduce(f64::min)
    }

    /// Breakpoints strictly inside `(lo, hi)`.
    pub fn breakpoints_in(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.starts[1..].iter().copied().filter(move |&s| s > lo && s < hi)
    }

    /// The point `x` with `\int_a^x = m`, for `m` in `[0, total]`.
    ///
    /// Inside a zero-valued piece the leftmost point is returned.
    pub fn invert_cumulative(&self, m: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len() {
            let w = self.values[k] * (self.end_of(k) - self.starts[k]);
            if acc + w >= m && self.values[k] > 0.0 {
                return (self.starts[k] + (m - acc) / self.values[k]).min(self.end_of(k));
            }
            acc += w;
        }
        self.b
    }

    /// Monotonicity on `[lo, hi]`: `Some(true)` nondecreasing, `Some(false)`
    /// nonincreasing, `None` neither (a constant counts as nondecreasing).
    pub fn monotone_on(&self, lo: f64, hi: f64) -> Option<bool> {
        let lo = lo.max(self.a());
        let hi = hi.min(self.b);
        let vals = &self.values[self.piece_index(lo)..=self.piece_index(hi)];
        if vals.windows(2).all(|w| w[1] >= w[0]) {
            Some(true)
        } else if vals.windows(2).all(|w| w[1] <= w[0]) {
            Some(false)
        } else {
            None
        }
    }

    /// Applies `f` to every value.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self { starts: self.starts.clone(), values: self.values.iter().map(|&v| f(v)).collect(), b: self.b }
    }

    pub(crate) fn from_parts(starts: Vec<f64>, values: Vec<f64>, b: f64) -> Self {
        Self { starts, values, b }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig() -> PiecewiseConstant {
        PiecewiseConstant::new(&[(-1.5, 0.5), (0.0, 0.3)], 1.5).unwrap()
    }

    #[test]
    fn evaluation_is_right_continuous() {
        let p = fig();
        assert_eq!(p.value_at(-1.5), Some(0.5));
        assert_eq!(p.value_at(-1e-12), Some(0.5));
        assert_eq!(p.value_at(0.0), Some(0.3));
        assert_eq!(p.value_at(1.5), Some(0.3));
        assert_eq!(p.value_at(1.6), None);
    }

    #[test]
    fn integrals() {
        let p = fig();
        assert!((p.total() - 1.2).abs() < 1e-15);
        assert!((p.integral(-0.1, 0.1) - 0.08).abs() < 1e-15);
        assert!((p.integral(1.0, 9.0) - 0.15).abs() < 1e-15);
        assert_eq!(p.integral(2.0, 3.0), 0.0);
    }

    #[test]
    fn inversion_matches_integral() {
        let p = PiecewiseConstant::new(&[(-1.5, 0.5), (0.0, 0.025), (0.75, 0.05)], 1.5).unwrap();
        for k in 0..=100 {
            let m = p.total() * k as f64 / 100.0;
            let x = p.invert_cumulative(m);
            assert!((p.integral(p.a(), x) - m).abs() < 1e-14);
        }
    }

    #[test]
    fn min_and_monotone() {
        let p = PiecewiseConstant::new(&[(0.0, 0.5), (1.0, 0.3), (2.0, 0.4)], 3.0).unwrap();
        assert_eq!(p.min_on(0.0, 0.9), Some(0.5));
        assert_eq!(p.min_on(0.5, 3.0), Some(0.3));
        assert_eq!(p.monotone_on(0.0, 1.5), Some(false));
        assert_eq!(p.monotone_on(1.5, 3.0), Some(true));
        assert_eq!(p.monotone_on(0.0, 3.0), None);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(PiecewiseConstant::new(&[(0.0, 1.0), (0.0, 2.0)], 1.0).is_err());
        assert!(PiecewiseConstant::new(&[(0.0, 1.0), (1.0, 2.0)], 1.0).is_err());
        assert!(PiecewiseConstant::new(&[], 1.0).is_err());
    }
}
