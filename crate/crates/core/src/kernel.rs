//! Look-ahead kernels and the discrete weights derived from them.
//!
//! Every kernel is a nonnegative, nonincreasing density on `[0, eta]` with
//! unit mass, extended by zero outside its support. The five families carry
//! closed-form antiderivatives, so all weights are exact up to rounding.

use std::fmt;
use std::str::FromStr;

use crate::error::{GarzError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// `1/eta`
    Constant,
    /// `2(eta - x)/eta^2`, vanishing at the end of the support.
    LinearVanishing,
    /// `(3 eta - 2x)/(2 eta^2)`, positive at the end of the support.
    LinearPositive,
    /// `3(eta^2 - x^2)/(2 eta^3)`
    ConcaveQuadratic,
    /// `3(eta - x)^2/eta^3`
    ConvexQuadratic,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::Constant,
        KernelFamily::LinearVanishing,
        KernelFamily::LinearPositive,
        KernelFamily::ConcaveQuadratic,
        KernelFamily::ConvexQuadratic,
    ];

    /// Short name used in configuration files.
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Constant => "const",
            KernelFamily::LinearVanishing => "lin",
            KernelFamily::LinearPositive => "lin2",
            KernelFamily::ConcaveQuadratic => "conc",
            KernelFamily::ConvexQuadratic => "conv",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = GarzError;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| GarzError::UnknownKernel(s.to_string()))
    }
}

/// A kernel family together with its reach `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    eta: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(GarzError::NonPositiveReach(eta));
        }
        Ok(Self { family, eta })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn is_constant(&self) -> bool {
        self.family == KernelFamily::Constant
    }

    pub fn is_concave(&self) -> bool {
        !matches!(self.family, KernelFamily::ConvexQuadratic)
    }

    /// Kernel value, zero outside `[0, eta]`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(0.0..=self.eta).contains(&x) {
            return 0.0;
        }
        let e = self.eta;
        match self.family {
            KernelFamily::Constant => 1.0 / e,
            KernelFamily::LinearVanishing => 2.0 * (e - x) / (e * e),
            KernelFamily::LinearPositive => (3.0 * e - 2.0 * x) / (2.0 * e * e),
            KernelFamily::ConcaveQuadratic => 3.0 * (e * e - x * x) / (2.0 * e * e * e),
            KernelFamily::ConvexQuadratic => 3.0 * (e - x) * (e - x) / (e * e * e),
        }
    }

    /// Derivative of the kernel on the open support, zero outside.
    pub fn derivative(&self, x: f64) -> f64 {
        if !(0.0..=self.eta).contains(&x) {
            return 0.0;
        }
        let e = self.eta;
        match self.family {
            KernelFamily::Constant => 0.0,
            KernelFamily::LinearVanishing => -2.0 / (e * e),
            KernelFamily::LinearPositive => -1.0 / (e * e),
            KernelFamily::ConcaveQuadratic => -3.0 * x / (e * e * e),
            KernelFamily::ConvexQuadratic => -6.0 * (e - x) / (e * e * e),
        }
    }

    /// `\int_0^x` of the extended kernel; 0 for `x <= 0`, 1 for `x >= eta`.
    pub fn cumulative(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.eta {
            return 1.0;
        }
        let e = self.eta;
        match self.family {
            KernelFamily::Constant => x / e,
            KernelFamily::LinearVanishing => x * (2.0 * e - x) / (e * e),
            KernelFamily::LinearPositive => x * (3.0 * e - x) / (2.0 * e * e),
            KernelFamily::ConcaveQuadratic => x * (3.0 * e * e - x * x) / (2.0 * e * e * e),
            KernelFamily::ConvexQuadratic => {
                let r = (e - x) / e;
                1.0 - r * r * r
            }
        }
    }

    /// Mass of the extended kernel over `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(GarzError::InvalidInterval { a, b });
        }
        Ok(self.mass_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn mass_unchecked(&self, a: f64, b: f64) -> f64 {
        (self.cumulative(b) - self.cumulative(a)).max(0.0)
    }

    /// Weights seen by car `i` over the gaps ahead of it.
    ///
    /// Entry `(j, g)` weights the gap `[x_{i+j}, x_{i+j+1}]`; the entry with
    /// `i + j == N` (the last car) carries the residual mass assigned to the
    /// control speed. The final entry is always `1 - sum(previous)`, so the
    /// weights sum to one. Zero weights are omitted.
    pub fn weights_micro(&self, positions: &[f64], i: usize) -> Result<Vec<(usize, f64)>> {
        if i + 1 >= positions.len() {
            return Err(GarzError::InvalidScenario(format!(
                "car index {i} has no leader ahead of it ({} cars)",
                positions.len()
            )));
        }
        if let Some(k) = positions.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(GarzError::CorruptedState { index: k });
        }
        let mut out = Vec::new();
        let xi = positions[i];
        self.walk_weights(
            positions.len() - 1 - i,
            |j| positions[i + j + 1] - xi,
            |j, g| {
                if g > 0.0 {
                    out.push((j, g));
                }
            },
        );
        Ok(out)
    }

    /// Shared weight walk for one car.
    ///
    /// `ahead` is the number of gaps between the car and the last car, and
    /// `offset(j)` returns the distance from the car to the front of gap `j`.
    /// `emit(j, g)` receives every weight, including `j == ahead` for the
    /// residual on the control speed.
    #[inline]
    pub(crate) fn walk_weights(
        &self,
        ahead: usize,
        mut offset: impl FnMut(usize) -> f64,
        mut emit: impl FnMut(usize, f64),
    ) {
        let mut sum: f64 = 0.0;
        let mut lo = 0.0;
        for j in 0..ahead {
            let hi = offset(j);
            if hi >= self.eta {
                emit(j, (1.0 - sum).max(0.0));
                return;
            }
            let g = self.mass_unchecked(lo, hi);
            sum += g;
            emit(j, g);
            lo = hi;
        }
        emit(ahead, (1.0 - sum).max(0.0));
    }

    /// Cell weights `g_k = \int_{k dx}^{(k+1) dx} W` for the finite-volume flux.
    ///
    /// A trailing partial cell is included when `eta / dx` is not an integer;
    /// the last weight is `1 - sum(previous)`.
    pub fn weights_macro(&self, dx: f64) -> Result<Vec<f64>> {
        if !(dx > 0.0) {
            return Err(GarzError::InvalidScenario(format!("cell width must be positive, got {dx}")));
        }
        let ratio = self.eta / dx;
        let nearest = ratio.round();
        let count =
            if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) { nearest as usize } else { ratio.ceil() as usize }
                .max(1);
        let mut w = Vec::with_capacity(count);
        let mut sum = 0.0;
        for k in 0..count - 1 {
            let g = self.mass_unchecked(k as f64 * dx, (k + 1) as f64 * dx);
            sum += g;
            w.push(g);
        }
        w.push((1.0 - sum).max(0.0));
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k(f: KernelFamily, eta: f64) -> Kernel {
        Kernel::new(f, eta).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(k(KernelFamily::Constant, 0.5).eval(0.2), 2.0);
        assert_eq!(k(KernelFamily::LinearVanishing, 0.5).eval(0.0), 4.0);
        assert_eq!(k(KernelFamily::ConcaveQuadratic, 0.5).eval(0.5), 0.0);
        assert_eq!(k(KernelFamily::Constant, 0.5).eval(0.6), 0.0);
        assert_eq!(k(KernelFamily::Constant, 0.5).eval(-1e-9), 0.0);
    }

    #[test]
    fn mass_examples() {
        assert_eq!(k(KernelFamily::Constant, 0.5).mass(0.0, 0.5).unwrap(), 1.0);
        let m = k(KernelFamily::LinearVanishing, 0.5).mass(0.0, 0.25).unwrap();
        assert!((m - 0.75).abs() < 1e-15);
        for f in KernelFamily::ALL {
            assert_eq!(k(f, 0.5).mass(0.5, 1.5).unwrap(), 0.0);
        }
        assert!(matches!(k(KernelFamily::Constant, 0.5).mass(0.3, 0.2), Err(GarzError::InvalidInterval { .. })));
    }

    #[test]
    fn families_are_normalized_nonincreasing_and_classified() {
        for f in KernelFamily::ALL {
            let ker = k(f, 0.7);
            // midpoint rule on a fine grid, independent of the antiderivatives
            let n = 100_000;
            let h = 0.7 / n as f64;
            let total: f64 = (0..n).map(|j| ker.eval((j as f64 + 0.5) * h) * h).sum();
            assert!((total - 1.0).abs() < 1e-8, "{f}: {total}");
            assert!((ker.mass(0.0, 0.7).unwrap() - 1.0).abs() < 1e-12);
            let samples: Vec<f64> = (0..=200).map(|j| ker.eval(0.7 * j as f64 / 200.0)).collect();
            assert!(samples.iter().all(|&v| v >= 0.0));
            assert!(samples.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{f} increases");
        }
        let concave: Vec<_> = KernelFamily::ALL.into_iter().filter(|f| k(*f, 1.0).is_concave()).collect();
        assert_eq!(concave.len(), 4);
        assert!(!k(KernelFamily::ConvexQuadratic, 1.0).is_concave());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for f in KernelFamily::ALL {
            let ker = k(f, 0.5);
            for j in 1..50 {
                let x = 0.5 * j as f64 / 50.0;
                let h = 1e-6;
                let fd = (ker.eval(x + h) - ker.eval(x - h)) / (2.0 * h);
                assert!((fd - ker.derivative(x)).abs() < 1e-6, "{f} at {x}");
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for f in KernelFamily::ALL {
            assert_eq!(f.name().parse::<KernelFamily>().unwrap(), f);
        }
        assert!("gauss".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn macro_weights_examples() {
        assert_eq!(k(KernelFamily::Constant, 0.5).weights_macro(0.25).unwrap(), vec![0.5, 0.5]);
        let w = k(KernelFamily::LinearVanishing, 0.5).weights_macro(0.25).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        let w = k(KernelFamily::Constant, 0.5).weights_macro(2.5e-3).unwrap();
        assert_eq!(w.len(), 200);
        let w = k(KernelFamily::Constant, 0.5).weights_macro(0.3).unwrap();
        assert_eq!(w.len(), 2);
        assert!((w[0] - 0.6).abs() < 1e-15 && (w[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn macro_weights_match_midpoint_quadrature() {
        for f in KernelFamily::ALL {
            let ker = k(f, 0.5);
            let dx = 0.0125;
            let w = ker.weights_macro(dx).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.windows(2).all(|p| p[1] <= p[0] + 1e-15));
            for (kk, &g) in w.iter().enumerate() {
                let n = 10_000;
                let h = dx / n as f64;
                let q: f64 = (0..n).map(|j| ker.eval(kk as f64 * dx + (j as f64 + 0.5) * h) * h).sum();
                assert!((q - g).abs() < 1e-8, "{f} cell {kk}: {q} vs {g}");
            }
        }
    }

    #[test]
    fn micro_weights_uniform_constant_kernel() {
        // uniform spacing 0.1, eta = 5 gaps: each gap inside carries 1/5
        let ker = k(KernelFamily::Constant, 0.5);
        let x: Vec<f64> = (0..=20).map(|j| j as f64 * 0.1).collect();
        let w = ker.weights_micro(&x, 3).unwrap();
        assert_eq!(w.len(), 5);
        for (j, (jj, g)) in w.iter().enumerate() {
            assert_eq!(*jj, j);
            assert!((g - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn micro_weights_last_follower() {
        let ker = k(KernelFamily::LinearVanishing, 0.5);
        let x = [0.0, 0.3, 0.5, 0.6];
        let w = ker.weights_micro(&x, 2).unwrap();
        let m0 = ker.mass(0.0, 0.1).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].0, 0);
        assert!((w[0].1 - m0).abs() < 1e-15);
        assert_eq!(w[1].0, 1);
        assert!((w[1].1 - (1.0 - m0)).abs() < 1e-15);
        // gap beyond the reach: all weight on the single gap, no residual
        let w = ker.weights_micro(&[0.0, 2.0], 0).unwrap();
        assert_eq!(w, vec![(0, 1.0)]);
    }

    #[test]
    fn micro_weights_reject_bad_positions() {
        let ker = k(KernelFamily::Constant, 0.5);
        assert!(matches!(ker.weights_micro(&[0.0, 0.2, 0.2, 0.4], 0), Err(GarzError::CorruptedState { index: 1 })));
    }

    fn family() -> impl Strategy<Value = KernelFamily> {
        prop::sample::select(KernelFamily::ALL.to_vec())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn mass_is_additive_and_nonnegative(f in family(), eta in 0.1f64..3.0, u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0) {
            let ker = k(f, eta);
            let mut p = [u * eta, v * eta, w * eta];
            p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let ab = ker.mass(p[0], p[1]).unwrap();
            let bc = ker.mass(p[1], p[2]).unwrap();
            let ac = ker.mass(p[0], p[2]).unwrap();
            prop_assert!(ab >= 0.0 && bc >= 0.0);
            prop_assert!((ac - ab - bc).abs() <= 1e-12);
        }

        #[test]
        fn micro_weights_sum_to_one(f in family(), eta in 0.05f64..2.0, gaps in prop::collection::vec(0.001f64..0.5, 1..40), pick in 0.0f64..1.0) {
            let ker = k(f, eta);
            let mut x = vec![0.0];
            for g in &gaps {
                x.push(x.last().unwrap() + g);
            }
            let i = ((gaps.len() as f64) * pick) as usize % gaps.len();
            let w = ker.weights_micro(&x, i).unwrap();
            let s: f64 = w.iter().map(|p| p.1).sum();
            prop_assert!((s - 1.0).abs() <= 1e-15);
            prop_assert!(w.iter().all(|p| p.1 > 0.0));
        }
    }
}
