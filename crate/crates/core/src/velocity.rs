//! Velocity laws `v(rho, omega)` and their equilibrium inverses.

use crate::error::{GarzError, Result};

const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum VelocityModel {
    /// `v = omega (1 - rho)`
    #[default]
    Greenshields,
    /// `v = omega (1 - rho^exponent)` with `exponent` in `(0, 1]`.
    PowerLaw { exponent: f64 },
}

impl VelocityModel {
    pub fn power_law(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(GarzError::InadmissibleVelocity(exponent));
        }
        Ok(VelocityModel::PowerLaw { exponent })
    }

    pub fn name(&self) -> &'static str {
        match self {
            VelocityModel::Greenshields => "greenshields",
            VelocityModel::PowerLaw { .. } => "power",
        }
    }

    #[inline]
    pub fn speed(&self, rho: f64, omega: f64) -> f64 {
        match *self {
            VelocityModel::Greenshields => omega * (1.0 - rho),
            VelocityModel::PowerLaw { exponent } => omega * (1.0 - rho.max(0.0).powf(exponent)),
        }
    }

    #[inline]
    pub fn dspeed_drho(&self, rho: f64, omega: f64) -> f64 {
        match *self {
            VelocityModel::Greenshields => -omega,
            VelocityModel::PowerLaw { exponent } => {
                if exponent == 1.0 {
                    -omega
                } else {
                    -omega * exponent * rho.max(0.0).powf(exponent - 1.0)
                }
            }
        }
    }

    /// Density at which the speed vanishes.
    pub fn rho_max(&self, _omega: f64) -> f64 {
        1.0
    }

    /// Supremum of `dv/drho` over `rho` in `[0, rho_max]` and the listed markers.
    pub fn vprime_max(&self, omegas: &[f64]) -> Result<f64> {
        let mut sup = f64::NEG_INFINITY;
        for &w in omegas {
            if !(w > 0.0) {
                return Err(GarzError::InvalidScenario(format!("marker must be positive, got {w}")));
            }
            // dv/drho is nondecreasing in rho for both laws, so the sup sits at rho_max
            sup = sup.max(self.dspeed_drho(self.rho_max(w), w));
        }
        if !(sup < 0.0) {
            return Err(GarzError::InadmissibleVelocity(sup));
        }
        Ok(sup)
    }

    /// The density `rho` with `v(rho, omega) = vbar`.
    pub fn equilibrium_density(&self, vbar: f64, omega: f64) -> Result<f64> {
        if vbar > omega {
            return Err(GarzError::InfeasibleControl { vbar, omega });
        }
        if !(vbar > 0.0) {
            return Err(GarzError::InvalidScenario(format!("control speed must be positive, got {vbar}")));
        }
        match *self {
            VelocityModel::Greenshields => Ok(1.0 - vbar / omega),
            VelocityModel::PowerLaw { .. } => {
                let (mut lo, mut hi) = (0.0, self.rho_max(omega));
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    if self.speed(mid, omega) > vbar {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// Gap `ell / rho_eq` at which a car with marker `omega` drives at `vbar`.
    pub fn equilibrium_gap(&self, vbar: f64, omega: f64, ell: f64) -> Result<f64> {
        if !(ell > 0.0) {
            return Err(GarzError::InvalidScenario(format!("mass per car must be positive, got {ell}")));
        }
        let rho = self.equilibrium_density(vbar, omega)?;
        if rho <= 0.0 {
            return Err(GarzError::ZeroEquilibriumDensity { vbar, omega });
        }
        Ok(ell / rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODELS: [VelocityModel; 3] = [
        VelocityModel::Greenshields,
        VelocityModel::PowerLaw { exponent: 0.5 },
        VelocityModel::PowerLaw { exponent: 0.8 },
    ];

    #[test]
    fn speed_examples() {
        let g = VelocityModel::Greenshields;
        assert_eq!(g.speed(0.5, 1.0), 0.5);
        assert_eq!(g.speed(0.0, 0.625), 0.625);
        assert_eq!(g.speed(1.0, 0.7), 0.0);
        assert_eq!(g.dspeed_drho(0.3, 1.0), -1.0);
        assert_eq!(g.dspeed_drho(0.9, 0.625), -0.625);
    }

    #[test]
    fn vprime_max_examples() {
        let g = VelocityModel::Greenshields;
        assert_eq!(g.vprime_max(&[1.0, 0.625]).unwrap(), -0.625);
        assert_eq!(g.vprime_max(&[1.0]).unwrap(), -1.0);
        assert_eq!(g.vprime_max(&[0.75, 0.625, 1.0]).unwrap(), -0.625);
        assert!(g.vprime_max(&[0.0]).is_err());
        let p = VelocityModel::PowerLaw { exponent: 0.5 };
        assert_eq!(p.vprime_max(&[1.0, 0.8]).unwrap(), -0.4);
    }

    #[test]
    fn equilibrium_examples() {
        let g = VelocityModel::Greenshields;
        assert_eq!(g.equilibrium_density(0.5, 1.0).unwrap(), 0.5);
        assert!((g.equilibrium_density(0.5, 0.625).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(g.equilibrium_density(0.7, 0.7).unwrap(), 0.0);
        assert!((g.equilibrium_gap(0.5, 1.0, 1.0 / 500.0).unwrap() - 0.004).abs() < 1e-15);
        assert!((g.equilibrium_gap(0.5, 0.625, 1.0 / 500.0).unwrap() - 0.01).abs() < 1e-15);
        assert!(matches!(g.equilibrium_gap(0.7, 0.7, 0.01), Err(GarzError::ZeroEquilibriumDensity { .. })));
        assert!(matches!(g.equilibrium_density(0.8, 0.7), Err(GarzError::InfeasibleControl { .. })));
    }

    #[test]
    fn admissibility_on_grid() {
        for m in MODELS {
            for i in 1..10 {
                let w = 0.5 + 0.05 * i as f64;
                assert_eq!(m.speed(0.0, w), w);
                assert_eq!(m.speed(0.3, 0.0), 0.0);
                assert_eq!(m.speed(m.rho_max(w), w), 0.0);
                for j in 1..10 {
                    let r = 0.1 * j as f64;
                    let h = 1e-5;
                    let fd = (m.speed(r + h, w) - m.speed(r - h, w)) / (2.0 * h);
                    assert!((fd - m.dspeed_drho(r, w)).abs() <= 1e-8, "{m:?} {r} {w}");
                    let f = |x: f64| x * m.speed(x, w);
                    let d2 = (f(r + 1e-3) - 2.0 * f(r) + f(r - 1e-3)) / 1e-6;
                    assert!(d2 < 0.0);
                    assert!(m.speed(r, w + 1e-3) > m.speed(r, w));
                    assert!(m.speed(r, w) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn equilibrium_round_trips() {
        for m in MODELS {
            for i in 0..20 {
                let w = 0.6 + 0.02 * i as f64;
                for vbar in [0.1, 0.3, 0.5] {
                    let r = m.equilibrium_density(vbar, w).unwrap();
                    assert!((m.speed(r, w) - vbar).abs() <= 1e-11, "{m:?}");
                }
            }
        }
    }
}
