//! Complete experiment descriptions and the built-in examples.

use std::fmt;
use std::str::FromStr;

use crate::error::{GarzError, Result};
use crate::kernel::{Kernel, KernelFamily};
use crate::macroscopic::{BoundaryMode, MacroScenario};
use crate::microscopic::{IndexPolicy, MicroScenario, Tolerances};
use crate::profile::PiecewiseConstant;
use crate::velocity::VelocityModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    Micro,
    Macro,
    #[default]
    Both,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Micro => "micro",
            Scale::Macro => "macro",
            Scale::Both => "both",
        }
    }

    pub fn micro(self) -> bool {
        self != Scale::Macro
    }

    pub fn macro_(self) -> bool {
        self != Scale::Micro
    }
}

impl FromStr for Scale {
    type Err = GarzError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Scale::Micro),
            "macro" => Ok(Scale::Macro),
            "both" => Ok(Scale::Both),
            _ => Err(GarzError::InvalidScenario(format!("unknown scale `{s}` (expected micro, macro or both)"))),
        }
    }
}

/// Everything needed to run one or both scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub scale: Scale,
    pub kernel: Kernel,
    pub velocity: VelocityModel,
    pub vbar: f64,
    pub rho0: PiecewiseConstant,
    pub omega0: PiecewiseConstant,
    pub n_cars: usize,
    pub dx: f64,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    pub index_policy: IndexPolicy,
    pub tolerances: Tolerances,
    pub boundary: BoundaryMode,
}

impl Experiment {
    pub fn micro_scenario(&self) -> Result<MicroScenario> {
        MicroScenario::from_profiles(self.kernel, self.velocity, self.vbar, &self.rho0, &self.omega0, self.n_cars)
    }

    pub fn macro_scenario(&self) -> Result<MacroScenario> {
        Ok(MacroScenario::new(
            self.kernel,
            self.velocity,
            self.rho0.clone(),
            self.omega0.clone(),
            self.vbar,
            self.dx,
            self.t_end,
        )?
        .with_boundary(self.boundary))
    }

    pub fn with_kernel(mut self, family: KernelFamily) -> Result<Self> {
        self.kernel = Kernel::new(family, self.kernel.eta())?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&t) = self.output_times.iter().find(|&&t| !(0.0..=self.t_end).contains(&t)) {
            return Err(GarzError::InvalidScenario(format!("output time {t} outside [0, {}]", self.t_end)));
        }
        if self.scale.micro() {
            self.micro_scenario()?;
        }
        if self.scale.macro_() {
            self.macro_scenario()?;
        }
        Ok(())
    }
}

/// The three numerical examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Two plateaus with a marker jump; every theorem applies.
    Fig1Fig2,
    /// A sparse stretch ahead of the jump.
    Fig3LowDensity,
    /// Three plateaus and a long kernel.
    Fig4ThreeState,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig1Fig2, Preset::Fig3LowDensity, Preset::Fig4ThreeState];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1Fig2 => "fig1_fig2",
            Preset::Fig3LowDensity => "fig3_lowdensity",
            Preset::Fig4ThreeState => "fig4_threestate",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Fig1Fig2 => "dense queue behind a lighter platoon, constant kernel, eta = 0.5",
            Preset::Fig3LowDensity => "dense queue behind a sparse stretch, constant kernel, eta = 0.5",
            Preset::Fig4ThreeState => "three plateaus on [-5, 1], linear kernel positive at the reach, eta = 2",
        }
    }

    pub fn experiment(self) -> Experiment {
        let pc = |pieces: &[(f64, f64)], b: f64| PiecewiseConstant::new(pieces, b).expect("preset profile");
        let kernel = |f: KernelFamily, eta: f64| Kernel::new(f, eta).expect("preset kernel");
        let base = Experiment {
            scale: Scale::Both,
            kernel: kernel(KernelFamily::Constant, 0.5),
            velocity: VelocityModel::Greenshields,
            vbar: 0.5,
            rho0: pc(&[(-1.5, 0.5), (0.0, 0.3)], 1.5),
            omega0: pc(&[(-1.5, 1.0), (0.0, 5.0 / 8.0)], 1.5),
            n_cars: 501,
            dx: 2.5e-3,
            t_end: 20.0,
            output_times: vec![1.0, 2.25, 5.0, 20.0],
            index_policy: IndexPolicy::Apriori,
            tolerances: Tolerances::default(),
            boundary: BoundaryMode::Clamp,
        };
        match self {
            Preset::Fig1Fig2 => base,
            Preset::Fig3LowDensity => Experiment {
                rho0: pc(&[(-1.5, 0.5), (0.0, 0.025), (0.75, 0.05)], 1.5),
                t_end: 5.0,
                output_times: vec![1.0, 5.0],
                ..base
            },
            Preset::Fig4ThreeState => Experiment {
                kernel: kernel(KernelFamily::LinearPositive, 2.0),
                rho0: pc(&[(-5.0, 0.5), (0.0, 0.3), (0.5, 0.4)], 1.0),
                omega0: pc(&[(-5.0, 1.0), (0.0, 5.0 / 8.0), (0.5, 3.0 / 4.0)], 1.0),
                output_times: vec![1.0, 20.0],
                ..base
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = GarzError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            GarzError::InvalidScenario(format!(
                "unknown preset `{s}` (expected fig1_fig2, fig3_lowdensity or fig4_threestate)"
            ))
        })
    }
}
