//! Scenarios shared by the benchmarks.

use garz_core::macroscopic::MacroScenario;
use garz_core::microscopic::MicroScenario;
use garz_core::{Experiment, KernelFamily, Preset};

/// The two-plateau example shortened to `t_end`.
pub fn fig1(t_end: f64) -> Experiment {
    let e = Preset::Fig1Fig2.experiment();
    let output_times = e.output_times.iter().copied().filter(|&t| t <= t_end).collect();
    Experiment { t_end, output_times, ..e }
}

pub fn micro(n_cars: usize, family: KernelFamily) -> MicroScenario {
    let e = Experiment { n_cars, ..fig1(1.0) }.with_kernel(family).expect("kernel");
    e.micro_scenario().expect("micro scenario")
}

pub fn macro_(dx: f64, t_end: f64, family: KernelFamily) -> MacroScenario {
    let e = Experiment { dx, ..fig1(t_end) }.with_kernel(family).expect("kernel");
    e.macro_scenario().expect("macro scenario")
}
