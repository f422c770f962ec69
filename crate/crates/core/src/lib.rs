//! Micro and macro solvers for nonlocal second-order traffic flow, with the
//! Lyapunov diagnostics used to certify stabilization towards equilibrium.

pub mod analysis;
pub mod bound;
pub mod error;
pub mod kernel;
pub mod macroscopic;
pub mod microscopic;
pub mod preset;
pub mod profile;
pub mod velocity;

pub use bound::LyapunovBound;
pub use error::{GarzError, Result};
pub use kernel::{Kernel, KernelFamily};
pub use preset::{Experiment, Preset, Scale};
pub use profile::PiecewiseConstant;
pub use velocity::VelocityModel;
