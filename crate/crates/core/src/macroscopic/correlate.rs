//! Sliding weighted sums `out[i] = sum_m w[m] u[i + m]`.

use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

const DIRECT_LIMIT: usize = 64;

struct Plan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex<f64>>,
}

pub(crate) struct Correlator {
    weights: Vec<f64>,
    planner: FftPlanner<f64>,
    plans: HashMap<usize, Plan>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Correlator {
    pub(crate) fn new(weights: Vec<f64>) -> Self {
        Self { weights, planner: FftPlanner::new(), plans: HashMap::new(), buf: Vec::new(), scratch: Vec::new() }
    }

    /// Fills `out` given `u.len() >= out.len() + weights.len() - 1`.
    pub(crate) fn correlate(&mut self, u: &[f64], out: &mut [f64]) {
        let m = self.weights.len();
        debug_assert!(u.len() + 1 >= out.len() + m);
        if m <= DIRECT_LIMIT || out.len() <= DIRECT_LIMIT {
            correlate_direct(&self.weights, u, out);
            return;
        }
        let size = u.len().next_power_of_two();
        if !self.plans.contains_key(&size) {
            let forward = self.planner.plan_fft_forward(size);
            let inverse = self.planner.plan_fft_inverse(size);
            let mut kernel_hat = vec![Complex::new(0.0, 0.0); size];
            for (k, &w) in self.weights.iter().enumerate() {
                kernel_hat[m - 1 - k] = Complex::new(w, 0.0);
            }
            forward.process(&mut kernel_hat);
            let scale = 1.0 / size as f64;
            for c in &mut kernel_hat {
                *c *= scale;
            }
            self.plans.insert(size, Plan { forward, inverse, kernel_hat });
        }
        let plan = &self.plans[&size];
        self.buf.clear();
        self.buf.extend(u.iter().map(|&x| Complex::new(x, 0.0)));
        self.buf.resize(size, Complex::new(0.0, 0.0));
        let need = plan.forward.get_inplace_scratch_len().max(plan.inverse.get_inplace_scratch_len());
        if self.scratch.len() < need {
            self.scratch.resize(need, Complex::new(0.0, 0.0));
        }
        plan.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (b, k) in self.buf.iter_mut().zip(&plan.kernel_hat) {
            *b *= k;
        }
        plan.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.buf[i + m - 1].re;
        }
    }
}

pub(crate) fn correlate_direct(w: &[f64], u: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = w.iter().zip(&u[i..]).map(|(a, b)| a * b).sum();
    }
}
