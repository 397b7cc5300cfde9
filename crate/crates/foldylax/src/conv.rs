//! Trapezoid-rule causal convolution ∫₀^t g(t−r) f(r) dr on a uniform grid.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Above this length the FFT path is used.
pub const FFT_THRESHOLD: usize = 4096;

/// Convolution with a fixed kernel; the kernel spectrum is computed once.
pub struct Convolver {
    g: Vec<f64>,
    dt: f64,
    spectrum: Option<FftState>,
}

struct FftState {
    len: usize,
    g_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Convolver {
    pub fn new(g: Vec<f64>, dt: f64) -> Self {
        Self::with_threshold(g, dt, FFT_THRESHOLD)
    }

    /// FFT is used when the length exceeds `threshold`.
    pub fn with_threshold(g: Vec<f64>, dt: f64, threshold: usize) -> Self {
        let n = g.len();
        let spectrum = (n > threshold).then(|| {
            let len = (2 * n).next_power_of_two();
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(len);
            let inv = planner.plan_fft_inverse(len);
            let mut g_hat: Vec<Complex64> = g.iter().map(|x| Complex64::new(*x, 0.0)).collect();
            g_hat.resize(len, Complex64::new(0.0, 0.0));
            fwd.process(&mut g_hat);
            FftState {
                len,
                g_hat,
                fwd,
                inv,
            }
        });
        Self { g, dt, spectrum }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.g.len());
        let n = f.len();
        let full = match &self.spectrum {
            Some(s) => {
                let mut buf: Vec<Complex64> = f.iter().map(|x| Complex64::new(*x, 0.0)).collect();
                buf.resize(s.len, Complex64::new(0.0, 0.0));
                s.fwd.process(&mut buf);
                for (b, g) in buf.iter_mut().zip(&s.g_hat) {
                    *b *= g;
                }
                s.inv.process(&mut buf);
                let scale = 1.0 / s.len as f64;
                buf[..n].iter().map(|z| z.re * scale).collect()
            }
            None => direct_full(&self.g, f),
        };
        let g = &self.g;
        let mut out = vec![0.0; n];
        for k in 1..n {
            out[k] = self.dt * (full[k] - 0.5 * (g[k] * f[0] + g[0] * f[k]));
        }
        out
    }
}

fn direct_full(g: &[f64], f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for m in 0..=k {
            s += g[k - m] * f[m];
        }
        *o = s;
    }
    out
}

/// g_k = sin(k dt / ω_M).
pub fn sine_kernel(n: usize, dt: f64, omega_m: f64) -> Vec<f64> {
    (0..n).map(|k| (k as f64 * dt / omega_m).sin()).collect()
}
