//! Frequency-domain oracle on the Bromwich line Re s = σ.
//!
//! The forward transform is the trapezoid rule applied to f(t)e^{−σt}e^{−iωt};
//! on a grid laid out for a time grid (Δω = 2π/(N_f dt), N_f = next power of
//! two ≥ 2n) it is a single FFT and the inverse is the matching inverse FFT
//! followed by multiplication with e^{σt}. Keep σT moderate (≲ 25), since
//! e^{σT} amplifies roundoff in the inverse.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::cluster::{rational_envelope, CouplingData};
use crate::signal::{CausalSignal, TimeGrid};
use crate::{invalid, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FftLayout {
    pub n_fft: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyGrid {
    pub sigma: f64,
    /// Ascending, uniformly spaced.
    pub omegas: Vec<f64>,
    pub layout: Option<FftLayout>,
}

impl FrequencyGrid {
    /// ω_k = (k − N_f/2)Δω, k = 0..N_f, covering [−π/dt, π/dt).
    pub fn for_time_grid(grid: TimeGrid, sigma: f64) -> Self {
        let n_fft = (2 * grid.n).next_power_of_two();
        let dw = 2.0 * PI / (n_fft as f64 * grid.dt);
        let half = (n_fft / 2) as f64;
        Self {
            sigma,
            omegas: (0..n_fft).map(|k| (k as f64 - half) * dw).collect(),
            layout: Some(FftLayout {
                n_fft,
                dt: grid.dt,
            }),
        }
    }

    /// `count` points spanning [−omega_max, omega_max].
    pub fn uniform(sigma: f64, omega_max: f64, count: usize) -> Self {
        let omegas = if count < 2 {
            vec![0.0]
        } else {
            (0..count)
                .map(|k| -omega_max + 2.0 * omega_max * k as f64 / (count - 1) as f64)
                .collect()
        };
        Self {
            sigma,
            omegas,
            layout: None,
        }
    }

    pub fn n_freq(&self) -> usize {
        self.omegas.len()
    }

    pub fn omega_max(&self) -> f64 {
        self.omegas.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    pub fn spacing(&self) -> f64 {
        if self.omegas.len() < 2 {
            0.0
        } else {
            self.omegas[1] - self.omegas[0]
        }
    }

    /// Warns when the window is below half the Nyquist frequency of `grid`.
    pub fn check_resolution(&self, grid: &TimeGrid) {
        if self.omega_max() < 0.5 * PI / grid.dt {
            log::warn!(
                "frequency window {:.3e} rad/s below half the grid Nyquist {:.3e}",
                self.omega_max(),
                PI / grid.dt
            );
        }
    }

    fn fft_matches(&self, grid: &TimeGrid) -> Option<FftLayout> {
        self.layout
            .filter(|l| l.dt == grid.dt && l.n_fft >= grid.n && l.n_fft == self.omegas.len())
    }
}

fn trapezoid_weights(n: usize, k: usize) -> f64 {
    if k == 0 || k == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// Direct trapezoid sums at arbitrary ω.
pub fn forward_at(f: &CausalSignal, sigma: f64, omegas: &[f64]) -> Vec<Complex64> {
    let n = f.len();
    let dt = f.grid.dt;
    omegas
        .par_iter()
        .map(|&w| {
            let step = Complex64::new(-sigma * dt, -w * dt).exp();
            let mut z = Complex64::new(1.0, 0.0);
            let mut acc = ZERO;
            for (k, v) in f.samples.iter().enumerate() {
                if k % 256 == 0 {
                    z = Complex64::new(-sigma * k as f64 * dt, -w * k as f64 * dt).exp();
                }
                acc += z * (trapezoid_weights(n, k) * v);
                z *= step;
            }
            acc * dt
        })
        .collect()
}

/// f̂(σ + iω_k) for every ω_k of the grid.
pub fn forward(f: &CausalSignal, fg: &FrequencyGrid) -> Vec<Complex64> {
    let Some(layout) = fg.fft_matches(&f.grid) else {
        return forward_at(f, fg.sigma, &fg.omegas);
    };
    let n = f.len();
    let nf = layout.n_fft;
    let dt = f.grid.dt;
    let mut buf = vec![ZERO; nf];
    for (k, v) in f.samples.iter().enumerate() {
        let t = k as f64 * dt;
        buf[k] = Complex64::new(trapezoid_weights(n, k) * v * (-fg.sigma * t).exp() * dt, 0.0);
    }
    FftPlanner::new().plan_fft_forward(nf).process(&mut buf);
    (0..nf).map(|idx| buf[(idx + nf / 2) % nf]).collect()
}

/// Largest |F(ω) − conj F(−ω)| relative to max |F| on an FFT-laid-out grid.
fn symmetry_mismatch(samples: &[Complex64]) -> f64 {
    let nf = samples.len();
    let scale = samples.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for idx in 1..nf {
        let partner = nf - idx;
        worst = worst.max((samples[idx] - samples[partner].conj()).norm());
    }
    worst / scale
}

/// f(t) = e^{σt}/(2π) ∫ f̂(σ+iω) e^{iωt} dω on `grid`.
pub fn inverse(samples: &[Complex64], fg: &FrequencyGrid, grid: TimeGrid) -> Result<CausalSignal> {
    let layout = fg.fft_matches(&grid).ok_or(Error::FrequencyLayout)?;
    if samples.len() != layout.n_fft {
        return Err(Error::FrequencyLayout);
    }
    let mismatch = symmetry_mismatch(samples);
    if mismatch > 1e-8 {
        return Err(Error::NotConjugateSymmetric { mismatch });
    }
    let nf = layout.n_fft;
    let mut buf: Vec<Complex64> = (0..nf).map(|j| samples[(j + nf / 2) % nf]).collect();
    FftPlanner::new().plan_fft_inverse(nf).process(&mut buf);
    let scale = 1.0 / (nf as f64 * grid.dt);
    let out = (0..grid.n)
        .map(|k| (fg.sigma * grid.t(k)).exp() * buf[k].re * scale)
        .collect();
    CausalSignal::new(grid, out)
}

/// s²/(ω_M²s²+1).
pub fn rational_factor(omega_m: f64, s: Complex64) -> Complex64 {
    s * s / (omega_m * omega_m * s * s + 1.0)
}

#[derive(Debug, Clone)]
pub struct TransferSamples {
    pub sigma: f64,
    pub omegas: Vec<f64>,
    pub t: Vec<DMatrix<Complex64>>,
    pub v_hat: Vec<DVector<Complex64>>,
}

/// T(s) at one point, T_ij = s² q_ij e^{−sτ_ij}/(ω_M²s²+1).
pub fn t_matrix(cd: &CouplingData, s: Complex64) -> Result<DMatrix<Complex64>> {
    let den = cd.omega_m * cd.omega_m * s * s + 1.0;
    if den.norm() < 1e-8 {
        return Err(Error::PoleProximity {
            sigma: s.re,
            omega: s.im,
        });
    }
    let r = s * s / den;
    let m = cd.m();
    Ok(DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            ZERO
        } else {
            r * cd.q[(i, j)] * (-s * cd.tau[(i, j)]).exp()
        }
    }))
}

/// T on the grid, and V̂ = R(s) F̂ when a forcing is given (zero otherwise).
pub fn eval_t(
    cd: &CouplingData,
    fg: &FrequencyGrid,
    forcing: Option<&[CausalSignal]>,
) -> Result<TransferSamples> {
    let m = cd.m();
    let t = fg
        .omegas
        .par_iter()
        .map(|&w| t_matrix(cd, Complex64::new(fg.sigma, w)))
        .collect::<Result<Vec<_>>>()?;
    let f_hat: Vec<Vec<Complex64>> = match forcing {
        Some(f) => {
            if f.len() != m {
                return Err(invalid("forcing", format!("expected {m} signals")));
            }
            f.iter().map(|fi| forward(fi, fg)).collect()
        }
        None => vec![vec![ZERO; fg.n_freq()]; m],
    };
    let v_hat = fg
        .omegas
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let r = rational_factor(cd.omega_m, Complex64::new(fg.sigma, w));
            DVector::from_fn(m, |i, _| r * f_hat[i][k])
        })
        .collect();
    Ok(TransferSamples {
        sigma: fg.sigma,
        omegas: fg.omegas.clone(),
        t,
        v_hat,
    })
}

impl TransferSamples {
    /// Columns omega, then re/im of every T_ij in row-major order.
    pub fn to_csv(&self) -> String {
        let m = self.t.first().map(|t| t.nrows()).unwrap_or(0);
        let mut s = String::from("omega");
        for i in 1..=m {
            for j in 1..=m {
                let _ = write!(s, ",re_T{i}_{j},im_T{i}_{j}");
            }
        }
        s.push('\n');
        for (w, t) in self.omegas.iter().zip(&self.t) {
            let _ = write!(s, "{w:.16e}");
            for i in 0..m {
                for j in 0..m {
                    let z = t[(i, j)];
                    let _ = write!(s, ",{:.16e},{:.16e}", z.re, z.im);
                }
            }
            s.push('\n');
        }
        s
    }
}

fn inf_norm(a: &DMatrix<Complex64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Ŷ = (I + T)⁻¹ V̂ per sample.
pub fn solve_freq(ts: &TransferSamples) -> Result<Vec<DVector<Complex64>>> {
    ts.t
        .par_iter()
        .zip(&ts.v_hat)
        .zip(&ts.omegas)
        .map(|((t, v), &w)| {
            let a = DMatrix::identity(t.nrows(), t.ncols()) + t;
            let lu = a.clone().lu();
            let inv = lu.try_inverse();
            let condition = inv
                .as_ref()
                .map(|x| inf_norm(&a) * inf_norm(x))
                .unwrap_or(f64::INFINITY);
            match inv {
                Some(inv) if condition.is_finite() && condition < 1e12 => Ok(inv * v),
                _ => Err(Error::SingularSystem {
                    omega: w,
                    condition,
                }),
            }
        })
        .collect()
}

/// Σ_{n=0}^{N} (−T)ⁿ V̂ per sample.
pub fn neumann_freq(ts: &TransferSamples, n_terms: usize) -> Vec<DVector<Complex64>> {
    ts.t
        .par_iter()
        .zip(&ts.v_hat)
        .map(|(t, v)| {
            let mut term = v.clone();
            let mut acc = v.clone();
            for _ in 0..n_terms {
                term = -(t * &term);
                acc += &term;
            }
            acc
        })
        .collect()
}

/// Max-row-sum norm of a complex matrix.
pub fn op_norm(a: &DMatrix<Complex64>) -> f64 {
    inf_norm(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupNorm {
    /// max over the sampled ω of max_i Σ_j |T_ij(σ0+iω)|.
    pub estimate: f64,
    pub argmax_omega: f64,
    /// max_i Σ_j q_ij σ0²/(ω_M²σ0²−1).
    pub envelope: f64,
}

/// sup over Re s = σ0 of the max-row-sum norm of T, sampled on [0, ω_cap].
pub fn sup_norm_t(cd: &CouplingData, sigma0: f64, omega_cap: f64, n_samples: usize) -> Result<SupNorm> {
    let env = rational_envelope(cd.omega_m, sigma0)
        .ok_or_else(|| Error::BoundInapplicable("σ0 ω_M ≤ 1".into()))?;
    let envelope = env * cd.max_row_sum_q();
    let mut omegas: Vec<f64> = (0..n_samples.max(2))
        .map(|k| omega_cap * k as f64 / (n_samples.max(2) - 1) as f64)
        .collect();
    let wr = 1.0 / cd.omega_m;
    omegas.push(wr);
    omegas.push((sigma0 * sigma0 + wr * wr).sqrt());
    if wr > sigma0 {
        omegas.push((wr * wr - sigma0 * sigma0).sqrt());
    }
    let vals = omegas
        .par_iter()
        .map(|&w| t_matrix(cd, Complex64::new(sigma0, w)).map(|t| (inf_norm(&t), w)))
        .collect::<Result<Vec<_>>>()?;
    let (estimate, argmax_omega) = vals
        .into_iter()
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    Ok(SupNorm {
        estimate,
        argmax_omega,
        envelope,
    })
}

/// √((Δω/2π) Σ_k (σ²+ω_k²)^r ‖v_k‖²) on a uniform grid.
pub fn hrs_freq_norm(vals: &[DVector<Complex64>], fg: &FrequencyGrid, r: usize) -> f64 {
    let dw = fg.spacing();
    let s: f64 = vals
        .iter()
        .zip(&fg.omegas)
        .map(|(v, w)| (fg.sigma * fg.sigma + w * w).powi(r as i32) * v.norm_squared())
        .sum();
    (s * dw / (2.0 * PI)).sqrt()
}
