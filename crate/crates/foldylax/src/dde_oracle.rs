//! Method-of-steps integrator for the neutral delayed system
//! ω_M² Y_m'' + Y_m + Σ_{j≠m} q_mj Y_j''(t − τ_mj) = F_m(t), zero initial data.
//!
//! Delayed second derivatives are read from history by linear interpolation,
//! so each bubble reduces to a forced oscillator advanced by RK4. The history
//! value of Y'' is taken from the equation itself after every step.

use crate::cluster::CouplingData;
use crate::signal::{interp, CausalSignal, TimeGrid};
use crate::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdeOptions {
    /// Abort when |Y| exceeds this many times ‖F‖∞ · max(1, T/ω_M).
    pub divergence_factor: f64,
}

impl Default for DdeOptions {
    fn default() -> Self {
        Self {
            divergence_factor: 1e6,
        }
    }
}

/// Sample histories of Y, Y', Y'' per bubble.
#[derive(Debug, Clone)]
pub struct DdeState {
    pub grid: TimeGrid,
    pub y: Vec<Vec<f64>>,
    pub yd: Vec<Vec<f64>>,
    pub ydd: Vec<Vec<f64>>,
    /// Index of the last completed sample.
    pub step: usize,
}

impl DdeState {
    pub fn solution(&self) -> Vec<CausalSignal> {
        self.y
            .iter()
            .map(|y| CausalSignal {
                grid: self.grid,
                samples: y.clone(),
            })
            .collect()
    }
}

pub fn integrate_dde(cd: &CouplingData, f: &[CausalSignal]) -> Result<Vec<CausalSignal>> {
    Ok(integrate_dde_with(cd, f, DdeOptions::default())?.solution())
}

pub fn integrate_dde_with(cd: &CouplingData, f: &[CausalSignal], opts: DdeOptions) -> Result<DdeState> {
    let m = cd.m();
    if f.len() != m {
        return Err(invalid("F", format!("expected {m} signals, got {}", f.len())));
    }
    let grid = f[0].grid;
    if f.iter().any(|s| !s.grid.same_as(&grid)) {
        return Err(Error::GridMismatch);
    }
    let dt = grid.dt;
    let tau_min = cd.tau_min();
    if m > 1 && dt >= tau_min {
        return Err(Error::StepTooLarge { dt, tau_min });
    }
    let n = grid.n;
    let w2 = cd.omega_m * cd.omega_m;
    let f_inf = f.iter().map(|s| s.max_abs()).fold(0.0, f64::max);
    let limit = opts.divergence_factor * f_inf * (grid.horizon() / cd.omega_m).max(1.0);

    let mut st = DdeState {
        grid,
        y: vec![vec![0.0; n]; m],
        yd: vec![vec![0.0; n]; m],
        ydd: vec![vec![0.0; n]; m],
        step: 0,
    };
    for i in 0..m {
        st.ydd[i][0] = f[i].samples[0] / w2;
    }
    let couplings: Vec<Vec<(usize, f64, f64)>> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i && cd.q[(i, j)] != 0.0)
                .map(|j| (j, cd.q[(i, j)], cd.tau[(i, j)]))
                .collect()
        })
        .collect();

    for k in 0..n - 1 {
        let t = grid.t(k);
        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let delayed = |s: f64| -> f64 {
                couplings[i]
                    .iter()
                    .map(|&(j, q, tau)| q * interp(&st.ydd[j][..=k], dt, s - tau))
                    .sum()
            };
            let force = |s: f64| f[i].at(s) - delayed(s);
            let (y0, z0) = (st.y[i][k], st.yd[i][k]);
            let h = dt;
            let (g0, gm, g1) = (force(t), force(t + 0.5 * h), force(t + h));
            let acc = |g: f64, y: f64| (g - y) / w2;
            let k1y = z0;
            let k1z = acc(g0, y0);
            let k2y = z0 + 0.5 * h * k1z;
            let k2z = acc(gm, y0 + 0.5 * h * k1y);
            let k3y = z0 + 0.5 * h * k2z;
            let k3z = acc(gm, y0 + 0.5 * h * k2y);
            let k4y = z0 + h * k3z;
            let k4z = acc(g1, y0 + h * k3y);
            let y1 = y0 + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            let z1 = z0 + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
            next.push((y1, z1, acc(g1, y1)));
        }
        for (i, (y1, z1, a1)) in next.into_iter().enumerate() {
            if !y1.is_finite() || y1.abs() > limit {
                return Err(Error::DdeDivergence {
                    t: grid.t(k + 1),
                    magnitude: y1.abs(),
                    limit,
                });
            }
            st.y[i][k + 1] = y1;
            st.yd[i][k + 1] = z1;
            st.ydd[i][k + 1] = a1;
        }
        st.step = k + 1;
    }
    Ok(st)
}
