//! Neumann series Y = Σ (−1)ⁿ K*ⁿ * V in the time domain.
//!
//! Every kernel entry factors as K_ij = q_ij δ(t−τ_ij) * ρ(t) with
//! ρ = δ/ω_M² − sin(t/ω_M)/ω_M³ the impulse response of s²/(ω_M²s²+1).
//! Applying K therefore costs one sine convolution per source bubble
//! followed by delayed, weighted sums.

use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

use crate::cluster::{alpha_inf, rational_envelope, AlphaBound, CouplingData};
use crate::conv::{sine_kernel, Convolver};
use crate::signal::{shift, vector_norm, CausalSignal, TimeGrid};
use crate::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub cd: CouplingData,
}

impl KernelSpec {
    pub fn new(cd: CouplingData) -> Self {
        Self { cd }
    }

    /// Weight of the delta atom of K_ij, q_ij/ω_M².
    pub fn atom_weight(&self, i: usize, j: usize) -> f64 {
        self.cd.q[(i, j)] / (self.cd.omega_m * self.cd.omega_m)
    }

    pub fn atom_delay(&self, i: usize, j: usize) -> f64 {
        self.cd.tau[(i, j)]
    }

    /// Continuous part −(q_ij/ω_M³) sin((t−τ_ij)/ω_M) for t ≥ τ_ij.
    pub fn continuous_part(&self, i: usize, j: usize, t: f64) -> f64 {
        let tau = self.cd.tau[(i, j)];
        if i == j || t < tau {
            return 0.0;
        }
        let w = self.cd.omega_m;
        -self.cd.q[(i, j)] / (w * w * w) * ((t - tau) / w).sin()
    }
}

/// W ↦ W/ω_M² − (1/ω_M³) ∫₀^t sin((t−r)/ω_M) W(r) dr on a fixed grid.
pub struct ResponseOperator {
    grid: TimeGrid,
    omega_m: f64,
    conv: Convolver,
}

impl ResponseOperator {
    pub fn new(grid: TimeGrid, omega_m: f64) -> Self {
        Self {
            grid,
            omega_m,
            conv: Convolver::new(sine_kernel(grid.n, grid.dt, omega_m), grid.dt),
        }
    }

    pub fn apply(&self, w: &CausalSignal) -> Result<CausalSignal> {
        if !w.grid.same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let s = self.conv.apply(&w.samples);
        let a = 1.0 / (self.omega_m * self.omega_m);
        let b = a / self.omega_m;
        let samples = w.samples.iter().zip(&s).map(|(x, c)| a * x - b * c).collect();
        CausalSignal::new(self.grid, samples)
    }
}

fn common_grid(sig: &[CausalSignal]) -> Result<TimeGrid> {
    let g = sig
        .first()
        .ok_or_else(|| invalid("signals", "empty vector"))?
        .grid;
    if sig.iter().any(|s| !s.grid.same_as(&g)) {
        return Err(Error::GridMismatch);
    }
    Ok(g)
}

/// V_i = F_i/ω_M² − (1/ω_M³) ∫₀^t sin((t−τ)/ω_M) F_i(τ) dτ.
pub fn compute_v(f: &[CausalSignal], omega_m: f64) -> Result<Vec<CausalSignal>> {
    let g = common_grid(f)?;
    let op = ResponseOperator::new(g, omega_m);
    f.par_iter().map(|fi| op.apply(fi)).collect()
}

fn apply_k_with(spec: &KernelSpec, op: &ResponseOperator, w: &[CausalSignal]) -> Result<Vec<CausalSignal>> {
    let g = common_grid(w)?;
    let m = spec.cd.m();
    if w.len() != m {
        return Err(invalid("W", format!("expected {m} signals, got {}", w.len())));
    }
    let u: Vec<CausalSignal> = w.par_iter().map(|wj| op.apply(wj)).collect::<Result<_>>()?;
    let out = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; g.n];
            for (j, uj) in u.iter().enumerate() {
                let q = spec.cd.q[(i, j)];
                if i == j || q == 0.0 {
                    continue;
                }
                let sh = shift(&uj.samples, g.dt, spec.cd.tau[(i, j)]);
                for (a, s) in acc.iter_mut().zip(&sh) {
                    *a += q * s;
                }
            }
            CausalSignal { grid: g, samples: acc }
        })
        .collect();
    Ok(out)
}

/// (K*W)_i(t) = Σ_j q_ij [W_j(t−τ_ij)/ω_M² − (1/ω_M³)∫₀^{t−τ_ij} sin((t−τ_ij−r)/ω_M) W_j(r) dr].
pub fn apply_k(spec: &KernelSpec, w: &[CausalSignal]) -> Result<Vec<CausalSignal>> {
    let g = common_grid(w)?;
    let op = ResponseOperator::new(g, spec.cd.omega_m);
    apply_k_with(spec, &op, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Truncation {
    /// Terms 0..=N.
    Fixed(usize),
    /// Stop once ‖W_n‖ < tol·‖W_0‖, the term vanishes, or n reaches `max_order`.
    Auto { tol: f64, max_order: usize },
}

impl Truncation {
    pub fn auto() -> Self {
        Truncation::Auto {
            tol: 1e-8,
            max_order: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NeumannSolution {
    /// W_n = K*ⁿ*V, n = 0..=N.
    pub terms: Vec<Vec<CausalSignal>>,
    /// Y^N = Σ (−1)ⁿ W_n.
    pub partial: Vec<CausalSignal>,
    pub term_norms: Vec<f64>,
    pub r: usize,
    pub sigma: f64,
}

impl NeumannSolution {
    /// Highest order held.
    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn grid(&self) -> TimeGrid {
        self.terms[0][0].grid
    }

    /// Y^n for n ≤ order.
    pub fn partial_sum(&self, n: usize) -> Result<Vec<CausalSignal>> {
        self.signed_sum(0, n)
    }

    /// Σ_{k=from}^{to} (−1)^k W_k.
    pub fn signed_sum(&self, from: usize, to: usize) -> Result<Vec<CausalSignal>> {
        if to > self.order() {
            return Err(Error::OrderUnavailable {
                needed: to,
                available: self.order(),
            });
        }
        let g = self.grid();
        let m = self.terms[0].len();
        let mut acc = vec![CausalSignal::zeros(g); m];
        for k in from..=to {
            let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
            for (a, w) in acc.iter_mut().zip(&self.terms[k]) {
                for (x, y) in a.samples.iter_mut().zip(&w.samples) {
                    *x += sgn * y;
                }
            }
        }
        Ok(acc)
    }

    /// term_<n>_bubble_<i>.csv for every term and bubble, plus norms.csv.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (n, term) in self.terms.iter().enumerate() {
            for (i, w) in term.iter().enumerate() {
                w.write_csv(dir.join(format!("term_{n}_bubble_{}.csv", i + 1)))?;
            }
        }
        std::fs::write(dir.join("norms.csv"), self.norms_csv())?;
        Ok(())
    }

    pub fn norms_csv(&self) -> String {
        let mut s = String::from("n,term_norm\n");
        for (n, v) in self.term_norms.iter().enumerate() {
            let _ = writeln!(s, "{n},{v:.16e}");
        }
        s
    }
}

pub fn neumann_solve(
    spec: &KernelSpec,
    v: &[CausalSignal],
    order: Truncation,
    r: usize,
    sigma: f64,
) -> Result<NeumannSolution> {
    let g = common_grid(v)?;
    let op = ResponseOperator::new(g, spec.cd.omega_m);
    let mut terms = vec![v.to_vec()];
    let mut term_norms = vec![vector_norm(v, r, sigma)?];
    loop {
        let n = terms.len() - 1;
        let done = match order {
            Truncation::Fixed(big_n) => n >= big_n,
            Truncation::Auto { tol, max_order } => {
                n >= max_order
                    || term_norms[n] <= tol * term_norms[0]
                    || terms[n].iter().all(|w| w.is_zero())
            }
        };
        if done {
            break;
        }
        let next = apply_k_with(spec, &op, &terms[n])?;
        term_norms.push(vector_norm(&next, r, sigma)?);
        terms.push(next);
    }
    let mut sol = NeumannSolution {
        terms,
        partial: Vec::new(),
        term_norms,
        r,
        sigma,
    };
    sol.partial = sol.partial_sum(sol.order())?;
    Ok(sol)
}

/// α^{N+1}/(1−ακ) κ^{N+1} σ0²/(ω_M²σ0²−1) ‖F‖ with κ the coupling scale.
pub fn remainder_bound(
    cd: &CouplingData,
    sigma0: f64,
    n: usize,
    forcing_norm: f64,
    kind: AlphaBound,
) -> Result<f64> {
    let env = rational_envelope(cd.omega_m, sigma0)
        .ok_or_else(|| Error::BoundInapplicable("ω_M²σ0² ≤ 1".into()))?;
    let a = alpha_inf(cd, sigma0, kind).unwrap_or(f64::INFINITY);
    let ratio = a * cd.coupling_scale;
    if ratio >= 1.0 {
        return Err(Error::BoundInapplicable(format!(
            "α_∞ times coupling scale is {ratio:.4} ≥ 1"
        )));
    }
    if forcing_norm == 0.0 {
        return Ok(0.0);
    }
    Ok(ratio.powi(n as i32 + 1) / (1.0 - ratio) * env * forcing_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderEstimate {
    pub value: f64,
    /// ‖W_{N_ref}‖ < 1e-3 ‖W_0‖: the reference is converged enough to stand in for the full series.
    pub tail_negligible: bool,
}

/// ‖Y^{N_ref} − Y^N‖ in H^r_{0,σ}.
pub fn empirical_remainder(
    sol: &NeumannSolution,
    n: usize,
    n_ref: usize,
    r: usize,
    sigma: f64,
) -> Result<RemainderEstimate> {
    if n_ref > sol.order() {
        return Err(Error::OrderUnavailable {
            needed: n_ref,
            available: sol.order(),
        });
    }
    if n > n_ref {
        return Err(invalid("N", "must not exceed N_ref"));
    }
    let tail_negligible = sol.term_norms[n_ref] < 1e-3 * sol.term_norms[0] || sol.term_norms[0] == 0.0;
    if !tail_negligible {
        log::warn!(
            "tail not negligible: ‖W_{n_ref}‖ = {:.3e}, ‖W_0‖ = {:.3e}",
            sol.term_norms[n_ref],
            sol.term_norms[0]
        );
    }
    let value = if n == n_ref {
        0.0
    } else {
        vector_norm(&sol.signed_sum(n + 1, n_ref)?, r, sigma)?
    };
    Ok(RemainderEstimate {
        value,
        tail_negligible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{derive_coupling, BubbleCluster, MaterialParams, OmegaMode};

    fn pair(d: f64) -> CouplingData {
        let c = BubbleCluster::new(vec![[0.0; 3], [d, 0.0, 0.0]], 1e-3, 0.9).unwrap();
        derive_coupling(&c, &MaterialParams::air_in_water(), OmegaMode::Explicit(5e-5)).unwrap()
    }

    #[test]
    fn unit_step_gives_cosine() {
        let w = 5e-5;
        let g = TimeGrid::new(20.0 * w, 4001).unwrap();
        let f = CausalSignal::from_fn(g, |_| 1.0);
        let v = compute_v(&[f], w).unwrap();
        for (k, x) in v[0].samples.iter().enumerate() {
            let exact = (g.t(k) / w).cos() / (w * w);
            assert!((x - exact).abs() < 2e-4 / (w * w), "{k}");
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let g = TimeGrid::new(1e-3, 200).unwrap();
        let spec = KernelSpec::new(pair(0.03));
        let z = vec![CausalSignal::zeros(g); 2];
        assert!(compute_v(&z, 5e-5).unwrap().iter().all(|s| s.is_zero()));
        assert!(apply_k(&spec, &z).unwrap().iter().all(|s| s.is_zero()));
    }

    #[test]
    fn single_bubble_kernel_vanishes() {
        let c = BubbleCluster::new(vec![[0.0; 3]], 1e-3, 0.9).unwrap();
        let cd = derive_coupling(&c, &MaterialParams::air_in_water(), OmegaMode::Explicit(5e-5)).unwrap();
        let g = TimeGrid::new(1e-3, 300).unwrap();
        let v = vec![CausalSignal::from_fn(g, |t| (1e4 * t).sin())];
        let sol = neumann_solve(&KernelSpec::new(cd), &v, Truncation::Fixed(3), 0, 3e4).unwrap();
        assert_eq!(sol.partial, v);
        assert!(sol.terms[1][0].is_zero());
    }

    #[test]
    fn causality_cascade() {
        let cd = pair(0.03);
        let tau = cd.tau_min();
        let g = TimeGrid::new(2e-4, 2001).unwrap();
        let v = vec![
            CausalSignal::from_fn(g, |t| (3e4 * t).sin() * t),
            CausalSignal::from_fn(g, |t| (2e4 * t).sin()),
        ];
        let sol = neumann_solve(&KernelSpec::new(cd), &v, Truncation::Fixed(4), 0, 3e4).unwrap();
        for (n, term) in sol.terms.iter().enumerate() {
            for w in term {
                for (k, x) in w.samples.iter().enumerate() {
                    // linear delay interpolation may leak one cell per application
                    if g.t(k) < n as f64 * (tau - g.dt) {
                        assert_eq!(*x, 0.0, "term {n} sample {k}");
                    }
                }
            }
        }
    }

    #[test]
    fn auto_stops_when_terms_vanish() {
        let cd = pair(0.03);
        let g = TimeGrid::new(1e-4, 1001).unwrap();
        let v = vec![CausalSignal::from_fn(g, |t| t), CausalSignal::zeros(g)];
        let sol = neumann_solve(&KernelSpec::new(cd.clone()), &v, Truncation::auto(), 0, 1e4).unwrap();
        let n_max = (g.horizon() / cd.tau_min()).floor() as usize + 1;
        assert!(sol.order() <= n_max + 1);
        assert!(sol.terms[sol.order()].iter().all(|w| w.is_zero()));
    }

    #[test]
    fn remainder_bound_trivia() {
        let cd = pair(0.03);
        assert_eq!(remainder_bound(&cd, 3e4, 2, 0.0, AlphaBound::Uniform).unwrap(), 0.0);
        let b: Vec<f64> = (0..6)
            .map(|n| remainder_bound(&cd, 3e4, n, 1.0, AlphaBound::Uniform).unwrap())
            .collect();
        assert!(b.windows(2).all(|w| w[1] < w[0]));
        assert!(matches!(
            remainder_bound(&cd, 1e4, 2, 1.0, AlphaBound::Uniform),
            Err(Error::BoundInapplicable(_))
        ));
    }

    #[test]
    fn empirical_remainder_edges() {
        let cd = pair(0.03);
        let g = TimeGrid::new(2e-4, 801).unwrap();
        let v = vec![CausalSignal::from_fn(g, |t| (2e4 * t).sin()), CausalSignal::zeros(g)];
        let sol = neumann_solve(&KernelSpec::new(cd), &v, Truncation::Fixed(5), 0, 3e4).unwrap();
        assert_eq!(empirical_remainder(&sol, 5, 5, 0, 3e4).unwrap().value, 0.0);
        assert!(empirical_remainder(&sol, 1, 5, 0, 3e4).unwrap().value > 0.0);
        assert!(empirical_remainder(&sol, 1, 6, 0, 3e4).is_err());
    }

    #[test]
    fn write_dir_layout() {
        let cd = pair(0.03);
        let g = TimeGrid::new(1e-4, 11).unwrap();
        let v = vec![CausalSignal::from_fn(g, |t| t), CausalSignal::zeros(g)];
        let sol = neumann_solve(&KernelSpec::new(cd), &v, Truncation::Fixed(1), 0, 3e4).unwrap();
        let dir = std::env::temp_dir().join(format!("foldylax-terms-{}", std::process::id()));
        sol.write_dir(&dir).unwrap();
        assert!(dir.join("term_1_bubble_2.csv").exists());
        let norms = std::fs::read_to_string(dir.join("norms.csv")).unwrap();
        assert!(norms.starts_with("n,term_norm\n0,"));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
