//! Weighted paths through the cluster and the atomic part of K*ᴺ.
//!
//! The atomic part of K_ij is (q_ij/ω_M²)δ(t−τ_ij); its N-fold convolution
//! power is a train of deltas indexed by the paths i = i₀ → … → i_N = j.
//! [`atomic_power`] builds it both by enumeration and by repeated
//! convolution and asserts the two agree.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::cluster::{rational_envelope, CouplingData};
use crate::{invalid, Error, Result};

pub const DEFAULT_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    /// 1-based bubble indices (i₀, …, i_N).
    pub indices: Vec<usize>,
    /// Π q_{i_k i_{k+1}}.
    pub q: f64,
    /// Π q0_{i_k i_{k+1}}.
    pub q0: f64,
    /// Σ τ_{i_k i_{k+1}}, seconds.
    pub tau_total: f64,
}

impl Path {
    /// Weights and delay of the given 1-based index tuple.
    pub fn from_indices(cd: &CouplingData, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(invalid("path", "needs at least two indices"));
        }
        if indices.iter().any(|&i| i == 0 || i > cd.m()) {
            return Err(invalid("path", format!("indices must lie in 1..={}", cd.m())));
        }
        let mut q = 1.0;
        let mut q0 = 1.0;
        let mut tau_total = 0.0;
        for w in indices.windows(2) {
            let (a, b) = (w[0] - 1, w[1] - 1);
            q *= cd.q[(a, b)];
            q0 *= cd.q0[(a, b)];
            tau_total += cd.tau[(a, b)];
        }
        Ok(Self {
            indices: indices.to_vec(),
            q,
            q0,
            tau_total,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self) -> String {
        self.indices
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Number of nonzero-weight paths of length `n` from `start` to `end` (1-based).
pub fn count_paths(q: &DMatrix<f64>, n: usize, start: usize, end: usize) -> f64 {
    let m = q.nrows();
    let adj = DMatrix::from_fn(m, m, |i, j| if q[(i, j)] != 0.0 { 1.0 } else { 0.0 });
    let mut p = DMatrix::<f64>::identity(m, m);
    for _ in 0..n {
        p = &p * &adj;
    }
    p[(start - 1, end - 1)]
}

fn walk(cd: &CouplingData, n: usize, end: usize, prefix: &mut Vec<usize>, out: &mut Vec<Path>) {
    let last = *prefix.last().unwrap();
    if prefix.len() == n + 1 {
        if last == end {
            let idx: Vec<usize> = prefix.iter().map(|i| i + 1).collect();
            out.push(Path::from_indices(cd, &idx).unwrap());
        }
        return;
    }
    let remaining = n + 1 - prefix.len();
    for next in 0..cd.m() {
        if cd.q[(last, next)] == 0.0 {
            continue;
        }
        // the final step must land on `end`
        if remaining == 1 && next != end {
            continue;
        }
        prefix.push(next);
        walk(cd, n, end, prefix, out);
        prefix.pop();
    }
}

/// All nonzero-weight paths of length `n` from `start` to `end` (1-based),
/// in lexicographic order.
pub fn enumerate_paths(
    cd: &CouplingData,
    n: usize,
    start: usize,
    end: usize,
    budget: usize,
) -> Result<Vec<Path>> {
    let m = cd.m();
    if n == 0 {
        return Err(invalid("N", "path length must be ≥ 1"));
    }
    if start == 0 || start > m || end == 0 || end > m {
        return Err(invalid("path", format!("endpoints must lie in 1..={m}")));
    }
    if count_paths(&cd.q, n, start, end) > budget as f64 {
        return Err(Error::PathBudgetExceeded { budget });
    }
    let (s, e) = (start - 1, end - 1);
    let chunks: Vec<Vec<Path>> = (0..m)
        .into_par_iter()
        .map(|first| {
            let mut out = Vec::new();
            if cd.q[(s, first)] == 0.0 || (n == 1 && first != e) {
                return out;
            }
            let mut prefix = vec![s, first];
            walk(cd, n, e, &mut prefix, &mut out);
            out
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Paths of length `n` over all start and end points.
pub fn enumerate_all(cd: &CouplingData, n: usize, budget: usize) -> Result<Vec<Path>> {
    let m = cd.m();
    let mut total = 0.0;
    for i in 1..=m {
        for j in 1..=m {
            total += count_paths(&cd.q, n, i, j);
        }
    }
    if total > budget as f64 {
        return Err(Error::PathBudgetExceeded { budget });
    }
    let mut out = Vec::new();
    for i in 1..=m {
        for j in 1..=m {
            out.extend(enumerate_paths(cd, n, i, j, budget)?);
        }
    }
    out.sort_by(|a, b| a.indices.cmp(&b.indices));
    Ok(out)
}

/// Weighted delta impulses Σ w_k δ(t − t_k), sorted by delay.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeltaTrain {
    /// (weight, delay) pairs.
    pub atoms: Vec<(f64, f64)>,
}

impl DeltaTrain {
    pub fn new(mut atoms: Vec<(f64, f64)>, tau_min: f64) -> Self {
        merge(&mut atoms, tau_min);
        Self { atoms }
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.0).sum()
    }

    /// Pairwise products of weights at summed delays.
    pub fn convolve(&self, other: &DeltaTrain) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for a in &self.atoms {
            for b in &other.atoms {
                out.push((a.0 * b.0, a.1 + b.1));
            }
        }
        out
    }
}

/// Delays closer than max(1e-15 τ_min, 16 ulp of the delay) are merged.
fn merge_tol(tau_min: f64, delay: f64) -> f64 {
    (1e-15 * tau_min).max(16.0 * f64::EPSILON * delay.abs())
}

fn merge(atoms: &mut Vec<(f64, f64)>, tau_min: f64) {
    atoms.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for &(w, d) in atoms.iter() {
        match out.last_mut() {
            Some(last) if (d - last.1).abs() <= merge_tol(tau_min, d) => last.0 += w,
            _ => out.push((w, d)),
        }
    }
    *atoms = out;
}

/// (K^(d))^{*N} as an M×M matrix of delta trains.
///
/// Built by path enumeration and by recursive convolution; panics if the two
/// disagree (weights beyond 1e-12 relative, or delays beyond the merge
/// tolerance).
pub fn atomic_power(cd: &CouplingData, n: usize) -> Result<Vec<Vec<DeltaTrain>>> {
    if n == 0 {
        return Err(invalid("N", "must be ≥ 1"));
    }
    let m = cd.m();
    let w2 = cd.omega_m * cd.omega_m;
    let tau_min = if m > 1 { cd.tau_min() } else { 1.0 };

    let enumerated: Vec<Vec<DeltaTrain>> = (1..=m)
        .map(|i| {
            (1..=m)
                .map(|j| {
                    let paths = enumerate_paths(cd, n, i, j, DEFAULT_BUDGET)?;
                    let atoms = paths
                        .iter()
                        .map(|p| {
                            let w = p.indices.windows(2).fold(1.0, |acc, s| acc * cd.q[(s[0] - 1, s[1] - 1)] / w2);
                            (w, p.tau_total)
                        })
                        .collect();
                    Ok(DeltaTrain::new(atoms, tau_min))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let base: Vec<Vec<DeltaTrain>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j || cd.q[(i, j)] == 0.0 {
                        DeltaTrain::default()
                    } else {
                        DeltaTrain::new(vec![(cd.q[(i, j)] / w2, cd.tau[(i, j)])], tau_min)
                    }
                })
                .collect()
        })
        .collect();
    let mut rec = base.clone();
    for _ in 1..n {
        rec = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let mut atoms = Vec::new();
                        for l in 0..m {
                            atoms.extend(rec[i][l].convolve(&base[l][j]));
                        }
                        DeltaTrain::new(atoms, tau_min)
                    })
                    .collect()
            })
            .collect();
    }

    for i in 0..m {
        for j in 0..m {
            let (a, b) = (&enumerated[i][j], &rec[i][j]);
            assert_eq!(
                a.atoms.len(),
                b.atoms.len(),
                "atom count mismatch at ({}, {})",
                i + 1,
                j + 1
            );
            for (x, y) in a.atoms.iter().zip(&b.atoms) {
                assert!(
                    (x.1 - y.1).abs() <= merge_tol(tau_min, x.1),
                    "delay mismatch at ({}, {}): {} vs {}",
                    i + 1,
                    j + 1,
                    x.1,
                    y.1
                );
                assert!(
                    (x.0 - y.0).abs() <= 1e-12 * x.0.abs().max(y.0.abs()),
                    "weight mismatch at ({}, {}): {} vs {}",
                    i + 1,
                    j + 1,
                    x.0,
                    y.0
                );
            }
        }
    }
    Ok(enumerated)
}

/// Σ of atom weights per entry.
pub fn aggregate_weights(trains: &[Vec<DeltaTrain>]) -> DMatrix<f64> {
    let m = trains.len();
    DMatrix::from_fn(m, m, |i, j| trains[i][j].total_weight())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeParams {
    pub sigma: f64,
    /// Floor of |V̂| on the resonance band.
    pub m: f64,
    /// Half-width of the resonance band, rad/s.
    pub h: f64,
    /// Sobolev order.
    pub r: u32,
    pub d_max: f64,
    /// Replace e^{−στ_γ} by 1.
    pub drop_path_delay: bool,
}

/// (min over [ω_res−h, ω_res+h] of (σ²+ω²)^r)^{1/2}.
pub fn r_min(sigma: f64, omega_res: f64, h: f64, r: u32) -> f64 {
    if r == 0 {
        return 1.0;
    }
    let lo = omega_res - h;
    let hi = omega_res + h;
    let w = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
    (sigma * sigma + w * w).powi(r as i32).sqrt()
}

/// L_γ = Q0_γ C^(0)/(4π d_max ω_M^{2N}) e^{−σ(τ_γ + d_max/c0)} m√(2h) r_min.
pub fn path_amplitude(gamma: &Path, cd: &CouplingData, p: &AmplitudeParams) -> f64 {
    let n = gamma.len() as i32;
    let c_end = cd.c_free[gamma.indices[gamma.indices.len() - 1] - 1];
    let tau = if p.drop_path_delay { 0.0 } else { gamma.tau_total };
    gamma.q0 * c_end / (4.0 * PI * p.d_max * cd.omega_m.powi(2 * n))
        * (-p.sigma * (tau + p.d_max / cd.c0)).exp()
        * p.m
        * (2.0 * p.h).sqrt()
        * r_min(p.sigma, cd.omega_res(), p.h, p.r)
}

/// B = C^(0)/(4π d_min) σ0²/(ω_M²σ0²−1) α_∞^{N+1} e^{−σ d_min/c0} ‖F‖.
pub fn background_bound(
    cd: &CouplingData,
    sigma: f64,
    sigma0: f64,
    n: usize,
    d_min: f64,
    forcing_norm: f64,
    alpha_inf: f64,
) -> Result<f64> {
    let env = rational_envelope(cd.omega_m, sigma0)
        .ok_or_else(|| Error::BoundInapplicable("ω_M²σ0² ≤ 1".into()))?;
    Ok(cd.c_free0() / (4.0 * PI * d_min)
        * env
        * alpha_inf.powi(n as i32 + 1)
        * (-sigma * d_min / cd.c0).exp()
        * forcing_norm)
}

/// Exhaustive argmax of L_γ; ties go to the lexicographically smallest path.
pub fn maximize_path(paths: &[Path], cd: &CouplingData, p: &AmplitudeParams) -> Result<(Path, f64)> {
    let mut best: Option<(&Path, f64)> = None;
    for g in paths {
        let l = path_amplitude(g, cd, p);
        best = match best {
            None => Some((g, l)),
            Some((b, bl)) if l > bl || (l == bl && g.indices < b.indices) => Some((g, l)),
            keep => keep,
        };
    }
    best.map(|(g, l)| (g.clone(), l)).ok_or(Error::EmptyPaths)
}

/// ⌊1 + θ L*/B⌋ with B = B_unit ‖F‖.
pub fn m_max(l_star: f64, b_unit: f64, forcing_norm: f64, theta: f64) -> Result<usize> {
    let b = b_unit * forcing_norm;
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid("B", "background bound must be positive"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", "must lie in (0,1)"));
    }
    Ok((1.0 + theta * l_star / b).floor() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandCondition {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// m√(2h) > (1−θ)‖F‖ d_max e^{σ(τ_γ*+(d_max−d_min)/c0)}/(d_min Q0_γ* r_min)
///          · (C^(0)/d̃)^{N+1} ω_M^{2N} ((M−1)σ0²/(ω_M²σ0²−1))^{N+2}.
#[allow(clippy::too_many_arguments)]
pub fn band_condition(
    cd: &CouplingData,
    gamma_star: &Path,
    p: &AmplitudeParams,
    sigma0: f64,
    d_min: f64,
    forcing_norm: f64,
    theta: f64,
) -> Result<BandCondition> {
    let env = rational_envelope(cd.omega_m, sigma0)
        .ok_or_else(|| Error::BoundInapplicable("ω_M²σ0² ≤ 1".into()))?;
    let n = gamma_star.len() as i32;
    let mm1 = cd.m() as f64 - 1.0;
    let lhs = p.m * (2.0 * p.h).sqrt();
    let rhs = (1.0 - theta) * forcing_norm * p.d_max
        * (p.sigma * (gamma_star.tau_total + (p.d_max - d_min) / cd.c0)).exp()
        / (d_min * gamma_star.q0 * r_min(p.sigma, cd.omega_res(), p.h, p.r))
        * (cd.c_free0() / cd.d_tilde).powi(n + 1)
        * cd.omega_m.powi(2 * n)
        * (mm1 * env).powi(n + 2);
    Ok(BandCondition {
        lhs,
        rhs,
        satisfied: lhs > rhs,
    })
}

/// CSV with columns path, Q0, tau_total, L_gamma.
pub fn paths_csv(paths: &[Path], cd: &CouplingData, p: &AmplitudeParams) -> String {
    let mut s = String::from("path,Q0,tau_total,L_gamma\n");
    for g in paths {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e}",
            g.label(),
            g.q0,
            g.tau_total,
            path_amplitude(g, cd, p)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{derive_coupling, BubbleCluster, MaterialParams, OmegaMode};

    fn cd_of(centers: Vec<[f64; 3]>) -> CouplingData {
        let c = BubbleCluster::new(centers, 1e-3, 0.9).unwrap();
        derive_coupling(&c, &MaterialParams::air_in_water(), OmegaMode::Explicit(4.88e-5)).unwrap()
    }

    fn params() -> AmplitudeParams {
        AmplitudeParams {
            sigma: 3e4,
            m: 10.0,
            h: 1e3,
            r: 0,
            d_max: 0.1,
            drop_path_delay: false,
        }
    }

    #[test]
    fn two_bubbles_return_path() {
        let cd = cd_of(vec![[0.0; 3], [0.03, 0.0, 0.0]]);
        let p = enumerate_paths(&cd, 2, 1, 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].indices, vec![1, 2, 1]);
        assert_eq!(p[0].q, cd.q[(0, 1)] * cd.q[(1, 0)]);
    }

    #[test]
    fn single_bubble_has_no_paths() {
        let cd = cd_of(vec![[0.0; 3]]);
        assert!(enumerate_paths(&cd, 3, 1, 1, DEFAULT_BUDGET).unwrap().is_empty());
    }

    #[test]
    fn count_bound_and_budget() {
        let cd = cd_of(vec![[0.0; 3], [0.03, 0.0, 0.0], [0.0, 0.04, 0.0], [0.05, 0.05, 0.0]]);
        for n in 1..5 {
            let p = enumerate_paths(&cd, n, 1, 2, DEFAULT_BUDGET).unwrap();
            assert!(p.len() <= 3usize.pow(n as u32 - 1));
            assert_eq!(p.len() as f64, count_paths(&cd.q, n, 1, 2));
            assert!(p.windows(2).all(|w| w[0].indices < w[1].indices));
        }
        assert!(matches!(
            enumerate_paths(&cd, 8, 1, 2, 10),
            Err(Error::PathBudgetExceeded { .. })
        ));
    }

    #[test]
    fn base_and_second_power() {
        let cd = cd_of(vec![[0.0; 3], [0.03, 0.0, 0.0]]);
        let w2 = cd.omega_m * cd.omega_m;
        let a1 = atomic_power(&cd, 1).unwrap();
        assert_eq!(a1[0][1].atoms, vec![(cd.q[(0, 1)] / w2, cd.tau[(0, 1)])]);
        assert!(a1[0][0].atoms.is_empty());
        let a2 = atomic_power(&cd, 2).unwrap();
        assert_eq!(a2[0][0].atoms.len(), 1);
        let (w, d) = a2[0][0].atoms[0];
        assert!((w / (cd.q[(0, 1)] * cd.q[(1, 0)] / (w2 * w2)) - 1.0).abs() < 1e-14);
        assert!((d - 2.0 * cd.tau[(0, 1)]).abs() < 1e-20);
    }

    #[test]
    fn amplitude_monotone_in_distance() {
        let cd = cd_of(vec![[0.0; 3], [0.03, 0.0, 0.0], [0.0, 0.04, 0.0]]);
        let g = Path::from_indices(&cd, &[1, 2, 3]).unwrap();
        let p = params();
        let mut p2 = p;
        p2.d_max *= 2.0;
        assert!(path_amplitude(&g, &cd, &p2) < path_amplitude(&g, &cd, &p));
        let mut p0 = p;
        p0.m = 0.0;
        assert_eq!(path_amplitude(&g, &cd, &p0), 0.0);
    }

    #[test]
    fn shorter_delay_wins() {
        let cd = cd_of(vec![[0.0; 3], [0.03, 0.0, 0.0], [-0.03, 0.0, 0.0], [0.0, 0.07, 0.0]]);
        // identical weights: (1,2,1) vs (1,3,1) are mirror images, so use a forced tie
        let a = Path::from_indices(&cd, &[1, 2, 1]).unwrap();
        let mut b = a.clone();
        b.indices = vec![1, 3, 1];
        b.tau_total *= 1.5;
        let (best, _) = maximize_path(&[b.clone(), a.clone()], &cd, &params()).unwrap();
        assert_eq!(best.indices, a.indices);
        let (only, _) = maximize_path(&[b.clone()], &cd, &params()).unwrap();
        assert_eq!(only, b);
        assert!(matches!(maximize_path(&[], &cd, &params()), Err(Error::EmptyPaths)));
    }

    #[test]
    fn m_max_edges() {
        assert_eq!(m_max(4.6, 1.0, 1.0, 0.9).unwrap(), 5);
        assert_eq!(m_max(1.0, 1.0, 1.0, 0.5).unwrap(), 1);
        assert_eq!(m_max(10.0, 1.0, 1.0, 1e-9).unwrap(), 1);
        assert!(m_max(1.0, 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn background_bound_trivia() {
        let cd = cd_of(vec![[0.0; 3], [0.03, 0.0, 0.0]]);
        assert_eq!(background_bound(&cd, 3e4, 3e4, 5, 0.1, 0.0, 0.5).unwrap(), 0.0);
        let b4 = background_bound(&cd, 3e4, 3e4, 4, 0.1, 1.0, 0.5).unwrap();
        let b5 = background_bound(&cd, 3e4, 3e4, 5, 0.1, 1.0, 0.5).unwrap();
        assert!(b5 < b4);
        assert!(background_bound(&cd, 3e4, 1e4, 5, 0.1, 1.0, 0.5).is_err());
    }

    #[test]
    fn r_min_cases() {
        assert_eq!(r_min(3e4, 2e4, 1e3, 0), 1.0);
        let v = r_min(3.0, 20.0, 1.0, 2);
        assert!((v - (9.0f64 + 361.0).powi(2).sqrt()).abs() < 1e-9);
    }
}
