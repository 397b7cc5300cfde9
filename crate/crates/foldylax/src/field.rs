//! Scattered field at observation points and the ε-scaling study.

use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::cluster::{derive_coupling, BubbleCluster, CouplingData, MaterialParams, OmegaMode};
use crate::kernel::{compute_v, neumann_solve, KernelSpec, NeumannSolution, Truncation};
use crate::signal::{forcing_vector, hrs_norm, CausalSignal, Derivative, PulseSpec, TimeGrid};
use crate::{dist, invalid, Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub x: Vec3,
    pub d_min: f64,
    pub d_max: f64,
}

impl Observation {
    /// Rejects points inside a bubble (|x − z_m| ≤ ε) or closer than `min_clearance`.
    pub fn new(x: Vec3, cd: &CouplingData, min_clearance: f64) -> Result<Self> {
        let mut d_min = f64::INFINITY;
        let mut d_max: f64 = 0.0;
        for (m, z) in cd.centers.iter().enumerate() {
            let d = dist(&x, z);
            if d <= cd.epsilon {
                return Err(Error::ObservationInsideBubble(m + 1));
            }
            d_min = d_min.min(d);
            d_max = d_max.max(d);
        }
        if d_min < min_clearance {
            return Err(Error::ObservationTooClose {
                d_min,
                threshold: min_clearance,
            });
        }
        Ok(Self { x, d_min, d_max })
    }
}

/// −Σ_m C_m/(4π r_m) a_m(t − r_m/c0).
fn radiate(amps: &[CausalSignal], cd: &CouplingData, obs: &Observation) -> Result<CausalSignal> {
    let g = amps.first().ok_or_else(|| invalid("amplitudes", "empty"))?.grid;
    let mut out = vec![0.0; g.n];
    for (m, a) in amps.iter().enumerate() {
        let r = dist(&obs.x, &cd.centers[m]);
        if r <= cd.epsilon {
            return Err(Error::ObservationInsideBubble(m + 1));
        }
        let w = -cd.c[m] / (4.0 * PI * r);
        let sh = a.delayed(r / cd.c0);
        for (o, s) in out.iter_mut().zip(&sh.samples) {
            *o += w * s;
        }
    }
    CausalSignal::new(g, out)
}

/// u^{sc,N}(x,t) built from the partial sum Y^N.
pub fn scattered_field(
    sol: &NeumannSolution,
    cd: &CouplingData,
    obs: &Observation,
    n: usize,
) -> Result<CausalSignal> {
    radiate(&sol.partial_sum(n)?, cd, obs)
}

/// u^{sc,N} − u^{sc,N−1}, formed from the single term W_N, with its norm.
pub fn field_difference(
    sol: &NeumannSolution,
    cd: &CouplingData,
    obs: &Observation,
    n: usize,
) -> Result<(CausalSignal, f64)> {
    if n == 0 {
        return Err(invalid("N", "difference needs N ≥ 1"));
    }
    let diff = radiate(&sol.signed_sum(n, n)?, cd, obs)?;
    let norm = hrs_norm(&diff, sol.r, sol.sigma)?;
    Ok((diff, norm))
}

/// u^{sc,N_ref} − u^{sc,N} with N_ref the highest order held by `sol`.
pub fn remainder_field(
    sol: &NeumannSolution,
    cd: &CouplingData,
    obs: &Observation,
    n: usize,
) -> Result<(CausalSignal, f64)> {
    if n >= sol.order() {
        return Err(Error::OrderUnavailable {
            needed: n + 1,
            available: sol.order(),
        });
    }
    let rem = radiate(&sol.signed_sum(n + 1, sol.order())?, cd, obs)?;
    let norm = hrs_norm(&rem, sol.r, sol.sigma)?;
    Ok((rem, norm))
}

/// Everything except ε that defines a scaling run.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingSetup {
    /// ε-free centers; z_i(ε) = z_i^(0) ε^p.
    pub template: Vec<Vec3>,
    pub material: MaterialParams,
    /// Held fixed across the sweep.
    pub omega_m: f64,
    pub vol_b: f64,
    pub x0: Vec3,
    pub pulse: PulseSpec,
    pub observation: Vec3,
    pub grid: TimeGrid,
    /// Abscissa of the norm.
    pub sigma: f64,
    pub r: usize,
    /// The remainder reference uses N + extra_terms terms.
    pub extra_terms: usize,
    pub min_clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub diff_norm: f64,
    pub remainder_norm: f64,
    /// Reference line M ε².
    pub meps2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS of log residuals.
    pub residual: f64,
}

/// Least squares of log y against log x.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<Fit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateFit("need at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::DegenerateFit("non-positive value in log-log fit".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(Fit {
        slope,
        intercept,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingStudy {
    pub n: usize,
    pub p: f64,
    pub rows: Vec<ScalingRow>,
    pub diff_fit: Fit,
    pub remainder_fit: Fit,
    /// N(1−p)+1.
    pub expected_diff: f64,
    /// (N+1)(1−p)+1.
    pub expected_remainder: f64,
    pub diff_pass: bool,
    pub remainder_pass: bool,
    /// diff_norm/ε² increases as ε decreases over the sweep.
    pub dominance_monotone: bool,
}

/// Relative tolerance on fitted exponents.
pub const SLOPE_TOL: f64 = 0.10;

impl ScalingStudy {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,diff_norm,remainder_norm,Meps2_reference\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                r.epsilon, r.diff_norm, r.remainder_norm, r.meps2
            );
        }
        s
    }
}

fn one_epsilon(setup: &ScalingSetup, eps: f64, p: f64, n: usize) -> Result<ScalingRow> {
    let cluster = BubbleCluster::from_template(&setup.template, eps, p)?.with_volume(setup.vol_b);
    let cd = derive_coupling(&cluster, &setup.material, OmegaMode::Explicit(setup.omega_m))?;
    let f = forcing_vector(&cluster, &setup.x0, &setup.pulse, &setup.material, setup.grid, Derivative::Analytic)?;
    let v = compute_v(&f, cd.omega_m)?;
    let sol = neumann_solve(
        &KernelSpec::new(cd.clone()),
        &v,
        Truncation::Fixed(n + setup.extra_terms.max(1)),
        setup.r,
        setup.sigma,
    )?;
    let obs = Observation::new(setup.observation, &cd, setup.min_clearance)?;
    let (_, diff_norm) = field_difference(&sol, &cd, &obs, n)?;
    let (_, remainder_norm) = remainder_field(&sol, &cd, &obs, n)?;
    Ok(ScalingRow {
        epsilon: eps,
        diff_norm,
        remainder_norm,
        meps2: cd.m() as f64 * eps * eps,
    })
}

/// Fits the ε-exponents of ‖u^{sc,N} − u^{sc,N−1}‖ and ‖u^sc − u^{sc,N}‖.
pub fn epsilon_scaling_study(setup: &ScalingSetup, eps_list: &[f64], p: f64, n: usize) -> Result<ScalingStudy> {
    if n == 0 {
        return Err(invalid("N", "must be ≥ 1"));
    }
    if eps_list.len() < 4 {
        return Err(Error::DegenerateFit("need at least four ε values".into()));
    }
    let lo = eps_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eps_list.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0) || hi / lo < 10.0 * (1.0 - 1e-9) {
        return Err(Error::DegenerateFit("ε values must span at least one decade".into()));
    }
    let mut rows = eps_list
        .par_iter()
        .map(|&e| one_epsilon(setup, e, p, n))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let diff_fit = loglog_fit(&eps, &rows.iter().map(|r| r.diff_norm).collect::<Vec<_>>())?;
    let remainder_fit = loglog_fit(&eps, &rows.iter().map(|r| r.remainder_norm).collect::<Vec<_>>())?;
    let expected_diff = n as f64 * (1.0 - p) + 1.0;
    let expected_remainder = (n as f64 + 1.0) * (1.0 - p) + 1.0;
    let ratio: Vec<f64> = rows.iter().map(|r| r.diff_norm / (r.epsilon * r.epsilon)).collect();
    Ok(ScalingStudy {
        n,
        p,
        diff_pass: ((diff_fit.slope - expected_diff) / expected_diff).abs() <= SLOPE_TOL,
        remainder_pass: ((remainder_fit.slope - expected_remainder) / expected_remainder).abs() <= SLOPE_TOL,
        dominance_monotone: ratio.windows(2).all(|w| w[0] > w[1]),
        rows,
        diff_fit,
        remainder_fit,
        expected_diff,
        expected_remainder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::compute_v;

    fn setup() -> (CouplingData, Vec<CausalSignal>, TimeGrid) {
        let c = BubbleCluster::new(vec![[0.0; 3], [0.03, 0.0, 0.0], [0.0, 0.04, 0.0]], 1e-3, 0.9).unwrap();
        let mat = MaterialParams::air_in_water();
        let cd = derive_coupling(&c, &mat, OmegaMode::FromMinnaertFormula).unwrap();
        let g = TimeGrid::new(6e-4, 3001).unwrap();
        let pulse = PulseSpec::SineBurst {
            amplitude: 1.0,
            angular_frequency: 1.0 / cd.omega_m,
            cycles: 3.0,
        };
        let f = forcing_vector(&c, &[0.0, -0.1, 0.0], &pulse, &mat, g, Derivative::Analytic).unwrap();
        (cd, f, g)
    }

    #[test]
    fn observation_checks() {
        let (cd, _, _) = setup();
        assert!(matches!(
            Observation::new([0.0, 0.0, 5e-4], &cd, 0.0),
            Err(Error::ObservationInsideBubble(1))
        ));
        assert!(matches!(
            Observation::new([0.0, 0.0, 0.01], &cd, 0.05),
            Err(Error::ObservationTooClose { .. })
        ));
        let o = Observation::new([0.0, 0.0, 0.2], &cd, 0.05).unwrap();
        assert!((o.d_min - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_term_field_matches_direct_formula() {
        let c = BubbleCluster::new(vec![[0.0; 3]], 1e-3, 0.9).unwrap();
        let cd = derive_coupling(&c, &MaterialParams::air_in_water(), OmegaMode::Explicit(5e-5)).unwrap();
        let g = TimeGrid::new(1e-3, 1001).unwrap();
        let v = vec![CausalSignal::from_fn(g, |t| (1e4 * t).sin())];
        let sol = neumann_solve(&KernelSpec::new(cd.clone()), &v, Truncation::Fixed(2), 0, 1e3).unwrap();
        let obs = Observation::new([0.3, 0.0, 0.0], &cd, 0.0).unwrap();
        let u = scattered_field(&sol, &cd, &obs, 0).unwrap();
        let r: f64 = 0.3;
        for (k, x) in u.samples.iter().enumerate() {
            let expect = -cd.c[0] / (4.0 * PI * r) * v[0].at(g.t(k) - r / cd.c0);
            assert!((x - expect).abs() <= 1e-15 * cd.c[0]);
        }
        let (d, norm) = field_difference(&sol, &cd, &obs, 1).unwrap();
        assert!(d.is_zero() && norm == 0.0);
    }

    #[test]
    fn difference_identity() {
        let (cd, f, _) = setup();
        let v = compute_v(&f, cd.omega_m).unwrap();
        let sol = neumann_solve(&KernelSpec::new(cd.clone()), &v, Truncation::Fixed(4), 0, 3e4).unwrap();
        let obs = Observation::new([0.0, 0.0, 0.3], &cd, 0.1).unwrap();
        for n in 1..=4 {
            let a = scattered_field(&sol, &cd, &obs, n).unwrap();
            let b = scattered_field(&sol, &cd, &obs, n - 1).unwrap();
            let (d, norm) = field_difference(&sol, &cd, &obs, n).unwrap();
            let sub = a.axpy(-1.0, &b).unwrap();
            let err = sub.axpy(-1.0, &d).unwrap().max_abs();
            assert!(err <= 1e-10 * d.max_abs(), "n = {n}");
            assert!(norm > 0.0);
        }
        assert!(field_difference(&sol, &cd, &obs, 5).is_err());
    }

    #[test]
    fn retarded_support() {
        let (cd, f, g) = setup();
        let v = compute_v(&f, cd.omega_m).unwrap();
        let sol = neumann_solve(&KernelSpec::new(cd.clone()), &v, Truncation::Fixed(3), 0, 3e4).unwrap();
        let x = [0.0, 0.0, 0.3];
        let obs = Observation::new(x, &cd, 0.1).unwrap();
        let u = scattered_field(&sol, &cd, &obs, 3).unwrap();
        let x0 = [0.0, -0.1, 0.0];
        let first = cd
            .centers
            .iter()
            .map(|z| (dist(&x0, z) + dist(z, &x)) / cd.c0)
            .fold(f64::INFINITY, f64::min);
        for (k, s) in u.samples.iter().enumerate() {
            if g.t(k) < first - 2.0 * g.dt {
                assert_eq!(*s, 0.0);
            }
        }
    }

    #[test]
    fn fit_recovers_power() {
        let x = [1e-4, 3e-4, 1e-3, 3e-3];
        let y: Vec<f64> = x.iter().map(|e: &f64| 7.0 * e.powf(1.3)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert!((f.slope - 1.3).abs() < 1e-12 && f.residual < 1e-12);
        assert!(loglog_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
