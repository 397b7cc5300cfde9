//! Scene description and the coefficients of the amplitude system.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{dist, invalid, Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Background density, kg/m³.
    pub rho_c: f64,
    /// Background bulk modulus, Pa.
    pub kappa_c: f64,
    /// Rescaled bubble bulk modulus κ̄_b, Pa.
    pub kappa_b_bar: f64,
    /// Rescaled bubble density ρ̄_b, kg/m³.
    pub rho_b_bar: f64,
    /// Polytropic index, only used by the Minnaert formula.
    pub gamma_poly: f64,
    /// Ambient pressure, Pa, only used by the Minnaert formula.
    pub p0: f64,
}

impl MaterialParams {
    /// Air bubbles in water: c0 = 1480 m/s, κ̄_b = 1.4e11 Pa.
    pub fn air_in_water() -> Self {
        Self {
            rho_c: 1000.0,
            kappa_c: 1000.0 * 1480.0 * 1480.0,
            kappa_b_bar: 1.4e11,
            rho_b_bar: 1.2e6,
            gamma_poly: 1.4,
            p0: 1.0e5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rho_c", self.rho_c),
            ("kappa_c", self.kappa_c),
            ("kappa_b_bar", self.kappa_b_bar),
            ("rho_b_bar", self.rho_b_bar),
            ("gamma_poly", self.gamma_poly),
            ("p0", self.p0),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Background wave speed √(κ_c/ρ_c).
    pub fn c0(&self) -> f64 {
        (self.kappa_c / self.rho_c).sqrt()
    }

    /// Minnaert frequency in Hz for a bubble of radius `epsilon`.
    pub fn minnaert_frequency(&self, epsilon: f64) -> f64 {
        (3.0 * self.gamma_poly * self.p0 / self.rho_c).sqrt() / (2.0 * PI * epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleCluster {
    pub centers: Vec<Vec3>,
    /// Radius scale ε, m.
    pub epsilon: f64,
    /// Distance exponent p in d = d̃ ε^p.
    pub p_exponent: f64,
    /// Distance prefactor d̃. When absent the ε-free minimum distance is used.
    pub d_tilde: Option<f64>,
    /// Reference-shape volume per bubble.
    pub vol_b: Vec<f64>,
    pub lambda_db: Option<f64>,
    pub lambda1_3: Option<f64>,
    /// Length ℓ used to make distances ε-free, d^(0) = d/ℓ. Defaults to ε^p.
    pub length_scale: Option<f64>,
}

impl BubbleCluster {
    /// Identical unit spheres (vol(B) = 4π/3) at the given centers.
    pub fn new(centers: Vec<Vec3>, epsilon: f64, p_exponent: f64) -> Result<Self> {
        let m = centers.len();
        let c = Self {
            centers,
            epsilon,
            p_exponent,
            d_tilde: None,
            vol_b: vec![4.0 * PI / 3.0; m],
            lambda_db: None,
            lambda1_3: None,
            length_scale: None,
        };
        c.validate()?;
        Ok(c)
    }

    /// Centers z_i = z_i^(0) ε^p from an ε-free template.
    pub fn from_template(template: &[Vec3], epsilon: f64, p_exponent: f64) -> Result<Self> {
        let s = epsilon.powf(p_exponent);
        let centers = template
            .iter()
            .map(|z| [z[0] * s, z[1] * s, z[2] * s])
            .collect();
        Self::new(centers, epsilon, p_exponent)
    }

    pub fn with_volume(mut self, vol: f64) -> Self {
        self.vol_b = vec![vol; self.centers.len()];
        self
    }

    pub fn with_lambda_db(mut self, v: f64) -> Self {
        self.lambda_db = Some(v);
        self
    }

    pub fn with_lambda1_3(mut self, v: f64) -> Self {
        self.lambda1_3 = Some(v);
        self
    }

    pub fn with_d_tilde(mut self, v: f64) -> Self {
        self.d_tilde = Some(v);
        self
    }

    pub fn with_length_scale(mut self, v: f64) -> Self {
        self.length_scale = Some(v);
        self
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(invalid("centers", "need at least one bubble"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(invalid("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        if !(0.0..1.0).contains(&self.p_exponent) {
            return Err(invalid("p", format!("must lie in [0,1), got {}", self.p_exponent)));
        }
        if self.vol_b.len() != self.centers.len() {
            return Err(invalid("vol_b", "one volume per bubble"));
        }
        if self.vol_b.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("vol_b", "volumes must be > 0"));
        }
        for (name, v) in [
            ("d_tilde", self.d_tilde),
            ("Lambda_dB", self.lambda_db),
            ("lambda1_3", self.lambda1_3),
            ("length_scale", self.length_scale),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(name, format!("must be > 0, got {v}")));
                }
            }
        }
        for i in 0..self.centers.len() {
            if self.centers[i].iter().any(|x| !x.is_finite()) {
                return Err(invalid("centers", format!("bubble {} is not finite", i + 1)));
            }
            for j in 0..i {
                if dist(&self.centers[i], &self.centers[j]) == 0.0 {
                    return Err(Error::CoincidentCenters { i: j + 1, j: i + 1 });
                }
            }
        }
        Ok(())
    }

    pub fn min_distance(&self) -> Option<f64> {
        let mut d = f64::INFINITY;
        for i in 0..self.len() {
            for j in 0..i {
                d = d.min(dist(&self.centers[i], &self.centers[j]));
            }
        }
        d.is_finite().then_some(d)
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
            .unwrap_or_else(|| self.epsilon.powf(self.p_exponent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OmegaMode {
    /// ω_M = 1/(2πf) with f the Minnaert frequency of a bubble of radius ε.
    FromMinnaertFormula,
    /// ω_M = √(ρ_c Λ_∂B / (2κ̄_b)).
    FromLambdaDB,
    Explicit(f64),
}

/// Coefficients of the amplitude system.
#[derive(Debug, Clone)]
pub struct CouplingData {
    pub centers: Vec<Vec3>,
    pub epsilon: f64,
    /// Time constant ω_M, seconds.
    pub omega_m: f64,
    pub c0: f64,
    /// C_j = C_j^(0) ε, metres.
    pub c: Vec<f64>,
    /// ε-free C_j^(0).
    pub c_free: Vec<f64>,
    pub q: DMatrix<f64>,
    pub tau: DMatrix<f64>,
    /// ε-free couplings, q = κ q0 with κ = ε/ℓ.
    pub q0: DMatrix<f64>,
    /// ℓ such that d^(0) = d/ℓ.
    pub length_scale: f64,
    /// κ = ε/ℓ, equal to ε^{1−p} for the default ℓ = ε^p.
    pub coupling_scale: f64,
    /// d̃ used by the uniform α bound.
    pub d_tilde: f64,
}

pub fn derive_coupling(
    cluster: &BubbleCluster,
    mat: &MaterialParams,
    omega_mode: OmegaMode,
) -> Result<CouplingData> {
    cluster.validate()?;
    mat.validate()?;
    let vol = cluster.vol_b[0];
    if cluster.vol_b.iter().any(|v| *v != vol) {
        return Err(Error::Heterogeneous("vol(B_j) differs between bubbles".into()));
    }
    let omega_m = match omega_mode {
        OmegaMode::FromMinnaertFormula => {
            1.0 / (2.0 * PI * mat.minnaert_frequency(cluster.epsilon))
        }
        OmegaMode::FromLambdaDB => {
            let lam = cluster.lambda_db.ok_or(Error::MissingLambda)?;
            (mat.rho_c * lam / (2.0 * mat.kappa_b_bar)).sqrt()
        }
        OmegaMode::Explicit(w) => {
            if !(w.is_finite() && w > 0.0) {
                return Err(invalid("omega_M", format!("must be > 0, got {w}")));
            }
            w
        }
    };
    let m = cluster.len();
    let c0 = mat.c0();
    let c_free = vec![mat.rho_c / mat.kappa_b_bar * vol; m];
    let c: Vec<f64> = c_free.iter().map(|x| x * cluster.epsilon).collect();
    let ell = cluster.length_scale();
    let mut q = DMatrix::zeros(m, m);
    let mut q0 = DMatrix::zeros(m, m);
    let mut tau = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let d = dist(&cluster.centers[i], &cluster.centers[j]);
            q[(i, j)] = c[j] / (4.0 * PI * d);
            q0[(i, j)] = c_free[j] / (4.0 * PI * (d / ell));
            tau[(i, j)] = d / c0;
        }
    }
    let d_tilde = cluster
        .d_tilde
        .or_else(|| cluster.min_distance().map(|d| d / ell))
        .unwrap_or(1.0);
    Ok(CouplingData {
        centers: cluster.centers.clone(),
        epsilon: cluster.epsilon,
        omega_m,
        c0,
        c,
        c_free,
        q,
        tau,
        q0,
        length_scale: ell,
        coupling_scale: cluster.epsilon / ell,
        d_tilde,
    })
}

impl CouplingData {
    pub fn m(&self) -> usize {
        self.centers.len()
    }

    /// Smallest off-diagonal delay; infinite for a single bubble.
    pub fn tau_min(&self) -> f64 {
        let mut t = f64::INFINITY;
        for i in 0..self.m() {
            for j in 0..self.m() {
                if i != j {
                    t = t.min(self.tau[(i, j)]);
                }
            }
        }
        t
    }

    pub fn max_row_sum_q(&self) -> f64 {
        (0..self.m())
            .map(|i| self.q.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_row_sum_q0(&self) -> f64 {
        (0..self.m())
            .map(|i| self.q0.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// The common C^(0) of identical bubbles.
    pub fn c_free0(&self) -> f64 {
        self.c_free[0]
    }

    /// Resonance ω_res = 1/ω_M, rad/s.
    pub fn omega_res(&self) -> f64 {
        1.0 / self.omega_m
    }
}

/// sup over Re s = σ0 of |s²/(ω_M²s²+1)|, finite only for σ0 ω_M > 1.
pub fn rational_envelope(omega_m: f64, sigma0: f64) -> Option<f64> {
    let den = omega_m * omega_m * sigma0 * sigma0 - 1.0;
    (den > 0.0).then(|| sigma0 * sigma0 / den)
}

/// Which expression to use for α_∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaBound {
    /// σ0²(M−1)C^(0) / (4π d̃ (ω_M²σ0²−1)): every coupling q0_ij ≤ C^(0)/(4π d̃).
    #[default]
    Uniform,
    /// σ0²(M−1)C^(0) / (d̃ (ω_M²σ0²−1)), without the 4π.
    Displayed,
    /// envelope · max_i Σ_j q0_ij, the tightest certificate from the geometry.
    RowSum,
}

/// α_∞ for the chosen expression; `None` when σ0 ω_M ≤ 1.
pub fn alpha_inf(cd: &CouplingData, sigma0: f64, kind: AlphaBound) -> Option<f64> {
    let env = rational_envelope(cd.omega_m, sigma0)?;
    let mm1 = (cd.m() as f64 - 1.0).max(0.0);
    Some(match kind {
        AlphaBound::Uniform => env * mm1 * cd.c_free0() / (4.0 * PI * cd.d_tilde),
        AlphaBound::Displayed => env * mm1 * cd.c_free0() / cd.d_tilde,
        AlphaBound::RowSum => env * cd.max_row_sum_q0(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub reason: Option<String>,
    /// σ0²/(ω_M²σ0²−1).
    pub rational_factor: Option<f64>,
    /// α_∞ from the uniform bound (with 4π).
    pub alpha_inf: Option<f64>,
    /// α_∞ as displayed, without 4π.
    pub alpha_inf_displayed: Option<f64>,
    /// envelope · max row sum of q: certified ratio between successive terms.
    pub alpha_envelope: Option<f64>,
}

/// ε max_i Σ_{j≠i} C^(0)/(4π|z_i−z_j|) < ω_M²(1 − 1/(ω_M²σ0²)).
pub fn check_neumann_condition(cd: &CouplingData, sigma0: f64) -> ConditionReport {
    let lhs = cd.max_row_sum_q();
    let w2 = cd.omega_m * cd.omega_m;
    let rhs = w2 * (1.0 - 1.0 / (w2 * sigma0 * sigma0));
    let rational_factor = rational_envelope(cd.omega_m, sigma0);
    if rational_factor.is_none() {
        return ConditionReport {
            lhs,
            rhs,
            satisfied: false,
            reason: Some("sigma below resonance threshold".into()),
            rational_factor: None,
            alpha_inf: None,
            alpha_inf_displayed: None,
            alpha_envelope: None,
        };
    }
    let satisfied = lhs < rhs;
    ConditionReport {
        lhs,
        rhs,
        satisfied,
        reason: (!satisfied).then(|| "coupling row sum exceeds the resonance margin".into()),
        rational_factor,
        alpha_inf: alpha_inf(cd, sigma0, AlphaBound::Uniform),
        alpha_inf_displayed: alpha_inf(cd, sigma0, AlphaBound::Displayed),
        alpha_envelope: rational_factor.map(|r| r * lhs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InversionReport {
    /// (ρ_c/4π) vol(B) (ε/d)⁶ / λ₁².
    pub contrast_lhs: f64,
    pub contrast_satisfied: bool,
    /// C max_m Σ_j 1/(4π|z_m−z_j|).
    pub coupling_lhs: f64,
    /// ω_M².
    pub coupling_rhs: f64,
    pub coupling_satisfied: bool,
    pub satisfied: bool,
}

/// Solvability conditions of the reduced system; `None` without λ₁^(3).
pub fn check_inversion_condition(
    cluster: &BubbleCluster,
    mat: &MaterialParams,
    cd: &CouplingData,
) -> Option<InversionReport> {
    let lam = cluster.lambda1_3?;
    let contrast_lhs = match cluster.min_distance() {
        Some(d) => {
            mat.rho_c / (4.0 * PI) * cluster.vol_b[0] * (cluster.epsilon / d).powi(6) / (lam * lam)
        }
        None => 0.0,
    };
    let coupling_lhs = cd.max_row_sum_q();
    let coupling_rhs = cd.omega_m * cd.omega_m;
    let contrast_satisfied = contrast_lhs < 1.0;
    let coupling_satisfied = coupling_lhs < coupling_rhs;
    Some(InversionReport {
        contrast_lhs,
        contrast_satisfied,
        coupling_lhs,
        coupling_rhs,
        coupling_satisfied,
        satisfied: contrast_satisfied && coupling_satisfied,
    })
}

/// Λ_∂B for the unit sphere by the midpoint rule on a latitude-longitude mesh.
///
/// The inner integral does not depend on the outer point on a sphere, so the
/// outer integral reduces to |∂B| times the inner one at a single point.
/// The mesh is refined until two successive values differ by less than `tol`.
pub fn sphere_lambda(tol: f64) -> f64 {
    let inner = |n: usize| -> f64 {
        let x = [0.0, 0.0, 1.0];
        let dth = PI / n as f64;
        let dph = 2.0 * PI / (2 * n) as f64;
        let mut s = 0.0;
        for a in 0..n {
            let th = (a as f64 + 0.5) * dth;
            let (st, ct) = th.sin_cos();
            for b in 0..2 * n {
                let ph = (b as f64 + 0.5) * dph;
                let y = [st * ph.cos(), st * ph.sin(), ct];
                let d = dist(&x, &y);
                // ν_x = x on the unit sphere
                let num = (x[0] - y[0]) * x[0] + (x[1] - y[1]) * x[1] + (x[2] - y[2]) * x[2];
                s += num / d * st * dth * dph;
            }
        }
        s
    };
    let mut n = 8;
    let mut prev = inner(n);
    loop {
        n *= 2;
        let cur = inner(n);
        if ((cur - prev) / cur).abs() < tol || n > 4096 {
            return cur;
        }
        prev = cur;
    }
}
