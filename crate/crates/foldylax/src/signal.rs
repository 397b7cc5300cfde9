//! Uniformly sampled causal signals, source pulses, the incident field and
//! the weighted norm ‖f‖² = Σ_{k≤r} ∫ e^{−2σt}|∂_t^k f|² dt.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::cluster::{BubbleCluster, MaterialParams};
use crate::{dist, invalid, laplace, Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    /// `n` samples spanning [0, t_end].
    pub fn new(t_end: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "need at least two samples"));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(invalid("t_end", format!("must be > 0, got {t_end}")));
        }
        Ok(Self {
            t_end,
            dt: t_end / (n - 1) as f64,
            n,
        })
    }

    /// Step `dt`, enough samples that the last one reaches t_end.
    pub fn with_step(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {dt}")));
        }
        let n = ((t_end / dt) * (1.0 - 1e-12)).ceil() as usize + 1;
        let n = n.max(2);
        Ok(Self { t_end, dt, n })
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|k| self.t(k))
    }

    /// Last sample time.
    pub fn horizon(&self) -> f64 {
        self.t(self.n - 1)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n == other.n && self.dt == other.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalSignal {
    pub grid: TimeGrid,
    pub samples: Vec<f64>,
}

impl CausalSignal {
    pub fn new(grid: TimeGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.n {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            samples: vec![0.0; grid.n],
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            samples: grid.times().map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|x| a * x).collect(),
        }
    }

    /// self + a·other.
    pub fn axpy(&self, a: f64, other: &CausalSignal) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(x, y)| x + a * y)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|x| *x == 0.0)
    }

    /// Linear interpolation; zero before t = 0, held at the last sample.
    pub fn at(&self, t: f64) -> f64 {
        interp(&self.samples, self.grid.dt, t)
    }

    /// Samples of f(t − delay), zero before the delay.
    pub fn delayed(&self, delay: f64) -> Self {
        Self {
            grid: self.grid,
            samples: shift(&self.samples, self.grid.dt, delay),
        }
    }

    /// Two-column CSV with header `t,value`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.len() * 48 + 8);
        s.push_str("t,value\n");
        for (k, v) in self.samples.iter().enumerate() {
            let _ = writeln!(s, "{:.16e},{:.16e}", self.grid.t(k), v);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if no == 0 || line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| invalid("csv", format!("bad line {}", no + 1)))
            };
            ts.push(parse(it.next())?);
            vs.push(parse(it.next())?);
        }
        if ts.len() < 2 {
            return Err(invalid("csv", "need at least two rows"));
        }
        let dt = ts[1] - ts[0];
        let grid = TimeGrid {
            t_end: ts[ts.len() - 1],
            dt,
            n: ts.len(),
        };
        Self::new(grid, vs)
    }
}

pub(crate) fn interp(samples: &[f64], dt: f64, t: f64) -> f64 {
    if t < 0.0 || samples.is_empty() {
        return 0.0;
    }
    let x = t / dt;
    let k = x.floor() as usize;
    if k + 1 >= samples.len() {
        return samples[samples.len() - 1];
    }
    let w = x - k as f64;
    (1.0 - w) * samples[k] + w * samples[k + 1]
}

pub(crate) fn shift(samples: &[f64], dt: f64, delay: f64) -> Vec<f64> {
    let n = samples.len();
    let mut out = vec![0.0; n];
    let x = delay / dt;
    let s = x.floor();
    let w = x - s;
    let s = s as usize;
    // out[k] = (1−w) f[k−s] + w f[k−s−1]
    for k in s..n {
        let a = samples[k - s];
        let b = if k > s { samples[k - s - 1] } else { 0.0 };
        out[k] = (1.0 - w) * a + w * b;
    }
    out
}

/// Source time signal λ(t), or a directly prescribed forcing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseSpec {
    /// A sin(ω0 t) on [0, cycles·2π/ω0].
    SineBurst {
        amplitude: f64,
        angular_frequency: f64,
        cycles: f64,
    },
    /// A exp(−(t−t0)²/2w²) sin(ω0(t−t0)) for t ≥ 0 with t0 = 8w.
    GaussianModulated {
        amplitude: f64,
        angular_frequency: f64,
        width: f64,
    },
    /// Forcing whose V̂ has modulus m·φ(ω) on [ω_res−h, ω_res+h] along Re s = σ.
    ResonantBand {
        m: f64,
        h: f64,
        sigma: f64,
        omega_res: f64,
    },
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be > 0, got {v}")))
            }
        };
        match *self {
            PulseSpec::SineBurst {
                amplitude,
                angular_frequency,
                cycles,
            } => {
                pos("amplitude", amplitude)?;
                pos("angular_frequency", angular_frequency)?;
                pos("cycles", cycles)
            }
            PulseSpec::GaussianModulated {
                amplitude,
                angular_frequency,
                width,
            } => {
                pos("amplitude", amplitude)?;
                pos("angular_frequency", angular_frequency)?;
                pos("width", width)
            }
            PulseSpec::ResonantBand {
                m,
                h,
                sigma,
                omega_res,
            } => {
                pos("m", m)?;
                pos("h", h)?;
                pos("sigma", sigma)?;
                pos("omega_res", omega_res)?;
                if h >= omega_res {
                    return Err(invalid("h", "band must stay at positive frequencies"));
                }
                Ok(())
            }
        }
    }

    /// λ(t); zero for t < 0.
    pub fn lambda(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        match *self {
            PulseSpec::SineBurst {
                amplitude: a,
                angular_frequency: w,
                cycles,
            } => Ok(if t <= cycles * 2.0 * PI / w {
                a * (w * t).sin()
            } else {
                0.0
            }),
            PulseSpec::GaussianModulated {
                amplitude: a,
                angular_frequency: w,
                width,
            } => {
                let u = t - 8.0 * width;
                Ok(a * (-u * u / (2.0 * width * width)).exp() * (w * u).sin())
            }
            PulseSpec::ResonantBand { .. } => Err(Error::Unsupported(
                "a resonant-band forcing has no source signal".into(),
            )),
        }
    }

    /// λ''(t) in closed form.
    pub fn lambda_dd(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        match *self {
            PulseSpec::SineBurst {
                amplitude: a,
                angular_frequency: w,
                cycles,
            } => Ok(if t <= cycles * 2.0 * PI / w {
                -a * w * w * (w * t).sin()
            } else {
                0.0
            }),
            PulseSpec::GaussianModulated {
                amplitude: a,
                angular_frequency: w,
                width,
            } => {
                let u = t - 8.0 * width;
                let w2 = width * width;
                let e = (-u * u / (2.0 * w2)).exp();
                let e1 = -u / w2 * e;
                let e2 = (u * u / (w2 * w2) - 1.0 / w2) * e;
                let (s, c) = (w * u).sin_cos();
                Ok(a * (e2 * s + 2.0 * e1 * w * c - e * w * w * s))
            }
            PulseSpec::ResonantBand { .. } => Err(Error::Unsupported(
                "a resonant-band forcing has no source signal".into(),
            )),
        }
    }
}

/// u^in(x,t) = ρ_c λ(t − r/c0)/(4πr), r = |x − x0|.
pub fn incident_field(
    x: &Vec3,
    x0: &Vec3,
    pulse: &PulseSpec,
    mat: &MaterialParams,
    grid: TimeGrid,
) -> Result<CausalSignal> {
    let r = dist(x, x0);
    if r == 0.0 {
        return Err(Error::CoincidentSource);
    }
    let a = r / mat.c0();
    let k = mat.rho_c / (4.0 * PI * r);
    let samples = grid
        .times()
        .map(|t| pulse.lambda(t - a).map(|v| k * v))
        .collect::<Result<Vec<_>>>()?;
    CausalSignal::new(grid, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivative {
    /// Closed form when the pulse has one.
    #[default]
    Analytic,
    /// Centered second difference of λ, O(dt²).
    FiniteDifference,
}

/// F_i = ∂²_t u^in(z_i, t) for every bubble.
pub fn forcing_vector(
    cluster: &BubbleCluster,
    x0: &Vec3,
    pulse: &PulseSpec,
    mat: &MaterialParams,
    grid: TimeGrid,
    method: Derivative,
) -> Result<Vec<CausalSignal>> {
    pulse.validate()?;
    for (i, z) in cluster.centers.iter().enumerate() {
        if dist(z, x0) <= cluster.epsilon {
            return Err(Error::SourceInsideBubble(i + 1));
        }
    }
    let c0 = mat.c0();
    cluster
        .centers
        .iter()
        .map(|z| {
            let r = dist(z, x0);
            let a = r / c0;
            let k = mat.rho_c / (4.0 * PI * r);
            let dt = grid.dt;
            let samples = grid
                .times()
                .map(|t| -> Result<f64> {
                    let s = t - a;
                    Ok(k * match method {
                        Derivative::Analytic => pulse.lambda_dd(s)?,
                        Derivative::FiniteDifference => {
                            (pulse.lambda(s + dt)? - 2.0 * pulse.lambda(s)? + pulse.lambda(s - dt)?)
                                / (dt * dt)
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            CausalSignal::new(grid, samples)
        })
        .collect()
}

/// Forcing with V̂(σ+iω) = m φ(ω) e^{−iω t_c} on the band [ω_res−h, ω_res+h].
///
/// φ is a smooth bump equal to 1 on the inner half band. F = e^{σt} g with
/// ĝ = m φ e^{−iω t_c}/R(σ+iω), R(s) = s²/(ω_M²s²+1), synthesised by
/// midpoint quadrature over the band. The packet is centred at t_c = 60/h,
/// so the grid must reach at least 2 t_c.
pub fn resonant_band_forcing(pulse: &PulseSpec, omega_m: f64, grid: TimeGrid) -> Result<CausalSignal> {
    pulse.validate()?;
    let PulseSpec::ResonantBand {
        m,
        h,
        sigma,
        omega_res,
    } = *pulse
    else {
        return Err(Error::Unsupported("expected a resonant-band pulse".into()));
    };
    let t_c = resonant_band_center(h);
    if grid.horizon() < 2.0 * t_c {
        return Err(invalid(
            "t_end",
            format!("resonant band needs a horizon of at least {:.4e} s", 2.0 * t_c),
        ));
    }
    if sigma * grid.horizon() > 50.0 {
        return Err(invalid("sigma", "σ·T above 50 amplifies roundoff"));
    }
    let nq = 4096;
    let lo = omega_res - h;
    let dw = 2.0 * h / nq as f64;
    let nodes: Vec<(f64, Complex64)> = (0..nq)
        .map(|k| {
            let w = lo + (k as f64 + 0.5) * dw;
            let s = Complex64::new(sigma, w);
            let r = s * s / (omega_m * omega_m * s * s + 1.0);
            (w, m * band_bump(w, omega_res, h) / r * dw)
        })
        .collect();
    let samples = grid
        .times()
        .enumerate()
        .map(|(k, t)| {
            if k == 0 {
                return 0.0;
            }
            let g: f64 = nodes
                .iter()
                .map(|(w, a)| (a * Complex64::from_polar(1.0, w * (t - t_c))).re)
                .sum();
            (sigma * t).exp() * g / PI
        })
        .collect();
    CausalSignal::new(grid, samples)
}

/// Center time of the resonant-band packet.
pub fn resonant_band_center(h: f64) -> f64 {
    60.0 / h
}

/// Smooth bump: 1 on |ω−c| ≤ h/2, 0 outside |ω−c| < h.
pub fn band_bump(w: f64, center: f64, h: f64) -> f64 {
    let x = (w - center).abs();
    if x <= 0.5 * h {
        1.0
    } else if x >= h {
        0.0
    } else {
        let u = (h - x) / (0.5 * h);
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

fn derivative(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dt);
    for k in 1..n - 1 {
        d[k] = (f[k + 1] - f[k - 1]) / (2.0 * dt);
    }
    d
}

/// Trapezoid ∫ e^{−2σt} g(t)² dt over the grid.
pub(crate) fn weighted_l2_sq(g: &[f64], dt: f64, sigma: f64) -> f64 {
    let n = g.len();
    let mut s = 0.0;
    for (k, v) in g.iter().enumerate() {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        s += w * (-2.0 * sigma * k as f64 * dt).exp() * v * v;
    }
    s * dt
}

/// ‖f‖_{H^r_{0,σ}}.
pub fn hrs_norm(f: &CausalSignal, r: usize, sigma: f64) -> Result<f64> {
    Ok(hrs_norm_sq(f, r, sigma)?.sqrt())
}

fn hrs_norm_sq(f: &CausalSignal, r: usize, sigma: f64) -> Result<f64> {
    let n = f.len();
    if r > 0 && (n < 3 || n < 2 * r + 1) {
        return Err(Error::OrderTooLarge { r, n });
    }
    let dt = f.grid.dt;
    let mut total = weighted_l2_sq(&f.samples, dt, sigma);
    let mut d = f.samples.clone();
    for _ in 0..r {
        d = derivative(&d, dt);
        total += weighted_l2_sq(&d, dt, sigma);
    }
    Ok(total)
}

/// √(Σ_i ‖f_i‖²) for a vector of signals.
pub fn vector_norm(fs: &[CausalSignal], r: usize, sigma: f64) -> Result<f64> {
    let mut s = 0.0;
    for f in fs {
        s += hrs_norm_sq(f, r, sigma)?;
    }
    Ok(s.sqrt())
}

/// min over the band of |f̂(σ + iω)|, with `samples` uniformly spaced points.
pub fn band_floor(f: &CausalSignal, sigma: f64, band: (f64, f64), samples: usize) -> Result<f64> {
    let (lo, hi) = band;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || samples == 0 {
        return Err(Error::EmptyBand { lo, hi });
    }
    let nyquist = PI / f.grid.dt;
    if hi.abs().max(lo.abs()) > nyquist {
        return Err(Error::BandAboveNyquist { hi, nyquist });
    }
    let omegas: Vec<f64> = if samples == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..samples)
            .map(|k| lo + (hi - lo) * k as f64 / (samples - 1) as f64)
            .collect()
    };
    let vals = laplace::forward_at(f, sigma, &omegas);
    Ok(vals.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat() -> MaterialParams {
        MaterialParams::air_in_water()
    }

    #[test]
    fn arrival_after_horizon_is_zero() {
        let g = TimeGrid::new(1e-4, 200).unwrap();
        let pulse = PulseSpec::SineBurst {
            amplitude: 1.0,
            angular_frequency: 2e4,
            cycles: 3.0,
        };
        let r = 1480.0 * 1e-4 * 1.001;
        let u = incident_field(&[r, 0.0, 0.0], &[0.0; 3], &pulse, &mat(), g).unwrap();
        assert!(u.is_zero());
    }

    #[test]
    fn first_nonzero_after_arrival() {
        let g = TimeGrid::new(2e-4, 4001).unwrap();
        let pulse = PulseSpec::SineBurst {
            amplitude: 1.0,
            angular_frequency: 2e4,
            cycles: 3.0,
        };
        let u = incident_field(&[0.1, 0.0, 0.0], &[0.0; 3], &pulse, &mat(), g).unwrap();
        let k = u.samples.iter().position(|v| *v != 0.0).unwrap();
        let arrival: f64 = 0.1 / 1480.0;
        assert!((arrival - 6.757e-5).abs() < 1e-8);
        assert!(g.t(k) > arrival && g.t(k) <= arrival + g.dt);
    }

    #[test]
    fn doubling_distance_halves_peak() {
        let g = TimeGrid::new(5e-4, 20001).unwrap();
        let pulse = PulseSpec::GaussianModulated {
            amplitude: 1.0,
            angular_frequency: 2e4,
            width: 1e-5,
        };
        let a = incident_field(&[0.1, 0.0, 0.0], &[0.0; 3], &pulse, &mat(), g).unwrap();
        let b = incident_field(&[0.2, 0.0, 0.0], &[0.0; 3], &pulse, &mat(), g).unwrap();
        assert!((a.max_abs() / b.max_abs() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn coincident_source_rejected() {
        let g = TimeGrid::new(1e-4, 10).unwrap();
        let pulse = PulseSpec::SineBurst {
            amplitude: 1.0,
            angular_frequency: 2e4,
            cycles: 1.0,
        };
        assert!(matches!(
            incident_field(&[0.0; 3], &[0.0; 3], &pulse, &mat(), g),
            Err(Error::CoincidentSource)
        ));
    }

    #[test]
    fn sine_forcing_closed_form() {
        let g = TimeGrid::new(5e-4, 2001).unwrap();
        let (a, w) = (2.0, 2e4);
        let pulse = PulseSpec::SineBurst {
            amplitude: a,
            angular_frequency: w,
            cycles: 100.0,
        };
        let c = BubbleCluster::new(vec![[0.05, 0.0, 0.0]], 1e-3, 0.5).unwrap();
        let f = forcing_vector(&c, &[0.0; 3], &pulse, &mat(), g, Derivative::Analytic).unwrap();
        let r: f64 = 0.05;
        for (k, v) in f[0].samples.iter().enumerate() {
            let t = g.t(k);
            let expect = if t >= r / 1480.0 {
                -1000.0 * a * w * w * (w * (t - r / 1480.0)).sin() / (4.0 * PI * r)
            } else {
                0.0
            };
            assert!((v - expect).abs() <= 1e-9 * 1000.0 * a * w * w);
        }
    }

    #[test]
    fn source_inside_bubble_rejected() {
        let g = TimeGrid::new(1e-4, 10).unwrap();
        let pulse = PulseSpec::SineBurst {
            amplitude: 1.0,
            angular_frequency: 2e4,
            cycles: 1.0,
        };
        let c = BubbleCluster::new(vec![[0.0; 3]], 1e-3, 0.5).unwrap();
        let e = forcing_vector(&c, &[5e-4, 0.0, 0.0], &pulse, &mat(), g, Derivative::Analytic);
        assert!(matches!(e, Err(Error::SourceInsideBubble(1))));
    }

    #[test]
    fn finite_difference_forcing_is_second_order() {
        let pulse = PulseSpec::GaussianModulated {
            amplitude: 1.0,
            angular_frequency: 2e4,
            width: 2e-5,
        };
        let c = BubbleCluster::new(vec![[0.05, 0.0, 0.0]], 1e-3, 0.5).unwrap();
        let err = |n: usize| {
            let g = TimeGrid::new(4e-4, n).unwrap();
            let a = forcing_vector(&c, &[0.0; 3], &pulse, &mat(), g, Derivative::Analytic).unwrap();
            let b = forcing_vector(&c, &[0.0; 3], &pulse, &mat(), g, Derivative::FiniteDifference)
                .unwrap();
            let d = b[0].axpy(-1.0, &a[0]).unwrap();
            d.max_abs() / a[0].max_abs()
        };
        let e1 = err(1001);
        let e2 = err(2001);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn constant_after_ramp_has_zero_forcing() {
        // A sine burst ending on a full cycle is zero afterwards, λ'' likewise.
        let g = TimeGrid::new(1e-3, 1001).unwrap();
        let pulse = PulseSpec::SineBurst {
            amplitude: 1.0,
            angular_frequency: 2e4,
            cycles: 2.0,
        };
        let c = BubbleCluster::new(vec![[0.01, 0.0, 0.0]], 1e-3, 0.5).unwrap();
        let f = forcing_vector(&c, &[0.0; 3], &pulse, &mat(), g, Derivative::Analytic).unwrap();
        let end = 0.01 / 1480.0 + 2.0 * 2.0 * PI / 2e4;
        for (k, v) in f[0].samples.iter().enumerate() {
            if g.t(k) > end {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn norm_of_exponential_is_sqrt_t() {
        let sigma = 3e4;
        let g = TimeGrid::new(5e-4, 5001).unwrap();
        let f = CausalSignal::from_fn(g, |t| (sigma * t).exp());
        let v = hrs_norm(&f, 0, sigma).unwrap();
        assert!((v / g.horizon().sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(hrs_norm(&CausalSignal::zeros(g), 2, sigma).unwrap(), 0.0);
    }

    #[test]
    fn norm_of_sine_matches_closed_form() {
        let (sigma, w0) = (3e4, 2.05e4);
        let g = TimeGrid::new(30.0 / sigma, 40001).unwrap();
        let f = CausalSignal::from_fn(g, |t| (w0 * t).sin());
        let v = hrs_norm(&f, 0, sigma).unwrap().powi(2);
        let exact = 1.0 / (4.0 * sigma) - sigma / (4.0 * (sigma * sigma + w0 * w0));
        assert!((v / exact - 1.0).abs() < 1e-4, "{v} {exact}");
    }

    #[test]
    fn order_too_large() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let f = CausalSignal::zeros(g);
        assert!(matches!(hrs_norm(&f, 2, 1.0), Err(Error::OrderTooLarge { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let g = TimeGrid::new(1e-3, 11).unwrap();
        let f = CausalSignal::from_fn(g, |t| (1234.5 * t).sin() / 3.0);
        let text = f.to_csv();
        assert!(text.starts_with("t,value\n"));
        let back = CausalSignal::from_csv(&text).unwrap();
        assert_eq!(back.samples, f.samples);
    }

    #[test]
    fn band_floor_errors() {
        let g = TimeGrid::new(1e-3, 101).unwrap();
        let f = CausalSignal::zeros(g);
        assert_eq!(band_floor(&f, 1.0, (1.0, 2.0), 8).unwrap(), 0.0);
        assert!(matches!(band_floor(&f, 1.0, (2.0, 1.0), 8), Err(Error::EmptyBand { .. })));
        let nyq = PI / g.dt;
        assert!(matches!(
            band_floor(&f, 1.0, (10.0 * nyq, 11.0 * nyq), 8),
            Err(Error::BandAboveNyquist { .. })
        ));
    }

    #[test]
    fn bump_is_smooth_step() {
        assert_eq!(band_bump(10.0, 10.0, 2.0), 1.0);
        assert_eq!(band_bump(11.0, 10.0, 2.0), 1.0);
        assert_eq!(band_bump(12.0, 10.0, 2.0), 0.0);
        let mid = band_bump(11.5, 10.0, 2.0);
        assert!((mid - 0.5).abs() < 1e-12);
    }
}
