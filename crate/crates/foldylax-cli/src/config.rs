//! Scene configuration files (TOML, SI units).

use serde::{Deserialize, Serialize};
use std::path::Path;

use foldylax::cluster::{AlphaBound, BubbleCluster, MaterialParams, OmegaMode};
use foldylax::signal::{Derivative, PulseSpec, TimeGrid};
use foldylax::Vec3;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub material: Option<MaterialParams>,
    pub cluster: Option<ClusterBlock>,
    pub source: Option<SourceBlock>,
    pub simulation: Option<SimulationBlock>,
    pub observation: Option<ObservationBlock>,
    pub paths: Option<PathsBlock>,
    pub scaling: Option<ScalingBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaChoice {
    Minnaert,
    LambdaDb,
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterBlock {
    /// Physical centers, m. Exclusive with `template`.
    pub centers: Option<Vec<Vec3>>,
    /// ε-free centers, scaled by ε^p.
    pub template: Option<Vec<Vec3>>,
    pub epsilon: f64,
    pub p: f64,
    /// Reference-shape volume, default 4π/3.
    pub volume: Option<f64>,
    pub length_scale: Option<f64>,
    pub d_tilde: Option<f64>,
    pub lambda_db: Option<f64>,
    pub lambda1_3: Option<f64>,
    #[serde(default = "default_omega")]
    pub omega_mode: OmegaChoice,
    /// Required when omega_mode = "explicit", seconds.
    pub omega_m: Option<f64>,
}

fn default_omega() -> OmegaChoice {
    OmegaChoice::Minnaert
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBlock {
    pub x0: Vec3,
    pub pulse: PulseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub t_end: f64,
    pub n: usize,
    /// Abscissa of the H^r_{0,σ} norms, 1/s.
    pub sigma: f64,
    /// Abscissa of the convergence condition, 1/s.
    pub sigma0: f64,
    #[serde(default)]
    pub r: usize,
    /// Fixed truncation order. When absent the series stops on `tol`.
    pub order: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    #[serde(default)]
    pub derivative: Derivative,
    #[serde(default)]
    pub alpha_bound: AlphaBound,
    /// Also run the delay-equation integrator.
    #[serde(default)]
    pub dde_oracle: bool,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_order() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationBlock {
    pub points: Vec<Vec3>,
    #[serde(default)]
    pub min_clearance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsBlock {
    pub n: usize,
    /// 1-based start bubble; all starts when absent.
    pub start: Option<usize>,
    pub end: Option<usize>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub m: f64,
    pub h: f64,
    #[serde(default)]
    pub r: u32,
    /// σ in the path amplitude, defaults to simulation.sigma.
    pub sigma: Option<f64>,
    /// Convergence abscissa, defaults to simulation.sigma0.
    pub sigma0: Option<f64>,
    /// Source-to-cluster distance used for both d_min and d_max.
    pub d_x: f64,
    #[serde(default)]
    pub drop_path_delay: bool,
    /// Path used for M_max instead of the maximiser.
    pub selected: Option<Vec<usize>>,
    /// Replaces α_∞^{N+1} in the background bound.
    pub alpha_pow: Option<f64>,
    /// Replaces the computed ‖F‖.
    pub forcing_norm: Option<f64>,
    #[serde(default)]
    pub alpha_bound: AlphaBound,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_theta() -> f64 {
    0.9
}

fn default_budget() -> usize {
    foldylax::paths::DEFAULT_BUDGET
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingBlock {
    pub eps: Vec<f64>,
    pub n: usize,
    pub p: f64,
    /// ε-free centers.
    pub template: Vec<Vec3>,
    /// Held fixed across ε, seconds.
    pub omega_m: f64,
    #[serde(default = "default_extra")]
    pub extra_terms: usize,
}

fn default_extra() -> usize {
    4
}

pub fn missing(path: &str) -> CliError {
    CliError::Config(format!("missing required block `{path}`"))
}

fn bad(path: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{path}`: {reason}"))
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn material(&self) -> Result<MaterialParams, CliError> {
        let m = self.material.ok_or_else(|| missing("material"))?;
        m.validate().map_err(|e| bad("material", e))?;
        Ok(m)
    }

    pub fn cluster_block(&self) -> Result<&ClusterBlock, CliError> {
        self.cluster.as_ref().ok_or_else(|| missing("cluster"))
    }

    pub fn source(&self) -> Result<&SourceBlock, CliError> {
        let s = self.source.as_ref().ok_or_else(|| missing("source"))?;
        s.pulse.validate().map_err(|e| bad("source.pulse", e))?;
        Ok(s)
    }

    pub fn simulation(&self) -> Result<&SimulationBlock, CliError> {
        let s = self.simulation.as_ref().ok_or_else(|| missing("simulation"))?;
        for (name, v) in [("simulation.sigma", s.sigma), ("simulation.sigma0", s.sigma0), ("simulation.tol", s.tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(s)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        let s = self.simulation()?;
        TimeGrid::new(s.t_end, s.n).map_err(|e| bad("simulation", e))
    }

    pub fn observation(&self) -> Result<&ObservationBlock, CliError> {
        let o = self.observation.as_ref().ok_or_else(|| missing("observation"))?;
        if o.points.is_empty() {
            return Err(bad("observation.points", "needs at least one point"));
        }
        Ok(o)
    }

    pub fn paths_block(&self) -> Result<&PathsBlock, CliError> {
        self.paths.as_ref().ok_or_else(|| missing("paths"))
    }

    pub fn scaling_block(&self) -> Result<&ScalingBlock, CliError> {
        self.scaling.as_ref().ok_or_else(|| missing("scaling"))
    }

    pub fn cluster(&self) -> Result<BubbleCluster, CliError> {
        let b = self.cluster_block()?;
        let c = match (&b.centers, &b.template) {
            (Some(c), None) => BubbleCluster::new(c.clone(), b.epsilon, b.p),
            (None, Some(t)) => BubbleCluster::from_template(t, b.epsilon, b.p),
            (Some(_), Some(_)) => return Err(bad("cluster", "give either `centers` or `template`, not both")),
            (None, None) => return Err(bad("cluster", "missing `centers` or `template`")),
        }
        .map_err(|e| bad("cluster", e))?;
        let mut c = c;
        if let Some(v) = b.volume {
            c = c.with_volume(v);
        }
        if let Some(v) = b.length_scale {
            c = c.with_length_scale(v);
        }
        if let Some(v) = b.d_tilde {
            c = c.with_d_tilde(v);
        }
        if let Some(v) = b.lambda_db {
            c = c.with_lambda_db(v);
        }
        if let Some(v) = b.lambda1_3 {
            c = c.with_lambda1_3(v);
        }
        c.validate().map_err(|e| bad("cluster", e))?;
        Ok(c)
    }

    pub fn omega_mode(&self) -> Result<OmegaMode, CliError> {
        let b = self.cluster_block()?;
        Ok(match b.omega_mode {
            OmegaChoice::Minnaert => OmegaMode::FromMinnaertFormula,
            OmegaChoice::LambdaDb => OmegaMode::FromLambdaDB,
            OmegaChoice::Explicit => OmegaMode::Explicit(
                b.omega_m
                    .ok_or_else(|| bad("cluster.omega_m", "required when omega_mode = \"explicit\""))?,
            ),
        })
    }
}
