//! Subcommand implementations. Each returns the JSON it wrote so callers
//! and tests can inspect results without re-reading files.

use log::info;
use serde_json::{json, Value};
use std::fs;
use std::path::Path;

use foldylax::cluster::{
    alpha_inf, check_inversion_condition, check_neumann_condition, derive_coupling, rational_envelope,
    CouplingData,
};
use foldylax::dde_oracle::integrate_dde;
use foldylax::field::{epsilon_scaling_study, scattered_field, Observation, ScalingSetup};
use foldylax::kernel::{compute_v, neumann_solve, remainder_bound, KernelSpec, Truncation};
use foldylax::paths::{
    background_bound, band_condition, enumerate_paths, m_max, maximize_path, path_amplitude, paths_csv,
    AmplitudeParams, Path as WalkPath,
};
use foldylax::signal::{forcing_vector, incident_field, vector_norm, CausalSignal, Derivative};
use foldylax::Error;

use crate::config::SceneConfig;
use crate::CliError;

fn cfg_err(path: &str, e: Error) -> CliError {
    CliError::Config(format!("`{path}`: {e}"))
}

fn num_err(e: Error) -> CliError {
    CliError::Numerical(e.to_string())
}

fn matrix(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Every derived constant of the amplitude system.
pub fn derived_json(cd: &CouplingData, minnaert_hz: f64) -> Value {
    json!({
        "M": cd.m(),
        "epsilon": cd.epsilon,
        "minnaert_frequency_hz": minnaert_hz,
        "omega_M": cd.omega_m,
        "omega_res": cd.omega_res(),
        "c0": cd.c0,
        "C": cd.c,
        "C0": cd.c_free,
        "length_scale": cd.length_scale,
        "coupling_scale": cd.coupling_scale,
        "d_tilde": cd.d_tilde,
        "tau": matrix(&cd.tau),
        "q": matrix(&cd.q),
        "q0": matrix(&cd.q0),
        "tau_min": if cd.m() > 1 { json!(cd.tau_min()) } else { Value::Null },
    })
}

fn coupling(cfg: &SceneConfig) -> Result<(foldylax::BubbleCluster, CouplingData, f64), CliError> {
    let mat = cfg.material()?;
    let cluster = cfg.cluster()?;
    let cd = derive_coupling(&cluster, &mat, cfg.omega_mode()?).map_err(|e| cfg_err("cluster", e))?;
    Ok((cluster, cd, mat.minnaert_frequency(cfg.cluster_block()?.epsilon)))
}

/// `check`: condition reports only.
pub fn check(cfg: &SceneConfig) -> Result<(Value, bool), CliError> {
    let mat = cfg.material()?;
    let (cluster, cd, f) = coupling(cfg)?;
    let sim = cfg.simulation()?;
    let report = check_neumann_condition(&cd, sim.sigma0);
    let ok = report.satisfied;
    Ok((
        json!({
            "derived": derived_json(&cd, f),
            "neumann_condition": report,
            "inversion_condition": check_inversion_condition(&cluster, &mat, &cd),
        }),
        ok,
    ))
}

/// Relative discrete L² distance between two vectors of signals.
pub fn relative_l2(a: &[CausalSignal], b: &[CausalSignal]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.samples.iter().zip(&y.samples) {
            num += (u - v) * (u - v);
            den += v * v;
        }
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// `simulate`: Neumann series, scattered field, manifest.
///
/// Returns the manifest. Problems with the run itself end up in its
/// `flags` array; the caller turns a non-empty list into exit code 1.
pub fn simulate(cfg: &SceneConfig, out: &Path, force: bool) -> Result<Value, CliError> {
    let mat = cfg.material()?;
    let (cluster, cd, f_hz) = coupling(cfg)?;
    let sim = cfg.simulation()?;
    let src = cfg.source()?;
    let obs_block = cfg.observation()?;
    let grid = cfg.grid()?;

    let report = check_neumann_condition(&cd, sim.sigma0);
    if !report.satisfied && !force {
        return Err(CliError::Numerical(format!(
            "convergence condition fails ({}): lhs {:.6e} ≥ rhs {:.6e}; pass --force to run anyway",
            report.reason.clone().unwrap_or_default(),
            report.lhs,
            report.rhs
        )));
    }
    let observations = obs_block
        .points
        .iter()
        .enumerate()
        .map(|(k, x)| {
            Observation::new(*x, &cd, obs_block.min_clearance).map_err(|e| cfg_err(&format!("observation.points[{k}]"), e))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let f = forcing_vector(&cluster, &src.x0, &src.pulse, &mat, grid, sim.derivative)
        .map_err(|e| cfg_err("source", e))?;
    let v = compute_v(&f, cd.omega_m).map_err(num_err)?;
    let order = match sim.order {
        Some(n) => Truncation::Fixed(n),
        None => Truncation::Auto {
            tol: sim.tol,
            max_order: sim.max_order,
        },
    };
    info!("neumann series on {} bubbles, n = {}", cd.m(), grid.n);
    let sol = neumann_solve(&KernelSpec::new(cd.clone()), &v, order, sim.r, sim.sigma).map_err(num_err)?;
    let n = sol.order();

    fs::create_dir_all(out)?;
    sol.write_dir(out.join("terms")).map_err(num_err)?;
    fs::write(out.join("norms.csv"), sol.norms_csv())?;
    for (i, y) in sol.partial.iter().enumerate() {
        y.write_csv(out.join(format!("partial_bubble_{}.csv", i + 1))).map_err(num_err)?;
    }
    for (k, obs) in observations.iter().enumerate() {
        scattered_field(&sol, &cd, obs, n)
            .map_err(num_err)?
            .write_csv(out.join(format!("field_point_{}.csv", k + 1)))
            .map_err(num_err)?;
    }

    // The σ0-weighted norm is the one in which K contracts by the certified
    // α envelope, so a growing term there means the series is not converging.
    let sigma0_norms = sol
        .terms
        .iter()
        .map(|w| vector_norm(w, sim.r, sim.sigma0))
        .collect::<foldylax::Result<Vec<f64>>>()
        .map_err(num_err)?;
    let max_ratio = sigma0_norms
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(0.0f64, f64::max);
    let mut flags: Vec<String> = Vec::new();
    if sol.term_norms.iter().chain(&sigma0_norms).any(|x| !x.is_finite()) {
        flags.push("term_norms_not_finite".into());
    }
    if max_ratio >= 1.0 {
        flags.push("term_norms_not_decaying".into());
    }
    if let Truncation::Auto { tol, max_order } = order {
        let norms = &sol.term_norms;
        if n >= max_order && norms[n] > tol * norms[0] {
            flags.push("series_not_converged".into());
        }
    }

    let forcing_norm = vector_norm(&f, sim.r, sim.sigma).map_err(num_err)?;
    let bound = remainder_bound(&cd, sim.sigma0, n, forcing_norm, sim.alpha_bound).ok();

    let dde = if sim.dde_oracle || !report.satisfied {
        // The delay equation is driven by ∂²u^in; the series with the same
        // solution is the one built from u^in itself.
        match integrate_dde(&cd, &f) {
            Ok(y) => {
                for (i, s) in y.iter().enumerate() {
                    s.write_csv(out.join(format!("dde_bubble_{}.csv", i + 1))).map_err(num_err)?;
                }
                let paired = cluster
                    .centers
                    .iter()
                    .map(|z| incident_field(z, &src.x0, &src.pulse, &mat, grid))
                    .collect::<foldylax::Result<Vec<_>>>()
                    .and_then(|u| compute_v(&u, cd.omega_m))
                    .and_then(|v| neumann_solve(&KernelSpec::new(cd.clone()), &v, Truncation::Fixed(n), sim.r, sim.sigma));
                let diff = paired.ok().map(|s| relative_l2(&s.partial, &y));
                json!({ "status": "ok", "relative_l2_vs_series": diff })
            }
            Err(e @ Error::DdeDivergence { .. }) => {
                flags.push("dde_divergence".into());
                json!({ "status": "diverged", "detail": e.to_string() })
            }
            Err(e) => json!({ "status": "skipped", "detail": e.to_string() }),
        }
    } else {
        Value::Null
    };

    let manifest = json!({
        "command": "simulate",
        "generated_at": timestamp(),
        "forced": force,
        "config": cfg,
        "derived": derived_json(&cd, f_hz),
        "neumann_condition": report,
        "inversion_condition": check_inversion_condition(&cluster, &mat, &cd),
        "series": {
            "order": n,
            "term_norms": sol.term_norms,
            "term_norms_sigma0": sigma0_norms,
            "max_term_ratio_sigma0": max_ratio,
            "forcing_norm": forcing_norm,
            "remainder_bound": bound,
        },
        "dde_oracle": dde,
        "observations": observations,
        "flags": flags,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// `paths`: walk report and M_max summary.
pub fn paths(
    cfg: &SceneConfig,
    out: &Path,
    n_override: Option<usize>,
    start: Option<usize>,
    end: Option<usize>,
) -> Result<Value, CliError> {
    let mat = cfg.material()?;
    let (cluster, cd, _) = coupling(cfg)?;
    let pb = cfg.paths_block()?;
    let n = n_override.unwrap_or(pb.n);
    if n == 0 {
        return Err(CliError::Config("`paths.n`: must be ≥ 1".into()));
    }
    let sim = cfg.simulation.as_ref();
    let sigma = pb
        .sigma
        .or(sim.map(|s| s.sigma))
        .ok_or_else(|| CliError::Config("`paths.sigma`: missing and no simulation block".into()))?;
    let sigma0 = pb
        .sigma0
        .or(sim.map(|s| s.sigma0))
        .ok_or_else(|| CliError::Config("`paths.sigma0`: missing and no simulation block".into()))?;
    let params = AmplitudeParams {
        sigma,
        m: pb.m,
        h: pb.h,
        r: pb.r,
        d_max: pb.d_x,
        drop_path_delay: pb.drop_path_delay,
    };
    fs::create_dir_all(out)?;
    let m = cd.m();
    let check_index = |name: &str, v: Option<usize>| -> Result<Vec<usize>, CliError> {
        match v {
            Some(i) if i >= 1 && i <= m => Ok(vec![i]),
            Some(i) => Err(CliError::Config(format!("`paths.{name}`: {i} is not a bubble index in 1..={m}"))),
            None => Ok((1..=m).collect()),
        }
    };
    let starts = check_index("start", start.or(pb.start))?;
    let ends = check_index("end", end.or(pb.end))?;
    let mut walks: Vec<WalkPath> = Vec::new();
    for &i in &starts {
        for &j in &ends {
            walks.extend(enumerate_paths(&cd, n, i, j, pb.budget).map_err(num_err)?);
        }
    }
    walks.sort_by(|a, b| a.indices.cmp(&b.indices));
    fs::write(out.join("paths.csv"), paths_csv(&walks, &cd, &params))?;

    if walks.is_empty() {
        let summary = json!({
            "command": "paths",
            "generated_at": timestamp(),
            "config": cfg,
            "N": n,
            "path_count": 0,
            "note": "no paths: a walk needs at least two bubbles",
        });
        write_json(&out.join("summary.json"), &summary)?;
        return Ok(summary);
    }

    let (gamma_star, l_star) = maximize_path(&walks, &cd, &params).map_err(num_err)?;
    let selected = match &pb.selected {
        Some(idx) => {
            let g = WalkPath::from_indices(&cd, idx).map_err(|e| cfg_err("paths.selected", e))?;
            if g.len() != n {
                return Err(CliError::Config(format!(
                    "`paths.selected`: has {} steps but N = {n}",
                    g.len()
                )));
            }
            Some(g)
        }
        None => None,
    };
    let l_selected = selected.as_ref().map(|g| path_amplitude(g, &cd, &params));

    let forcing_norm = match pb.forcing_norm {
        Some(v) => v,
        None => {
            let src = cfg.source()?;
            let f = forcing_vector(&cluster, &src.x0, &src.pulse, &mat, cfg.grid()?, Derivative::Analytic)
                .map_err(|e| cfg_err("source", e))?;
            vector_norm(&f, 0, sigma).map_err(num_err)?
        }
    };
    let alpha_pow = match pb.alpha_pow {
        Some(v) => v,
        None => alpha_inf(&cd, sigma0, pb.alpha_bound)
            .ok_or_else(|| CliError::Numerical("σ0 ω_M ≤ 1: no α bound".into()))?
            .powi(n as i32 + 1),
    };
    let alpha_equiv = alpha_pow.powf(1.0 / (n as f64 + 1.0));
    let b_unit = background_bound(&cd, sigma, sigma0, n, pb.d_x, 1.0, alpha_equiv).map_err(num_err)?;
    let l_used = l_selected.unwrap_or(l_star);
    let mm = m_max(l_used, b_unit, forcing_norm, pb.theta).map_err(|e| cfg_err("paths.theta", e))?;
    let band = band_condition(
        &cd,
        selected.as_ref().unwrap_or(&gamma_star),
        &params,
        sigma0,
        pb.d_x,
        forcing_norm,
        pb.theta,
    )
    .ok();

    let summary = json!({
        "command": "paths",
        "generated_at": timestamp(),
        "config": cfg,
        "N": n,
        "path_count": walks.len(),
        "gamma_star": gamma_star.label(),
        "gamma_star_Q0": gamma_star.q0,
        "gamma_star_tau": gamma_star.tau_total,
        "L_star": l_star,
        "selected": selected.as_ref().map(|g| g.label()),
        "selected_Q0": selected.as_ref().map(|g| g.q0),
        "selected_tau": selected.as_ref().map(|g| g.tau_total),
        "L_selected": l_selected,
        "rational_factor": rational_envelope(cd.omega_m, sigma0),
        "alpha_pow": alpha_pow,
        "forcing_norm": forcing_norm,
        "B_unit": b_unit,
        "B": b_unit * forcing_norm,
        "theta": pb.theta,
        "M_max": mm,
        "band_condition": band,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// `scaling`: ε sweep of the field differences and remainders.
pub fn scaling(cfg: &SceneConfig, out: &Path, eps_override: Option<Vec<f64>>) -> Result<Value, CliError> {
    let mat = cfg.material()?;
    let sb = cfg.scaling_block()?;
    let eps = eps_override.unwrap_or_else(|| sb.eps.clone());
    if eps.is_empty() {
        return Err(CliError::Config("`scaling.eps`: empty ε list".into()));
    }
    let src = cfg.source()?;
    let sim = cfg.simulation()?;
    let obs = cfg.observation()?;
    let vol = cfg
        .cluster
        .as_ref()
        .and_then(|c| c.volume)
        .unwrap_or(4.0 * std::f64::consts::PI / 3.0);
    let setup = ScalingSetup {
        template: sb.template.clone(),
        material: mat,
        omega_m: sb.omega_m,
        vol_b: vol,
        x0: src.x0,
        pulse: src.pulse,
        observation: obs.points[0],
        grid: cfg.grid()?,
        sigma: sim.sigma,
        r: sim.r,
        extra_terms: sb.extra_terms,
        min_clearance: obs.min_clearance,
    };
    let study = epsilon_scaling_study(&setup, &eps, sb.p, sb.n).map_err(|e| match e {
        Error::DegenerateFit(_) | Error::InvalidParameter { .. } => cfg_err("scaling", e),
        other => num_err(other),
    })?;
    fs::create_dir_all(out)?;
    fs::write(out.join("scaling.csv"), study.to_csv())?;
    let summary = json!({
        "command": "scaling",
        "generated_at": timestamp(),
        "config": cfg,
        "N": study.n,
        "p": study.p,
        "diff_slope": study.diff_fit.slope,
        "expected_diff_exponent": study.expected_diff,
        "remainder_slope": study.remainder_fit.slope,
        "expected_remainder_exponent": study.expected_remainder,
        "slope_tolerance": foldylax::field::SLOPE_TOL,
        "diff_pass": study.diff_pass,
        "remainder_pass": study.remainder_pass,
        "dominance_monotone": study.dominance_monotone,
        "fits": { "diff": study.diff_fit, "remainder": study.remainder_fit },
    });
    write_json(&out.join("scaling.json"), &summary)?;
    Ok(summary)
}
