//! Inversion and S-curve commands.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use super::config::RunConfig;
use super::io;
use super::Outcome;
use crate::error::{Error, Result};
use crate::gof::{rms_deviation, ModeEvaluator, ShapeProblem};
use crate::mce::{
    analyze, max_curvature_index, mcw, single_mode_minima, trace_scurve, Analysis, FeasibilityVerdict, IdealPoint,
    ModeSet, PipelineOptions, SCurve,
};
use crate::optimizer::jittered_starts;
use crate::shape::{ShapeFile, ShapeParams};

pub const REPORT_FILE: &str = "report.json";
pub const SCURVE_FILE: &str = "scurve.csv";
pub const PROFILE_FIT_FILE: &str = "profile_fit.csv";
pub const SHAPE_FILE: &str = "shape.json";
pub const SCURVE_SUMMARY_FILE: &str = "scurve_summary.json";

/// Loaded data, mode set and options for one shape inversion.
pub struct Prepared {
    pub problem: ShapeProblem,
    pub modes: ModeSet,
    pub starts: Vec<Vec<f64>>,
    pub options: PipelineOptions,
}

impl Prepared {
    pub fn n_points(&self) -> Vec<usize> {
        self.modes.modes().iter().map(|m| m.n_points).collect()
    }
}

/// Reads every input the inversion needs. Nothing is written here, so a
/// missing or malformed input leaves no partial outputs.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    RunConfig::require_file(&config.brightness)?;
    RunConfig::require_file(&config.profiles)?;
    let brightness = io::parse_brightness_csv(&config.brightness)?;
    let profiles = io::parse_profile_csv(&config.profiles)?;
    let spin = match config.model.spin {
        Some(s) => s.to_spin()?,
        None => {
            let path = config.shape_path()?;
            RunConfig::require_file(path)?;
            io::parse_shape_json(path)?.spin
        }
    };
    let m = &config.model;
    let template = ShapeParams::new(m.l_max, m.m_max.unwrap_or(m.l_max), spin);
    let problem = ShapeProblem::new(
        brightness,
        profiles,
        config.scattering,
        config.subdivision,
        template,
        m.regularizer_weight,
    )?;
    let bounds = [config.bounds.brightness, config.bounds.profile];
    let modes: Vec<ModeEvaluator> = problem
        .modes()
        .into_iter()
        .zip(bounds)
        .map(|(mode, b)| match b {
            Some(e) => mode.with_bound(e),
            None => mode,
        })
        .collect();
    let optimizer = config.optimizer.clone().with_scales(problem.scales());
    let base = problem.initial_guess();
    let mut starts = vec![base.clone()];
    if m.starts > 1 {
        let jitter = crate::optimizer::OptimizerOptions {
            seed: config.seed,
            ..optimizer.clone()
        };
        starts.extend(jittered_starts(&base, m.starts - 1, 1.0, &jitter)?);
    }
    let options = PipelineOptions {
        grid: config.lambda_grid.clone(),
        trace: config.trace,
        optimizer,
        continuity_factor: config.continuity_factor,
        ..Default::default()
    };
    Ok(Prepared {
        problem,
        modes: ModeSet::new(modes)?,
        starts,
        options,
    })
}

fn rms_all(chi2: &[f64], n_points: &[usize]) -> Vec<f64> {
    chi2.iter()
        .zip(n_points)
        .map(|(&c, &n)| rms_deviation(c, n).unwrap_or(f64::NAN))
        .collect()
}

fn ideal_json(ideal: &IdealPoint, n_points: &[usize]) -> Value {
    json!({
        "chi2_0": ideal.chi2_0,
        "d_0": rms_all(&ideal.chi2_0, n_points),
        "nondegenerate": ideal.is_nondegenerate(),
        "degenerate_pairs": ideal.degenerate_pairs,
    })
}

fn curvature_json(curve: &SCurve, n_points: &[usize]) -> Value {
    match max_curvature_index(curve) {
        Some(k) => {
            let p = &curve.points[k];
            json!({ "index": k, "lambda": p.lambda, "chi2": p.chi2, "d": rms_all(&p.chi2, n_points) })
        }
        None => Value::Null,
    }
}

/// Report document for a finished analysis.
pub fn analysis_report(prepared: &Prepared, analysis: &Analysis) -> Result<Value> {
    let n_points = prepared.n_points();
    let names: Vec<&str> = prepared.modes.modes().iter().map(|m| m.name.as_str()).collect();
    let estimate = |e: &crate::mce::MceEstimate| -> Result<Value> {
        Ok(json!({
            "params": e.params,
            "chi2": e.chi2,
            "d": rms_all(&e.chi2, &n_points),
            "objective": e.objective,
            "converged": e.converged,
            "chi2_brightness_data": prepared.problem.chi2_brightness(&e.params)?,
            "regularizer": prepared.problem.regularizer(&e.params)?,
        }))
    };
    let mcw_point = analysis.mcw_point();
    let final_params = analysis.final_params();
    let status = match analysis.feasibility.verdict {
        FeasibilityVerdict::Infeasible => "infeasible",
        _ => "success",
    };
    let chi2_l_data = prepared.problem.chi2_brightness(final_params)?;
    Ok(json!({
        "status": status,
        "modes": names.iter().zip(&n_points).zip(prepared.modes.modes()).map(|((name, n), m)| json!({
            "name": name, "n_points": n, "bound": m.bound,
        })).collect::<Vec<_>>(),
        "ideal_point": ideal_json(&analysis.ideal, &n_points),
        "mcw": {
            "index": analysis.selection.index,
            "lambda": mcw_point.lambda,
            "distance2": analysis.ideal.log_distance2(&mcw_point.chi2),
            "chi2": mcw_point.chi2,
            "d": rms_all(&mcw_point.chi2, &n_points),
        },
        "mce": estimate(&analysis.mce)?,
        "mce_first_order": estimate(&analysis.first_order)?,
        "first_order_log_distance": analysis.first_order_distance,
        "feasibility": analysis.feasibility,
        "continuity": analysis.continuity,
        "curvature_baseline": curvature_json(&analysis.curve, &n_points),
        "trace_failures": analysis.curve.failures,
        "final": {
            "chi2": analysis.final_chi2(),
            "d": rms_all(analysis.final_chi2(), &n_points),
            "d_brightness_data": rms_deviation(chi2_l_data, n_points[0])?,
            "shape": ShapeFile::from_params(&prepared.problem.layout.to_params(final_params)?),
        },
    }))
}

/// Runs the full estimation and writes the report, S-curve, profile fit and
/// final shape. Analysis errors are recorded in the report before being
/// returned.
pub fn cmd_invert(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let prepared = prepare(config)?;
    let analysis = match analyze(&prepared.modes, &prepared.starts, &prepared.options) {
        Ok(a) => a,
        Err(e) => {
            std::fs::create_dir_all(out).map_err(|err| Error::io(out, err))?;
            io::write_json(out.join(REPORT_FILE), &json!({ "status": "failure", "error": e.to_string() }))?;
            return Err(e);
        }
    };
    let report = analysis_report(&prepared, &analysis)?;
    let final_shape = prepared.problem.layout.to_params(analysis.final_params())?;
    let model_radii: Vec<Vec<f64>> = prepared
        .problem
        .model
        .profiles(&prepared.problem.profiles, &final_shape)?
        .into_iter()
        .map(|s| s.into_iter().map(|p| p.r_max).collect())
        .collect();

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    io::write_json(out.join(REPORT_FILE), &report)?;
    write_scurve_file(&out.join(SCURVE_FILE), &analysis.curve, &analysis.ideal, &prepared.n_points())?;
    io::write_profile_fit_csv(out.join(PROFILE_FIT_FILE), &prepared.problem.profiles, &model_radii)?;
    final_shape.save(out.join(SHAPE_FILE))?;
    Ok(match analysis.feasibility.verdict {
        FeasibilityVerdict::Infeasible => Outcome::Infeasible,
        _ => Outcome::Success,
    })
}

fn write_scurve_file(path: &Path, curve: &SCurve, ideal: &IdealPoint, n_points: &[usize]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    io::write_scurve_csv(file, curve, ideal, n_points)
}

/// Ideal point and traced S-curve without the estimation steps.
pub fn trace_only(modes: &ModeSet, starts: &[Vec<f64>], options: &PipelineOptions) -> Result<(IdealPoint, SCurve)> {
    let mut ideal = single_mode_minima(modes, &options.optimizer, starts)?;
    let grid = options.grid.build(modes.len(), &ideal)?;
    let mut curve = trace_scurve(modes, &grid, &ideal, &options.optimizer, &options.trace)?;
    if ideal.absorb(modes, &curve)? {
        curve.relative_to(&ideal);
    }
    Ok((ideal, curve))
}

fn scurve_summary(ideal: &IdealPoint, curve: &SCurve, n_points: &[usize]) -> Result<Value> {
    let sel = mcw(curve, ideal)?;
    Ok(json!({
        "ideal_point": ideal_json(ideal, n_points),
        "mcw": { "index": sel.index, "lambda": sel.lambda, "distance2": sel.distance2 },
        "curvature_baseline": curvature_json(curve, n_points),
        "trace_failures": curve.failures,
    }))
}

/// Traces the S-curve of the configured shape problem.
pub fn cmd_scurve(config: &RunConfig, out: &Path) -> Result<()> {
    let prepared = prepare(config)?;
    let (ideal, curve) = trace_only(&prepared.modes, &prepared.starts, &prepared.options)?;
    let n_points = prepared.n_points();
    let summary = scurve_summary(&ideal, &curve, &n_points)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_scurve_file(&out.join(SCURVE_FILE), &curve, &ideal, &n_points)?;
    io::write_json(out.join(SCURVE_SUMMARY_FILE), &summary)
}

/// The two-mode quadratic test problem `χ²_1 = p² + 1`, `χ²_2 = (p - 1)² + 1`.
pub fn quadratic_modes() -> ModeSet {
    ModeSet::new(vec![
        ModeEvaluator::new("first", 1, |p: &[f64]| Ok(p[0] * p[0] + 1.0)),
        ModeEvaluator::new("second", 1, |p: &[f64]| Ok((p[0] - 1.0).powi(2) + 1.0)),
    ])
    .expect("two modes")
}

/// Traces the built-in test problem. Writes into `out` when given, and to
/// `stdout` otherwise.
pub fn cmd_selftest(name: &str, config: Option<&RunConfig>, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    if name != "quadratic" {
        return Err(Error::Config(format!("unknown self-test `{name}` (available: quadratic)")));
    }
    let modes = quadratic_modes();
    let mut options = PipelineOptions::default();
    options.optimizer.gradient_tolerance = 1e-12;
    if let Some(c) = config {
        options.grid = c.lambda_grid.clone();
        options.trace = c.trace;
    }
    let (ideal, curve) = trace_only(&modes, &[vec![0.5]], &options)?;
    let n_points = [1, 1];
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_scurve_file(&dir.join(SCURVE_FILE), &curve, &ideal, &n_points)?;
            io::write_json(dir.join(SCURVE_SUMMARY_FILE), &scurve_summary(&ideal, &curve, &n_points)?)
        }
        None => io::write_scurve_csv(stdout, &curve, &ideal, &n_points),
    }
}
