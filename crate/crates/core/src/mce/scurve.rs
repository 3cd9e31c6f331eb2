//! Tracing the S-curve of weighted-sum minimizers and selecting the
//! maximum compatibility weight on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_lambda, chi_tot_values, IdealPoint, ModeSet};
use crate::error::{Error, Result};
use crate::optimizer::{minimize, OptimizerOptions};

/// One minimizer of `χ²_tot` for a fixed weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SCurvePoint {
    /// Position in the weight grid the point was traced from.
    pub grid_index: usize,
    pub lambda: Vec<f64>,
    /// Mode values at the minimizer.
    pub chi2: Vec<f64>,
    /// `log(χ²_i/χ²_i0)` relative to the ideal point used when tracing.
    pub log_coords: Vec<f64>,
    pub params: Vec<f64>,
    /// `χ²_tot` at the minimizer.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFailure {
    pub grid_index: usize,
    pub lambda: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SCurve {
    pub points: Vec<SCurvePoint>,
    pub failures: Vec<TraceFailure>,
}

impl SCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Recomputes the log coordinates against another ideal point.
    pub fn relative_to(&mut self, ideal: &IdealPoint) {
        for p in &mut self.points {
            p.log_coords = ideal.log_ratios(&p.chi2);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceOptions {
    /// Start each grid point from its predecessor's minimizer. Disabling
    /// this lets grid points be solved concurrently.
    pub warm_start: bool,
    /// Add a reverse sweep starting from the last mode's minimizer and keep
    /// the better minimizer at each grid point.
    pub bidirectional: bool,
    /// Maximum passes that re-solve a grid point from a neighbour's
    /// minimizer whenever the neighbour gives a lower `χ²_tot` there.
    pub consistency_passes: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            warm_start: true,
            bidirectional: true,
            consistency_passes: 8,
        }
    }
}

/// `count`-free log grid: `per_decade` points per factor of ten, both ends
/// included.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0) || !(max >= min) || points == 0 {
        return Err(Error::Config(format!("invalid weight grid [{min}, {max}] with {points} points")));
    }
    if points == 1 || min == max {
        return Ok(vec![min]);
    }
    let (a, b) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Cartesian product of per-axis grids, last axis varying fastest.
pub fn cartesian_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

/// Rescales each weight by `χ²_10 / χ²_i0`, so that a weight of one balances
/// the modes at their minima and the grid follows any per-mode rescaling.
pub fn normalized_grid(ideal: &IdealPoint, grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    grid.iter()
        .map(|lambda| {
            lambda
                .iter()
                .enumerate()
                .map(|(i, l)| l * ideal.chi2_0[0] / ideal.chi2_0[i + 1])
                .collect()
        })
        .collect()
}

/// Weight grid configuration: `points` log-spaced values in `[min, max]` on
/// every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaGridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Interpret the grid relative to the ideal-point ratios.
    pub normalized: bool,
}

impl Default for LambdaGridSpec {
    fn default() -> Self {
        Self {
            min: 1e-3,
            max: 1e3,
            points: 25,
            normalized: true,
        }
    }
}

impl LambdaGridSpec {
    pub fn build(&self, n_modes: usize, ideal: &IdealPoint) -> Result<Vec<Vec<f64>>> {
        let axis = log_grid(self.min, self.max, self.points)?;
        let grid = cartesian_grid(&vec![axis; n_modes.saturating_sub(1)]);
        Ok(if self.normalized { normalized_grid(ideal, &grid) } else { grid })
    }
}

type Solution = (Vec<f64>, f64);

fn solve_at(modeset: &ModeSet, lambda: &[f64], start: &[f64], options: &OptimizerOptions) -> std::result::Result<Solution, String> {
    let objective = |p: &[f64]| match modeset.chi2(p) {
        Ok(c) => chi_tot_values(&c, lambda).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    };
    match minimize(&objective, start, options) {
        Ok(r) if r.usable() => Ok((r.x, r.value)),
        Ok(r) => Err(format!("optimizer stopped with {:?}", r.reason)),
        Err(e) => Err(e.to_string()),
    }
}

fn total_at(modeset: &ModeSet, lambda: &[f64], p: &[f64]) -> f64 {
    modeset
        .chi2(p)
        .ok()
        .and_then(|c| chi_tot_values(&c, lambda).ok())
        .unwrap_or(f64::INFINITY)
}

fn keep_better(slot: &mut Option<Solution>, candidate: Solution) {
    if slot.as_ref().is_none_or(|s| candidate.1 < s.1) {
        *slot = Some(candidate);
    }
}

/// Minimizes `χ²_tot` at every weight vector of `grid`, returning points in
/// grid order. Failed grid points are reported and skipped.
pub fn trace_scurve(
    modeset: &ModeSet,
    grid: &[Vec<f64>],
    ideal: &IdealPoint,
    options: &OptimizerOptions,
    trace: &TraceOptions,
) -> Result<SCurve> {
    if grid.is_empty() {
        return Err(Error::Precondition("weight grid is empty".into()));
    }
    for lambda in grid {
        check_lambda(modeset.len(), lambda)?;
    }
    let first = &ideal.minimizers[0];
    let last = &ideal.minimizers[modeset.len() - 1];
    let mut best: Vec<Option<Solution>> = vec![None; grid.len()];
    let mut reasons: Vec<String> = vec![String::new(); grid.len()];

    let mut sweep = |order: Vec<usize>, origin: &Vec<f64>, best: &mut Vec<Option<Solution>>| {
        if trace.warm_start {
            let mut prev = origin.clone();
            for k in order {
                match solve_at(modeset, &grid[k], &prev, options) {
                    Ok(sol) => {
                        prev = sol.0.clone();
                        keep_better(&mut best[k], sol);
                    }
                    Err(reason) => reasons[k] = reason,
                }
            }
        } else {
            let results: Vec<_> = order
                .par_iter()
                .map(|&k| (k, solve_at(modeset, &grid[k], origin, options)))
                .collect();
            for (k, r) in results {
                match r {
                    Ok(sol) => keep_better(&mut best[k], sol),
                    Err(reason) => reasons[k] = reason,
                }
            }
        }
    };
    sweep((0..grid.len()).collect(), first, &mut best);
    if trace.bidirectional {
        sweep((0..grid.len()).rev().collect(), last, &mut best);
    }

    // A point whose neighbour's minimizer does better at its own weight is
    // not a minimizer; re-solve from there. Once no point can be improved this
    // way, neighbouring points are ordered as exact weighted-sum minimizers are.
    for _ in 0..trace.consistency_passes {
        let mut changed = false;
        for k in 0..grid.len() {
            for j in [k.wrapping_sub(1), k + 1] {
                let Some(Some((pj, _))) = best.get(j).cloned() else { continue };
                let t = total_at(modeset, &grid[k], &pj);
                let current = best[k].as_ref().map_or(f64::INFINITY, |s| s.1);
                if t < current - 1e-14 * current.abs() {
                    let mut candidate = Some((pj.clone(), t));
                    if let Ok(sol) = solve_at(modeset, &grid[k], &pj, options) {
                        keep_better(&mut candidate, sol);
                    }
                    best[k] = candidate;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // Finish without re-solving: adopt a neighbour's minimizer wherever it
    // is better. Every swap lowers one total and the candidates are finite,
    // so this terminates with no point improvable by a neighbour.
    loop {
        let mut changed = false;
        for k in 0..grid.len() {
            for j in [k.wrapping_sub(1), k + 1] {
                let Some(Some((pj, _))) = best.get(j).cloned() else { continue };
                let t = total_at(modeset, &grid[k], &pj);
                if t < best[k].as_ref().map_or(f64::INFINITY, |s| s.1) {
                    best[k] = Some((pj, t));
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut curve = SCurve::default();
    for (k, slot) in best.into_iter().enumerate() {
        match slot {
            Some((params, total)) => {
                let chi2 = modeset.chi2(&params)?;
                curve.points.push(SCurvePoint {
                    grid_index: k,
                    lambda: grid[k].clone(),
                    log_coords: ideal.log_ratios(&chi2),
                    chi2,
                    params,
                    total,
                });
            }
            None => curve.failures.push(TraceFailure {
                grid_index: k,
                lambda: grid[k].clone(),
                reason: std::mem::take(&mut reasons[k]),
            }),
        }
    }
    Ok(curve)
}

/// The traced point closest to the ideal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McwSelection {
    /// Index into the traced points.
    pub index: usize,
    pub lambda: Vec<f64>,
    /// Squared log-distance to the ideal point.
    pub distance2: f64,
}

/// Maximum compatibility weight over the whole curve.
pub fn mcw(curve: &SCurve, ideal: &IdealPoint) -> Result<McwSelection> {
    mcw_among(curve, ideal, &(0..curve.len()).collect::<Vec<_>>())
}

/// Maximum compatibility weight restricted to the given point indices.
pub fn mcw_among(curve: &SCurve, ideal: &IdealPoint, indices: &[usize]) -> Result<McwSelection> {
    indices
        .iter()
        .filter_map(|&i| curve.points.get(i).map(|p| (i, ideal.log_distance2(&p.chi2))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(index, distance2)| McwSelection {
            index,
            lambda: curve.points[index].lambda.clone(),
            distance2,
        })
        .ok_or_else(|| Error::Precondition("cannot select a weight on an empty S-curve".into()))
}

/// Maximum-curvature point of a two-mode curve in `(log χ²_1, log χ²_2)`
/// parametrized by `log λ`. Reported for comparison only.
pub fn max_curvature_index(curve: &SCurve) -> Option<usize> {
    if curve.len() < 3 || curve.points[0].chi2.len() != 2 {
        return None;
    }
    let t: Vec<f64> = curve.points.iter().map(|p| p.lambda[0].ln()).collect();
    let x: Vec<f64> = curve.points.iter().map(|p| p.chi2[0].max(crate::gof::CHI2_FLOOR).ln()).collect();
    let y: Vec<f64> = curve.points.iter().map(|p| p.chi2[1].max(crate::gof::CHI2_FLOOR).ln()).collect();
    let derivs = |f: &[f64], k: usize| {
        let (h1, h2) = (t[k] - t[k - 1], t[k + 1] - t[k]);
        let d1 = -h2 / (h1 * (h1 + h2)) * f[k - 1] + (h2 - h1) / (h1 * h2) * f[k] + h1 / (h2 * (h1 + h2)) * f[k + 1];
        let d2 = 2.0 * (f[k - 1] / (h1 * (h1 + h2)) - f[k] / (h1 * h2) + f[k + 1] / (h2 * (h1 + h2)));
        (d1, d2)
    };
    (1..curve.len() - 1)
        .filter(|&k| t[k] > t[k - 1] && t[k + 1] > t[k])
        .filter_map(|k| {
            let (x1, x2) = derivs(&x, k);
            let (y1, y2) = derivs(&y, k);
            let speed = (x1 * x1 + y1 * y1).powf(1.5);
            (speed > 1e-300).then(|| (k, (x1 * y2 - y1 * x2).abs() / speed))
        })
        .filter(|(_, k)| k.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

/// Curve window and adjusted ideal point for a regularizer treated as a mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerWindow {
    /// Traced point indices kept.
    pub indices: Vec<usize>,
    /// Lower practical limit applied to the regularizer.
    pub floor: f64,
    /// Ideal point with the regularizer minimum raised to `floor`.
    pub ideal: IdealPoint,
}

/// Restricts the curve to points where regularizer mode `mode_index` stays
/// above `floor_factor` times its median along the curve.
pub fn regularizer_mode_guard(
    modeset: &ModeSet,
    curve: &SCurve,
    ideal: &IdealPoint,
    mode_index: usize,
    floor_factor: f64,
) -> Result<RegularizerWindow> {
    if mode_index >= modeset.len() || !modeset.mode(mode_index).regularizer {
        return Err(Error::Precondition(format!("mode {mode_index} is not flagged as a regularizer")));
    }
    if curve.is_empty() {
        return Err(Error::Precondition("regularizer guard needs a traced curve".into()));
    }
    let mut values: Vec<f64> = curve.points.iter().map(|p| p.chi2[mode_index]).collect();
    values.sort_by(f64::total_cmp);
    let median = values[values.len() / 2];
    let floor = floor_factor * median;
    let indices: Vec<usize> = curve
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.chi2[mode_index] >= floor)
        .map(|(i, _)| i)
        .collect();
    let mut adjusted = ideal.clone();
    adjusted.chi2_0[mode_index] = adjusted.chi2_0[mode_index].max(floor);
    Ok(RegularizerWindow {
        indices,
        floor,
        ideal: adjusted,
    })
}

/// Coordinate descent on `log λ` around `start`, minimizing the distance of
/// the `χ²_tot` minimizer to the ideal point. Each axis is tried with
/// factors `e^{±step}`; the step halves when no move helps.
pub fn refine_lambda(
    modeset: &ModeSet,
    ideal: &IdealPoint,
    start: &SCurvePoint,
    options: &OptimizerOptions,
    initial_step: f64,
    min_step: f64,
) -> Result<SCurvePoint> {
    let mut best = start.clone();
    let mut best_d = ideal.log_distance2(&best.chi2);
    let mut step = initial_step;
    while step >= min_step {
        let mut improved = false;
        for axis in 0..best.lambda.len() {
            for sign in [1.0, -1.0] {
                let mut lambda = best.lambda.clone();
                lambda[axis] *= (sign * step).exp();
                let Ok((params, total)) = solve_at(modeset, &lambda, &best.params, options) else { continue };
                let chi2 = modeset.chi2(&params)?;
                let d = ideal.log_distance2(&chi2);
                if d < best_d {
                    best_d = d;
                    best = SCurvePoint {
                        grid_index: best.grid_index,
                        log_coords: ideal.log_ratios(&chi2),
                        lambda,
                        chi2,
                        params,
                        total,
                    };
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best)
}
