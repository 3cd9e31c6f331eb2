//! Maximum compatibility estimation.
//!
//! Given `n` data modes with measures `χ²_i(P)`, the ideal point is the
//! vector of single-mode minima `χ²_i0`. The maximum compatibility estimate
//! (MCE) minimizes the squared distance to that point in log-χ² space,
//! `Σ [log(χ²_i(P)/χ²_i0)]²`, and the maximum compatibility weight (MCW) is
//! the weight vector whose `χ²_tot` minimizer lies closest to it. Scaling
//! any `χ²_i` by a constant shifts both the curve and the ideal point by the
//! same amount, so neither estimate depends on units, noise levels or
//! point counts.

pub mod diagnostics;
pub mod pipeline;
pub mod scurve;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof::{ModeEvaluator, CHI2_FLOOR};
use crate::optimizer::{multi_start, OptimizerOptions};

pub use diagnostics::{
    apply_feasibility, continuity_diagnostic, ContinuityReport, FeasibilityOutcome, FeasibilityRegion,
    FeasibilityVerdict, FlaggedJump,
};
pub use pipeline::{analyze, Analysis, PipelineOptions};
pub use scurve::{
    cartesian_grid, log_grid, max_curvature_index, mcw, mcw_among, normalized_grid, refine_lambda,
    regularizer_mode_guard, trace_scurve, LambdaGridSpec, McwSelection, RegularizerWindow, SCurve, SCurvePoint,
    TraceFailure, TraceOptions,
};

/// The data modes entering one inversion.
#[derive(Debug, Clone)]
pub struct ModeSet {
    modes: Vec<ModeEvaluator>,
}

impl ModeSet {
    pub fn new(modes: Vec<ModeEvaluator>) -> Result<Self> {
        if modes.len() < 2 {
            return Err(Error::Precondition(format!(
                "a mode set needs at least two modes, got {}",
                modes.len()
            )));
        }
        Ok(Self { modes })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeEvaluator] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &ModeEvaluator {
        &self.modes[i]
    }

    /// Raw χ² of every mode at `p`.
    pub fn chi2(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.modes.iter().map(|m| m.chi2(p)).collect()
    }

    /// Copy with mode `i` multiplied by `factor`.
    pub fn with_scaled_mode(&self, i: usize, factor: f64) -> Self {
        let mut modes = self.modes.clone();
        modes[i] = modes[i].scaled(factor);
        Self { modes }
    }

    pub fn region(&self) -> FeasibilityRegion {
        FeasibilityRegion {
            bounds: self.modes.iter().map(|m| m.bound).collect(),
        }
    }
}

fn check_lambda(n_modes: usize, lambda: &[f64]) -> Result<()> {
    if lambda.len() + 1 != n_modes {
        return Err(Error::DimensionMismatch {
            what: "weight vector (n_modes - 1)",
            expected: n_modes - 1,
            actual: lambda.len(),
        });
    }
    if lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::Domain("mode weights must be finite and > 0".into()));
    }
    Ok(())
}

/// `χ²_1 + Σ λ_{i-1} χ²_i` from precomputed mode values.
pub fn chi_tot_values(chi2: &[f64], lambda: &[f64]) -> Result<f64> {
    check_lambda(chi2.len(), lambda)?;
    Ok(chi2[0] + chi2[1..].iter().zip(lambda).map(|(c, l)| c * l).sum::<f64>())
}

/// Weighted total measure at `p`.
pub fn chi_tot(modeset: &ModeSet, lambda: &[f64], p: &[f64]) -> Result<f64> {
    check_lambda(modeset.len(), lambda)?;
    chi_tot_values(&modeset.chi2(p)?, lambda)
}

/// Single-mode minima and their minimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealPoint {
    /// Floored `min χ²_i`.
    pub chi2_0: Vec<f64>,
    pub minimizers: Vec<Vec<f64>>,
    /// `cross[i][j]` is `χ²_j` at the minimizer of mode `i`.
    pub cross: Vec<Vec<f64>>,
    /// Mode pairs sharing a minimizer (within [`DEGENERACY_TOLERANCE`]).
    pub degenerate_pairs: Vec<(usize, usize)>,
}

/// Relative tolerance under which a minimizer of one mode also counts as a
/// minimizer of another.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

impl IdealPoint {
    /// Builds the ideal point from per-mode minimizers.
    pub fn from_minimizers(modeset: &ModeSet, minimizers: Vec<Vec<f64>>) -> Result<Self> {
        let cross = minimizers.iter().map(|p| modeset.chi2(p)).collect::<Result<Vec<_>>>()?;
        let chi2_0 = (0..modeset.len()).map(|i| cross[i][i].max(CHI2_FLOOR)).collect();
        let mut ideal = Self {
            chi2_0,
            minimizers,
            cross,
            degenerate_pairs: Vec::new(),
        };
        ideal.update_degeneracy();
        Ok(ideal)
    }

    fn update_degeneracy(&mut self) {
        let n = self.chi2_0.len();
        let attains = |v: f64, min: f64| v.max(CHI2_FLOOR) <= min * (1.0 + DEGENERACY_TOLERANCE) + CHI2_FLOOR;
        self.degenerate_pairs = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| attains(self.cross[i][j], self.chi2_0[j]) || attains(self.cross[j][i], self.chi2_0[i]))
            .collect();
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.degenerate_pairs.is_empty()
    }

    /// `log(χ²_i/χ²_i0)` for every mode.
    pub fn log_ratios(&self, chi2: &[f64]) -> Vec<f64> {
        chi2.iter()
            .zip(&self.chi2_0)
            .map(|(c, c0)| (c.max(CHI2_FLOOR) / c0).ln())
            .collect()
    }

    /// Squared log-distance to the ideal point.
    pub fn log_distance2(&self, chi2: &[f64]) -> f64 {
        self.log_ratios(chi2).iter().map(|r| r * r).sum()
    }

    /// First-order counterpart `Σ (χ²_i/χ²_i0 - 1)²`.
    pub fn ratio_distance2(&self, chi2: &[f64]) -> f64 {
        chi2.iter()
            .zip(&self.chi2_0)
            .map(|(c, c0)| (c.max(CHI2_FLOOR) / c0 - 1.0).powi(2))
            .sum()
    }

    /// Lowers any `χ²_i0` that a traced point beats, replacing the stored
    /// minimizer. Returns whether anything changed.
    pub fn absorb(&mut self, modeset: &ModeSet, curve: &SCurve) -> Result<bool> {
        let mut changed = false;
        for point in &curve.points {
            for i in 0..self.chi2_0.len() {
                let c = point.chi2[i].max(CHI2_FLOOR);
                if c < self.chi2_0[i] {
                    self.chi2_0[i] = c;
                    self.minimizers[i] = point.params.clone();
                    self.cross[i] = modeset.chi2(&point.params)?;
                    changed = true;
                }
            }
        }
        if changed {
            self.update_degeneracy();
        }
        Ok(changed)
    }
}

/// Best local minimum of every mode over the given starts.
pub fn single_mode_minima(modeset: &ModeSet, options: &OptimizerOptions, starts: &[Vec<f64>]) -> Result<IdealPoint> {
    if starts.is_empty() {
        return Err(Error::Precondition("single-mode minimization needs at least one start".into()));
    }
    let minimizers = modeset
        .modes()
        .iter()
        .map(|mode| {
            let objective = |p: &[f64]| mode.chi2(p).unwrap_or(f64::INFINITY);
            multi_start(&objective, starts, options)
                .map(|r| r.x)
                .map_err(|e| Error::Optimizer {
                    context: format!("mode `{}`", mode.name),
                    reason: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    IdealPoint::from_minimizers(modeset, minimizers)
}

/// A point estimate with its objective and mode values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MceEstimate {
    pub params: Vec<f64>,
    pub objective: f64,
    pub chi2: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MceObjective {
    Log,
    FirstOrder,
}

fn estimate(
    modeset: &ModeSet,
    ideal: &IdealPoint,
    options: &OptimizerOptions,
    starts: &[Vec<f64>],
    kind: MceObjective,
) -> Result<MceEstimate> {
    let objective = |p: &[f64]| match modeset.chi2(p) {
        Ok(chi2) => match kind {
            MceObjective::Log => ideal.log_distance2(&chi2),
            MceObjective::FirstOrder => ideal.ratio_distance2(&chi2),
        },
        Err(_) => f64::INFINITY,
    };
    let best = multi_start(&objective, starts, options).map_err(|e| Error::Optimizer {
        context: format!("{kind:?} compatibility estimate"),
        reason: e.to_string(),
    })?;
    Ok(MceEstimate {
        chi2: modeset.chi2(&best.x)?,
        params: best.x,
        objective: best.value,
        converged: best.converged,
    })
}

/// MCE: `argmin Σ [log(χ²_i(P)/χ²_i0)]²`.
pub fn mce_direct(
    modeset: &ModeSet,
    ideal: &IdealPoint,
    options: &OptimizerOptions,
    starts: &[Vec<f64>],
) -> Result<MceEstimate> {
    estimate(modeset, ideal, options, starts, MceObjective::Log)
}

/// First-order variant: `argmin Σ (χ²_i(P)/χ²_i0 - 1)²`.
pub fn mce_first_order(
    modeset: &ModeSet,
    ideal: &IdealPoint,
    options: &OptimizerOptions,
    starts: &[Vec<f64>],
) -> Result<MceEstimate> {
    estimate(modeset, ideal, options, starts, MceObjective::FirstOrder)
}

/// Heuristic feasibility bound `χ²_i0 · (1 + k·sqrt(2/N_i))`.
pub fn epsilon_estimate(chi2_0: f64, n_points: usize, k: f64) -> f64 {
    chi2_0 * (1.0 + k * (2.0 / n_points.max(1) as f64).sqrt())
}

/// Euclidean distance between two χ² vectors in log space.
pub fn log_space_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.max(CHI2_FLOOR).ln() - y.max(CHI2_FLOOR).ln()).powi(2))
        .sum::<f64>()
        .sqrt()
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn chi_tot_examples() {
        assert_eq!(chi_tot_values(&[3.0, 4.0], &[1.0]).unwrap(), 7.0);
        assert_eq!(chi_tot_values(&[1.0, 1.0, 1.0], &[2.0, 0.5]).unwrap(), 3.5);
        assert!((chi_tot_values(&[3.0, 4.0], &[1e-14]).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(chi_tot_values(&[3.0, 4.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(chi_tot_values(&[3.0, 4.0], &[0.0]).is_err());
        let set = quadratic_pair(0.0, 1.0, 1.0);
        assert_eq!(chi_tot(&set, &[1.0], &[0.5]).unwrap(), 2.5);
    }

    #[test]
    fn mode_set_needs_two_modes() {
        let one = vec![ModeEvaluator::new("a", 1, |_p: &[f64]| Ok(1.0))];
        assert!(ModeSet::new(one).is_err());
    }

    #[test]
    fn quadratic_ideal_point() {
        let set = quadratic_pair(0.0, 1.0, 1.0);
        let ideal = single_mode_minima(&set, &tight(), &[vec![3.0]]).unwrap();
        assert!((ideal.chi2_0[0] - 1.0).abs() < 1e-12 && (ideal.chi2_0[1] - 1.0).abs() < 1e-12);
        assert!(ideal.minimizers[0][0].abs() < 1e-6 && (ideal.minimizers[1][0] - 1.0).abs() < 1e-6);
        assert!(ideal.is_nondegenerate());
    }

    #[test]
    fn shared_minimizer_is_flagged() {
        let set = quadratic_pair(0.7, 0.7, 3.0);
        let ideal = single_mode_minima(&set, &tight(), &[vec![0.0]]).unwrap();
        assert_eq!(ideal.degenerate_pairs, vec![(0, 1)]);
        let est = mce_direct(&set, &ideal, &tight(), &[vec![-2.0]]).unwrap();
        // both objectives are quartic at a shared minimizer
        assert!((est.params[0] - 0.7).abs() < 1e-3);
        assert!(est.objective < 1e-12);
        let fo = mce_first_order(&set, &ideal, &tight(), &[vec![-2.0]]).unwrap();
        assert!((fo.params[0] - 0.7).abs() < 1e-3 && fo.objective < 1e-12);
    }

    #[test]
    fn symmetric_pair_meets_in_the_middle() {
        let set = quadratic_pair(0.0, 1.0, 1.0);
        let ideal = single_mode_minima(&set, &tight(), &[vec![0.2]]).unwrap();
        let est = mce_direct(&set, &ideal, &tight(), &[vec![0.9]]).unwrap();
        assert!((est.params[0] - 0.5).abs() < 1e-6);
        let fo = mce_first_order(&set, &ideal, &tight(), &[vec![0.1]]).unwrap();
        assert!((fo.params[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn asymmetric_pair_matches_grid_search() {
        let set = quadratic_pair(0.0, 1.0, 4.0);
        let ideal = single_mode_minima(&set, &tight(), &[vec![0.5]]).unwrap();
        let est = mce_direct(&set, &ideal, &tight(), &[vec![0.5]]).unwrap();
        // brute-force oracle on a 1e-4 grid over [0, 1]
        let obj = |p: f64| (p * p + 1.0).ln().powi(2) + (4.0 * (p - 1.0).powi(2) + 1.0).ln().powi(2);
        let best = (0..=10_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        assert!((est.params[0] - best).abs() <= 1e-4, "{} vs {best}", est.params[0]);
    }

    #[test]
    fn epsilon_heuristic() {
        assert!((epsilon_estimate(10.0, 50, 3.0) - 10.0 * (1.0 + 3.0 * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn scaled_mode_leaves_estimate_unchanged() {
        let set = quadratic_pair(0.0, 1.0, 4.0);
        let scaled = set.with_scaled_mode(1, 100.0);
        let a = single_mode_minima(&set, &tight(), &[vec![0.5]]).unwrap();
        let b = single_mode_minima(&scaled, &tight(), &[vec![0.5]]).unwrap();
        let pa = mce_direct(&set, &a, &tight(), &[vec![0.5]]).unwrap();
        let pb = mce_direct(&scaled, &b, &tight(), &[vec![0.5]]).unwrap();
        assert!((pa.params[0] - pb.params[0]).abs() < 1e-6);
    }
}
