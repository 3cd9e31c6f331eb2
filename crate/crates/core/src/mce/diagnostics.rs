//! Feasibility clipping and continuity checks on a traced S-curve.

use serde::{Deserialize, Serialize};

use super::{IdealPoint, SCurve};
use crate::gof::CHI2_FLOOR;

/// Upper bounds `ε_i` on each mode; `None` leaves a mode unconstrained.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityRegion {
    pub bounds: Vec<Option<f64>>,
}

impl FeasibilityRegion {
    pub fn is_unbounded(&self) -> bool {
        self.bounds.iter().all(Option::is_none)
    }

    pub fn contains(&self, chi2: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(chi2)
            .all(|(b, c)| b.is_none_or(|e| *c <= e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityVerdict {
    /// The estimate already satisfies every bound.
    Feasible,
    /// The estimate violated a bound and was replaced by the nearest feasible
    /// curve point.
    Clipped,
    /// No traced point satisfies all bounds.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityOutcome {
    pub verdict: FeasibilityVerdict,
    /// Curve point adopted after clipping.
    pub selected_index: Option<usize>,
    /// Mode whose bound is closest to active at the adopted point.
    pub active_mode: Option<usize>,
    pub message: Option<String>,
}

/// Curve length from the first point, in log-χ² coordinates.
fn arc_lengths(curve: &SCurve) -> Vec<f64> {
    let mut s = vec![0.0; curve.len()];
    for k in 1..curve.len() {
        let d: f64 = curve.points[k]
            .log_coords
            .iter()
            .zip(&curve.points[k - 1].log_coords)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        s[k] = s[k - 1] + d.sqrt();
    }
    s
}

/// Checks the estimate with mode values `estimate_chi2` against `region`.
/// When a bound is violated, the feasible curve point nearest in arc length
/// to the MCW point `mcw_index` is adopted instead.
pub fn apply_feasibility(
    curve: &SCurve,
    _ideal: &IdealPoint,
    region: &FeasibilityRegion,
    mcw_index: usize,
    estimate_chi2: &[f64],
) -> FeasibilityOutcome {
    if region.is_unbounded() || region.contains(estimate_chi2) {
        return FeasibilityOutcome {
            verdict: FeasibilityVerdict::Feasible,
            selected_index: None,
            active_mode: None,
            message: None,
        };
    }
    let s = arc_lengths(curve);
    let s0 = s.get(mcw_index).copied().unwrap_or(0.0);
    let chosen = curve
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| region.contains(&p.chi2))
        .min_by(|a, b| (s[a.0] - s0).abs().total_cmp(&(s[b.0] - s0).abs()))
        .map(|(k, _)| k);
    match chosen {
        None => FeasibilityOutcome {
            verdict: FeasibilityVerdict::Infeasible,
            selected_index: None,
            active_mode: None,
            message: Some("the data modes do not allow a compatible joint model: no traced point satisfies every bound".into()),
        },
        Some(k) => {
            let chi2 = &curve.points[k].chi2;
            let active = region
                .bounds
                .iter()
                .enumerate()
                .filter_map(|(i, b)| b.map(|e| (i, (chi2[i].max(CHI2_FLOOR) / e).ln().abs())))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i);
            FeasibilityOutcome {
                verdict: FeasibilityVerdict::Clipped,
                selected_index: Some(k),
                active_mode: active,
                message: None,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedJump {
    /// The jump lies between traced points `index` and `index + 1`.
    pub index: usize,
    pub lambda_from: Vec<f64>,
    pub lambda_to: Vec<f64>,
    pub step: f64,
    /// Within two points of the selected weight.
    pub near_selection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// Scaled parameter distance between consecutive points.
    pub steps: Vec<f64>,
    pub median_step: f64,
    pub threshold: f64,
    pub flagged: Vec<FlaggedJump>,
}

impl ContinuityReport {
    pub fn is_continuous(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Flags consecutive curve points whose parameter distance exceeds `factor`
/// times the median step. Distances use `p_j / scale_j` when scales are
/// given.
pub fn continuity_diagnostic(
    curve: &SCurve,
    scales: Option<&[f64]>,
    factor: f64,
    selected: Option<usize>,
) -> ContinuityReport {
    let steps: Vec<f64> = curve
        .points
        .windows(2)
        .map(|w| {
            w[0].params
                .iter()
                .zip(&w[1].params)
                .enumerate()
                .map(|(j, (a, b))| {
                    let s = scales.and_then(|s| s.get(j)).copied().unwrap_or(1.0);
                    ((a - b) / s).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let median_step = if steps.is_empty() {
        0.0
    } else {
        let mut sorted = steps.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    };
    let threshold = factor * median_step;
    let flagged = steps
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold && s > 0.0)
        .map(|(k, &step)| FlaggedJump {
            index: k,
            lambda_from: curve.points[k].lambda.clone(),
            lambda_to: curve.points[k + 1].lambda.clone(),
            step,
            near_selection: selected.is_some_and(|s| k + 2 >= s && k <= s + 2),
        })
        .collect();
    ContinuityReport {
        steps,
        median_step,
        threshold,
        flagged,
    }
}
