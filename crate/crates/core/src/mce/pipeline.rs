//! The full estimation sequence for one mode set.

use serde::{Deserialize, Serialize};

use super::{
    apply_feasibility, continuity_diagnostic, log_space_distance, max_curvature_index, mce_direct,
    mce_first_order, mcw, mcw_among, refine_lambda, regularizer_mode_guard, single_mode_minima, trace_scurve,
    ContinuityReport, FeasibilityOutcome, FeasibilityVerdict, IdealPoint, LambdaGridSpec, McwSelection,
    MceEstimate, ModeSet, SCurve, SCurvePoint, TraceOptions,
};
use crate::error::Result;
use crate::optimizer::OptimizerOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub grid: LambdaGridSpec,
    pub trace: TraceOptions,
    pub optimizer: OptimizerOptions,
    /// Steps above this multiple of the median step are flagged.
    pub continuity_factor: f64,
    /// Regularizer floor as a fraction of its median along the curve.
    pub regularizer_floor: f64,
    /// Refine the weight vector by coordinate descent when there are more
    /// than two modes.
    pub refine: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            grid: LambdaGridSpec::default(),
            trace: TraceOptions::default(),
            optimizer: OptimizerOptions::default(),
            continuity_factor: 10.0,
            regularizer_floor: 1e-3,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Analysis {
    /// Ideal point after absorbing any better mode minimum found on the curve.
    pub ideal: IdealPoint,
    pub curve: SCurve,
    pub selection: McwSelection,
    /// Refined weight point for more than two modes.
    pub refined: Option<SCurvePoint>,
    /// Regularizer floor when a mode is a regularizer.
    pub regularizer_floor: Option<f64>,
    pub mce: MceEstimate,
    pub first_order: MceEstimate,
    /// Log-space distance between the two estimates' mode values.
    pub first_order_distance: f64,
    pub feasibility: FeasibilityOutcome,
    pub continuity: ContinuityReport,
    /// Max-curvature point of a two-mode curve, for comparison.
    pub curvature_index: Option<usize>,
}

impl Analysis {
    /// The weight point closest to the ideal point.
    pub fn mcw_point(&self) -> &SCurvePoint {
        self.refined.as_ref().unwrap_or(&self.curve.points[self.selection.index])
    }

    /// Final parameters: the MCE, or the adopted curve point if it was
    /// clipped to the feasibility region.
    pub fn final_params(&self) -> &[f64] {
        match (self.feasibility.verdict, self.feasibility.selected_index) {
            (FeasibilityVerdict::Clipped, Some(k)) => &self.curve.points[k].params,
            _ => &self.mce.params,
        }
    }

    pub fn final_chi2(&self) -> &[f64] {
        match (self.feasibility.verdict, self.feasibility.selected_index) {
            (FeasibilityVerdict::Clipped, Some(k)) => &self.curve.points[k].chi2,
            _ => &self.mce.chi2,
        }
    }
}

/// Ideal point, S-curve, MCW, both MCE variants and diagnostics. `starts`
/// seed the single-mode minimizations.
pub fn analyze(modeset: &ModeSet, starts: &[Vec<f64>], options: &PipelineOptions) -> Result<Analysis> {
    let opt = &options.optimizer;
    let mut ideal = single_mode_minima(modeset, opt, starts)?;
    let grid = options.grid.build(modeset.len(), &ideal)?;
    let mut curve = trace_scurve(modeset, &grid, &ideal, opt, &options.trace)?;
    if ideal.absorb(modeset, &curve)? {
        curve.relative_to(&ideal);
    }

    let regularizer = modeset.modes().iter().position(|m| m.regularizer);
    let (selection, target, floor) = match regularizer {
        Some(r) => {
            let window = regularizer_mode_guard(modeset, &curve, &ideal, r, options.regularizer_floor)?;
            let sel = mcw_among(&curve, &window.ideal, &window.indices)?;
            (sel, window.ideal, Some(window.floor))
        }
        None => (mcw(&curve, &ideal)?, ideal.clone(), None),
    };
    let refined = if modeset.len() > 2 && options.refine {
        Some(refine_lambda(modeset, &target, &curve.points[selection.index], opt, 0.5, 1e-2)?)
    } else {
        None
    };
    let start = refined
        .as_ref()
        .unwrap_or(&curve.points[selection.index])
        .params
        .clone();

    let mce = mce_direct(modeset, &target, opt, std::slice::from_ref(&start))?;
    let first_order = mce_first_order(modeset, &target, opt, std::slice::from_ref(&start))?;
    let first_order_distance = log_space_distance(&mce.chi2, &first_order.chi2);
    let feasibility = apply_feasibility(&curve, &target, &modeset.region(), selection.index, &mce.chi2);
    let continuity = continuity_diagnostic(
        &curve,
        opt.scales.as_deref(),
        options.continuity_factor,
        Some(selection.index),
    );
    let curvature_index = max_curvature_index(&curve);
    Ok(Analysis {
        ideal: target,
        curve,
        selection,
        refined,
        regularizer_floor: floor,
        mce,
        first_order,
        first_order_distance,
        feasibility,
        continuity,
        curvature_index,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::gof::ModeEvaluator;

    fn options() -> PipelineOptions {
        PipelineOptions {
            optimizer: tight(),
            ..Default::default()
        }
    }

    #[test]
    fn quadratic_pipeline() {
        let set = quadratic_pair(0.0, 1.0, 1.0);
        let a = analyze(&set, &[vec![0.3]], &options()).unwrap();
        assert!((a.mce.params[0] - 0.5).abs() < 1e-6);
        assert!((a.selection.lambda[0] - 1.0).abs() < 1e-9);
        assert!(a.first_order_distance < 1e-6);
        assert_eq!(a.feasibility.verdict, FeasibilityVerdict::Feasible);
        assert!(a.continuity.is_continuous());
        assert_eq!(a.final_params(), a.mce.params.as_slice());
    }

    #[test]
    fn bounded_pipeline_clips() {
        let set = ModeSet::new(vec![
            ModeEvaluator::new("first", 10, |p: &[f64]| Ok(p[0].powi(2) + 1.0)).with_bound(1.1),
            ModeEvaluator::new("second", 10, |p: &[f64]| Ok((p[0] - 1.0).powi(2) + 1.0)),
        ])
        .unwrap();
        let a = analyze(&set, &[vec![0.3]], &options()).unwrap();
        assert_eq!(a.feasibility.verdict, FeasibilityVerdict::Clipped);
        assert!(a.final_chi2()[0] <= 1.1);
    }
}
