//! Local minimization of scalar objectives.
//!
//! A trust-region quasi-Newton method: BFGS curvature, dogleg steps and
//! central finite-difference gradients. Parameters are internally divided by
//! per-coordinate characteristic scales so that one set of tolerances and one
//! difference step fit heterogeneous parameter vectors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    /// Stop when `‖∇f‖∞ ≤ gradient_tolerance · max(1, |f|)` (scaled coordinates).
    pub gradient_tolerance: f64,
    /// Stop when an accepted step, or the trust radius, falls below
    /// `step_tolerance · (1 + ‖u‖)` in scaled coordinates.
    pub step_tolerance: f64,
    /// Stop after three consecutive accepted steps whose relative decrease is
    /// below this value. Zero disables the test.
    pub value_tolerance: f64,
    /// Central-difference step in scaled coordinates.
    pub fd_step: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Seed for multi-start jitter.
    pub seed: u64,
    /// Characteristic scale per parameter; all ones when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-12,
            value_tolerance: 0.0,
            fd_step: 1e-5,
            initial_radius: 1.0,
            max_radius: 1e3,
            seed: 0,
            scales: None,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("fd_step", self.fd_step),
            ("initial_radius", self.initial_radius),
            ("max_radius", self.max_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("optimizer.{name} must be > 0")));
            }
        }
        if self.value_tolerance < 0.0 {
            return Err(Error::Config("optimizer.value_tolerance must be >= 0".into()));
        }
        if let Some(s) = &self.scales {
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("optimizer scales must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Self {
        self.scales = Some(scales);
        self
    }

    fn scale_vector(&self, n: usize) -> Result<Vec<f64>> {
        match &self.scales {
            None => Ok(vec![1.0; n]),
            Some(s) if s.len() == n => Ok(s.clone()),
            Some(s) => Err(Error::DimensionMismatch {
                what: "optimizer scales",
                expected: n,
                actual: s.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    ValueTolerance,
    MaxIterations,
    NonFiniteStart,
    NonFiniteGradient,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            Termination::GradientTolerance | Termination::StepTolerance | Termination::ValueTolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x: Vec<f64>,
    /// Objective at `x`, as evaluated when the run stopped.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: Termination,
}

impl OptResult {
    /// True when the run ended at a finite point, converged or not.
    pub fn usable(&self) -> bool {
        self.value.is_finite() && !matches!(self.reason, Termination::NonFiniteStart)
    }
}

/// Central-difference gradient with a uniform step `h`.
pub fn fd_gradient<F>(objective: &F, p: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let steps = vec![h; p.len()];
    central_gradient(objective, p, &steps)
}

fn central_gradient<F>(objective: &F, p: &[f64], steps: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..p.len())
        .into_par_iter()
        .map(|i| {
            let mut x = p.to_vec();
            x[i] = p[i] + steps[i];
            let fp = objective(&x);
            x[i] = p[i] - steps[i];
            let fm = objective(&x);
            let g = (fp - fm) / (2.0 * steps[i]);
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::NonFiniteGradient { coordinate: i })
            }
        })
        .collect()
}

/// One-sided forward-difference gradient, used to cross-check [`fd_gradient`].
pub fn fd_gradient_forward<F>(objective: &F, p: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let f0 = objective(p);
    (0..p.len())
        .map(|i| {
            let mut x = p.to_vec();
            x[i] += h;
            let g = (objective(&x) - f0) / h;
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::NonFiniteGradient { coordinate: i })
            }
        })
        .collect()
}

/// Minimizes `objective` from `start`.
pub fn minimize<F>(objective: &F, start: &[f64], options: &OptimizerOptions) -> Result<OptResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    options.validate()?;
    let n = start.len();
    let scale = options.scale_vector(n)?;
    let to_x = |u: &DVector<f64>| -> Vec<f64> { u.iter().zip(&scale).map(|(u, s)| u * s).collect() };
    let scaled = |u: &[f64]| -> f64 {
        let x: Vec<f64> = u.iter().zip(&scale).map(|(u, s)| u * s).collect();
        objective(&x)
    };

    let mut u = DVector::from_iterator(n, start.iter().zip(&scale).map(|(x, s)| x / s));
    let mut f = scaled(u.as_slice());
    let mut evaluations = 1;
    let finish = |u: &DVector<f64>, f: f64, iterations: usize, evaluations: usize, reason: Termination| OptResult {
        x: to_x(u),
        value: f,
        converged: reason.is_converged(),
        iterations,
        evaluations,
        reason,
    };
    if !f.is_finite() {
        return Ok(finish(&u, f, 0, evaluations, Termination::NonFiniteStart));
    }
    if n == 0 {
        return Ok(finish(&u, f, 0, evaluations, Termination::GradientTolerance));
    }

    let steps = vec![options.fd_step; n];
    let gradient = |u: &DVector<f64>| central_gradient(&scaled, u.as_slice(), &steps).map(DVector::from_vec);
    let mut g = match gradient(&u) {
        Ok(g) => g,
        Err(_) => return Ok(finish(&u, f, 0, evaluations + 2 * n, Termination::NonFiniteGradient)),
    };
    evaluations += 2 * n;

    let mut hessian = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut radius = options.initial_radius;
    let mut slow_steps = 0;

    for iteration in 0..options.max_iterations {
        if g.amax() <= options.gradient_tolerance * f.abs().max(1.0) {
            return Ok(finish(&u, f, iteration, evaluations, Termination::GradientTolerance));
        }
        let step = dogleg(&hessian, &g, radius);
        let step_norm = step.norm();
        let predicted = -(g.dot(&step) + 0.5 * step.dot(&(&hessian * &step)));
        let trial = &u + &step;
        let f_trial = scaled(trial.as_slice());
        evaluations += 1;

        let ratio = if f_trial.is_finite() && predicted > 0.0 {
            (f - f_trial) / predicted
        } else {
            f64::NEG_INFINITY
        };
        if ratio < 0.25 {
            radius = 0.25 * step_norm;
        } else if ratio > 0.75 && step_norm >= 0.99 * radius {
            radius = (2.0 * radius).min(options.max_radius);
        }

        let tiny = options.step_tolerance * (1.0 + u.norm());
        if ratio > 1e-4 && f_trial < f {
            let g_trial = match gradient(&trial) {
                Ok(g) => g,
                Err(_) => {
                    return Ok(finish(&trial, f_trial, iteration + 1, evaluations + 2 * n, Termination::NonFiniteGradient))
                }
            };
            evaluations += 2 * n;
            let y = &g_trial - &g;
            bfgs_update(&mut hessian, &step, &y, &mut first_update);
            let decrease = f - f_trial;
            u = trial;
            g = g_trial;
            let previous = f;
            f = f_trial;
            if step_norm <= tiny {
                return Ok(finish(&u, f, iteration + 1, evaluations, Termination::StepTolerance));
            }
            if options.value_tolerance > 0.0 && decrease <= options.value_tolerance * previous.abs().max(1e-300) {
                slow_steps += 1;
                if slow_steps >= 3 {
                    return Ok(finish(&u, f, iteration + 1, evaluations, Termination::ValueTolerance));
                }
            } else {
                slow_steps = 0;
            }
        } else if radius <= tiny {
            return Ok(finish(&u, f, iteration + 1, evaluations, Termination::StepTolerance));
        }
    }
    Ok(finish(&u, f, options.max_iterations, evaluations, Termination::MaxIterations))
}

fn bfgs_update(hessian: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, first: &mut bool) {
    let sy = s.dot(y);
    if !(sy > 1e-12 * s.norm() * y.norm()) {
        return;
    }
    if *first {
        let n = hessian.nrows();
        *hessian = DMatrix::identity(n, n) * (y.dot(y) / sy);
        *first = false;
    }
    let bs = &*hessian * s;
    let sbs = s.dot(&bs);
    if sbs <= 0.0 {
        return;
    }
    *hessian += y * y.transpose() / sy - &bs * bs.transpose() / sbs;
}

/// Dogleg step for the quadratic model `gᵀp + ½ pᵀBp` within `radius`.
fn dogleg(hessian: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let newton = hessian.clone().cholesky().map(|c| -c.solve(g));
    if let Some(pb) = &newton {
        if pb.norm() <= radius {
            return pb.clone();
        }
    }
    let gbg = g.dot(&(hessian * g));
    let gg = g.dot(g);
    let g_norm = gg.sqrt();
    if gbg <= 0.0 {
        return -g * (radius / g_norm);
    }
    let cauchy = -g * (gg / gbg);
    let cauchy_norm = cauchy.norm();
    let pb = match newton {
        Some(pb) => pb,
        None => return -g * ((gg / gbg).min(radius / g_norm)),
    };
    if cauchy_norm >= radius {
        return cauchy * (radius / cauchy_norm);
    }
    // intersect the segment cauchy → newton with the trust-region sphere
    let d = &pb - &cauchy;
    let a = d.dot(&d);
    let b = 2.0 * cauchy.dot(&d);
    let c = cauchy_norm * cauchy_norm - radius * radius;
    let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    cauchy + d * tau.clamp(0.0, 1.0)
}

/// Best result over several starts. Ties keep the earliest start, so the
/// outcome is deterministic in the start order.
pub fn multi_start<F>(objective: &F, starts: &[Vec<f64>], options: &OptimizerOptions) -> Result<OptResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if starts.is_empty() {
        return Err(Error::Precondition("multi_start needs at least one start".into()));
    }
    let mut best: Option<OptResult> = None;
    let mut failures = Vec::new();
    for (k, start) in starts.iter().enumerate() {
        let result = minimize(objective, start, options)?;
        if !result.usable() {
            failures.push(format!("start {k}: {:?}", result.reason));
            continue;
        }
        if best.as_ref().is_none_or(|b| result.value < b.value) {
            best = Some(result);
        }
    }
    best.ok_or_else(|| Error::Optimizer {
        context: "multi-start".into(),
        reason: format!("all {} starts failed ({})", starts.len(), failures.join("; ")),
    })
}

/// `count` perturbed copies of `base`, with uniform jitter of half-width
/// `spread · scale_i` per coordinate.
pub fn jittered_starts(base: &[f64], count: usize, spread: f64, options: &OptimizerOptions) -> Result<Vec<Vec<f64>>> {
    let scale = options.scale_vector(base.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    Ok((0..count)
        .map(|_| {
            base.iter()
                .zip(&scale)
                .map(|(x, s)| x + spread * s * rng.gen_range(-1.0..=1.0))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_parabola() {
        let f = |p: &[f64]| (p[0] - 3.0).powi(2);
        let r = minimize(&f, &[0.0], &OptimizerOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-8, "{:?}", r);
        assert_eq!(r.value, f(&r.x));
    }

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| 100.0 * (p[1] - p[0] * p[0]).powi(2) + (1.0 - p[0]).powi(2);
        let r = minimize(&f, &[-1.2, 1.0], &OptimizerOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn nan_region_fails_cleanly() {
        let f = |p: &[f64]| if p[0] > 1.0 { f64::NAN } else { (p[0] - 3.0).powi(2) };
        let r = minimize(&f, &[0.0], &OptimizerOptions::default()).unwrap();
        assert!(!r.converged);
        assert!(r.value.is_finite());
        let g = |_: &[f64]| f64::NAN;
        let r = minimize(&g, &[0.0, 1.0], &OptimizerOptions::default()).unwrap();
        assert_eq!(r.reason, Termination::NonFiniteStart);
        assert!(!r.converged);
    }

    #[test]
    fn gradients() {
        let q = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>();
        let g = fd_gradient(&q, &[1.0, 2.0], 1e-4).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-10 && (g[1] - 4.0).abs() < 1e-10);
        let lin = |p: &[f64]| 3.0 * p[0] - 2.0 * p[1];
        for h in [1e-2, 1e-4] {
            let g = fd_gradient(&lin, &[0.5, -0.25], h).unwrap();
            assert!((g[0] - 3.0).abs() < 1e-10 && (g[1] + 2.0).abs() < 1e-10);
        }
        let bad = |p: &[f64]| if p[1] > 0.0 { f64::INFINITY } else { 0.0 };
        assert!(matches!(fd_gradient(&bad, &[0.0, 0.0], 1e-3), Err(Error::NonFiniteGradient { coordinate: 1 })));
    }

    #[test]
    fn double_well_multi_start() {
        let f = |p: &[f64]| p[0].powi(4) - p[0] * p[0];
        let opts = OptimizerOptions::default();
        let r = multi_start(&f, &[vec![-1.0], vec![1.0]], &opts).unwrap();
        assert!((r.value + 0.25).abs() < 1e-12);
        assert!((r.x[0].abs() - 0.5f64.sqrt()).abs() < 1e-6);

        let single = minimize(&f, &[1.0], &opts).unwrap();
        assert_eq!(multi_start(&f, &[vec![1.0]], &opts).unwrap(), single);
        assert_eq!(multi_start(&f, &[vec![1.0], vec![1.0]], &opts).unwrap(), single);
    }

    #[test]
    fn all_failed_starts_reported() {
        let f = |_: &[f64]| f64::NAN;
        assert!(matches!(multi_start(&f, &[vec![0.0], vec![1.0]], &OptimizerOptions::default()), Err(Error::Optimizer { .. })));
    }

    #[test]
    fn scaling_handles_disparate_magnitudes() {
        let f = |p: &[f64]| ((p[0] - 2e-3) / 1e-3).powi(2) + ((p[1] - 5e3) / 1e3).powi(2);
        let opts = OptimizerOptions::default().with_scales(vec![1e-3, 1e3]);
        let r = minimize(&f, &[0.0, 0.0], &opts).unwrap();
        assert!((r.x[0] - 2e-3).abs() < 1e-10 && (r.x[1] - 5e3).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn deterministic_runs_and_jitter() {
        let f = |p: &[f64]| (p[0] - 1.0).powi(2) + 10.0 * (p[1] + p[0]).powi(2);
        let opts = OptimizerOptions { seed: 9, ..Default::default() };
        assert_eq!(minimize(&f, &[3.0, 1.0], &opts).unwrap(), minimize(&f, &[3.0, 1.0], &opts).unwrap());
        let a = jittered_starts(&[0.0, 0.0], 3, 0.5, &opts).unwrap();
        assert_eq!(a, jittered_starts(&[0.0, 0.0], 3, 0.5, &opts).unwrap());
        assert!(a.iter().flatten().all(|v| v.abs() <= 0.5));
    }
}
