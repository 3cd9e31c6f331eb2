//! Starlike profile radii from projected facet edges.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;

use super::visibility::VisibilitySet;
use super::ProfileGeometry;
use crate::error::{Error, Result};
use crate::shape::TriMesh;

/// Orthographic projection onto the image plane basis.
pub fn project_point(vertex: &nalgebra::Vector3<f64>, geom: &ProfileGeometry) -> Vector2<f64> {
    Vector2::new(vertex.dot(&geom.e1), vertex.dot(&geom.e2))
}

/// Mesh edges bordered by exactly one flagged facet, as `(min, max)` pairs
/// in ascending order.
pub fn boundary_edges(mesh: &TriMesh, vis: &VisibilitySet) -> Vec<(usize, usize)> {
    let table = &mesh.edges;
    table
        .edges
        .iter()
        .zip(&table.facets)
        .filter(|(_, facets)| facets.iter().filter(|&&f| vis.facet_flags[f]).count() == 1)
        .map(|(e, _)| *e)
        .collect()
}

/// Every distinct edge of a flagged facet, in ascending order.
pub fn flagged_edges(mesh: &TriMesh, vis: &VisibilitySet) -> Vec<(usize, usize)> {
    let table = &mesh.edges;
    let mut marked = vec![false; table.edges.len()];
    for fi in vis.flagged() {
        for &e in &table.facet_edges[fi] {
            marked[e] = true;
        }
    }
    table
        .edges
        .iter()
        .zip(marked)
        .filter(|(_, m)| *m)
        .map(|(e, _)| *e)
        .collect()
}

/// Distance from the ray origin to the crossing of the ray at direction
/// `dir` with segment `p → q` (both relative to the origin).
fn ray_segment(dir: &Vector2<f64>, p: &Vector2<f64>, q: &Vector2<f64>) -> Option<f64> {
    const SLACK: f64 = 1e-12;
    let e = q - p;
    let denom = dir.perp(&e);
    if denom.abs() <= 1e-14 * e.norm() {
        return None;
    }
    let s = -dir.perp(p) / denom;
    if !(-SLACK..=1.0 + SLACK).contains(&s) {
        return None;
    }
    let t = dir.dot(&(p + e * s));
    (t >= 0.0).then_some(t)
}

/// Largest distance from the offset to a projected flagged-facet edge along
/// direction `alpha`, measured from the image-plane `e1` axis toward `e2`.
pub fn profile_max_radius(mesh: &TriMesh, vis: &VisibilitySet, geom: &ProfileGeometry, alpha: f64) -> Result<f64> {
    let dir = Vector2::new(alpha.cos(), alpha.sin());
    flagged_edges(mesh, vis)
        .into_iter()
        .filter_map(|(a, b)| {
            let p = project_point(&mesh.vertices[a], geom) - geom.offset;
            let q = project_point(&mesh.vertices[b], geom) - geom.offset;
            ray_segment(&dir, &p, &q)
        })
        .reduce(f64::max)
        .ok_or(Error::NoIntersection {
            alpha,
            image: None,
            angle_index: None,
        })
}

/// One profile sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub alpha: f64,
    pub r_max: f64,
    /// Crossings of the ray with the projected boundary circuit; more than
    /// two marks a profile that is not starlike about the offset.
    pub crossings: usize,
}

/// Radii at all `geom.angles` in one sweep over the edges. Each edge only
/// visits the angles inside its angular wedge, which gives the same maxima
/// as [`profile_max_radius`] at a fraction of the cost.
pub fn profile_radii(mesh: &TriMesh, vis: &VisibilitySet, geom: &ProfileGeometry) -> Result<Vec<ProfileSample>> {
    let angles = &geom.angles;
    let dirs: Vec<Vector2<f64>> = angles.iter().map(|a| Vector2::new(a.cos(), a.sin())).collect();
    let mut order: Vec<(f64, usize)> = angles.iter().enumerate().map(|(j, a)| (a.rem_euclid(TAU), j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let projected: Vec<Vector2<f64>> = mesh
        .vertices
        .iter()
        .map(|v| project_point(v, geom) - geom.offset)
        .collect();

    let mut best = vec![f64::NEG_INFINITY; angles.len()];
    for (a, b) in flagged_edges(mesh, vis) {
        let (p, q) = (projected[a], projected[b]);
        for_each_angle_in_wedge(&order, &p, &q, |j| {
            if let Some(t) = ray_segment(&dirs[j], &p, &q) {
                best[j] = best[j].max(t);
            }
        });
    }

    let mut crossings = vec![0usize; angles.len()];
    for (a, b) in boundary_edges(mesh, vis) {
        let (p, q) = (projected[a], projected[b]);
        for_each_angle_in_wedge(&order, &p, &q, |j| {
            if half_open_crossing(&dirs[j], &p, &q) {
                crossings[j] += 1;
            }
        });
    }

    angles
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            if best[j].is_finite() {
                Ok(ProfileSample {
                    alpha,
                    r_max: best[j],
                    crossings: crossings[j],
                })
            } else {
                Err(Error::NoIntersection {
                    alpha,
                    image: None,
                    angle_index: Some(j),
                })
            }
        })
        .collect()
}

/// Crossing test with the segment taken as `[p, q)` so shared vertices of a
/// circuit are counted once.
fn half_open_crossing(dir: &Vector2<f64>, p: &Vector2<f64>, q: &Vector2<f64>) -> bool {
    let e = q - p;
    let denom = dir.perp(&e);
    if denom.abs() <= 1e-14 * e.norm() {
        return false;
    }
    let s = -dir.perp(p) / denom;
    (0.0..1.0).contains(&s) && dir.dot(&(p + e * s)) >= 0.0
}

/// Calls `f` with the index of every angle (from `order`, sorted in
/// `[0, 2π)`) that lies in the wedge subtended by segment `p → q`.
fn for_each_angle_in_wedge(order: &[(f64, usize)], p: &Vector2<f64>, q: &Vector2<f64>, mut f: impl FnMut(usize)) {
    const PAD: f64 = 1e-9;
    let (tp, tq) = (p.y.atan2(p.x), q.y.atan2(q.x));
    let mut delta = tq - tp;
    if delta > PI {
        delta -= TAU;
    } else if delta < -PI {
        delta += TAU;
    }
    // Near-antipodal endpoints or an endpoint at the origin: the wedge is
    // ill-defined, so every angle is a candidate.
    if PI - delta.abs() < 1e-6 || p.norm() < 1e-12 || q.norm() < 1e-12 {
        order.iter().for_each(|&(_, j)| f(j));
        return;
    }
    let lo = (tp + delta.min(0.0) - PAD).rem_euclid(TAU);
    let hi = lo + delta.abs() + 2.0 * PAD;
    let mut visit = |from: f64, to: f64| {
        let start = order.partition_point(|&(a, _)| a < from);
        for &(a, j) in &order[start..] {
            if a > to {
                break;
            }
            f(j);
        }
    };
    if hi < TAU {
        visit(lo, hi);
    } else {
        visit(lo, TAU);
        visit(0.0, hi - TAU);
    }
}
