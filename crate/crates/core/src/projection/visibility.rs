//! Visible-and-illuminated facet classification.
//!
//! A facet belongs to the set when both cosines are positive at its
//! centroid and the rays from the centroid toward the observer and toward
//! the light source hit no other facet. Occlusion queries use a uniform grid
//! over the plane perpendicular to the ray direction: a ray can only hit a
//! triangle whose projection covers the projected ray origin, so the grid
//! returns a superset of the true candidates and the result is identical to
//! testing every triangle.

use nalgebra::{Vector2, Vector3};

use crate::shape::TriMesh;

/// Self-intersection offset along the facet normal, relative to the
/// bounding radius.
pub const RAY_OFFSET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibilityMethod {
    NormalTest,
    RayTraced,
}

/// Facets in the visible-and-illuminated set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilitySet {
    pub facet_flags: Vec<bool>,
    pub method: VisibilityMethod,
}

impl VisibilitySet {
    pub fn count(&self) -> usize {
        self.facet_flags.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.facet_flags.iter().any(|&f| f)
    }

    pub fn flagged(&self) -> impl Iterator<Item = usize> + '_ {
        self.facet_flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i)
    }

    /// True when every flag set here is also set in `other`.
    pub fn is_subset_of(&self, other: &VisibilitySet) -> bool {
        self.facet_flags
            .iter()
            .zip(&other.facet_flags)
            .all(|(&a, &b)| !a || b)
    }
}

/// Facets facing both directions, without occlusion.
pub fn classify_facets_normal(mesh: &TriMesh, omega: &Vector3<f64>, omega0: &Vector3<f64>) -> VisibilitySet {
    VisibilitySet {
        facet_flags: mesh
            .normals
            .iter()
            .map(|n| n.dot(omega) > 0.0 && n.dot(omega0) > 0.0)
            .collect(),
        method: VisibilityMethod::NormalTest,
    }
}

/// Ray-traced visible-and-illuminated set.
pub fn classify_facets(mesh: &TriMesh, omega: &Vector3<f64>, omega0: &Vector3<f64>) -> VisibilitySet {
    let mut vis = classify_facets_normal(mesh, omega, omega0);
    vis.method = VisibilityMethod::RayTraced;
    if vis.is_empty() {
        return vis;
    }
    let offset = RAY_OFFSET * mesh.bounding_radius();
    let view = OcclusionGrid::new(mesh, omega);
    let light = if omega == omega0 { None } else { Some(OcclusionGrid::new(mesh, omega0)) };
    let light = light.as_ref().unwrap_or(&view);
    for fi in 0..mesh.facet_count() {
        if !vis.facet_flags[fi] {
            continue;
        }
        let origin = mesh.centroid(fi) + mesh.normals[fi] * offset;
        if view.occluded(mesh, &origin, fi) || light.occluded(mesh, &origin, fi) {
            vis.facet_flags[fi] = false;
        }
    }
    vis
}

/// Möller–Trumbore ray/triangle test; hits require `t > 0` and closed
/// barycentric bounds.
pub fn ray_hits_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return false;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&q) * inv > 0.0
}

/// Triangles binned by their projection onto the plane ⊥ `dir`, stored as
/// a compressed cell → facet list.
struct OcclusionGrid {
    dir: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    min: Vector2<f64>,
    inv_cell: Vector2<f64>,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    members: Vec<u32>,
    /// Largest vertex coordinate of each facet along `dir`.
    reach: Vec<f64>,
}

impl OcclusionGrid {
    fn new(mesh: &TriMesh, dir: &Vector3<f64>) -> Self {
        let (e1, e2) = super::plane_basis(dir);
        let projected: Vec<Vector2<f64>> = mesh
            .vertices
            .iter()
            .map(|v| Vector2::new(v.dot(&e1), v.dot(&e2)))
            .collect();
        let depth: Vec<f64> = mesh.vertices.iter().map(|v| v.dot(dir)).collect();
        let mut min = Vector2::repeat(f64::INFINITY);
        let mut max = Vector2::repeat(f64::NEG_INFINITY);
        for p in &projected {
            min = min.inf(p);
            max = max.sup(p);
        }
        let pad = 1e-9 * (max - min).amax().max(1e-300);
        min -= Vector2::repeat(pad);
        max += Vector2::repeat(pad);
        let side = ((mesh.facet_count() as f64).sqrt().ceil() as usize).clamp(1, 256);
        let (nx, ny) = (side, side);
        let extent = max - min;
        let inv_cell = Vector2::new(nx as f64 / extent.x, ny as f64 / extent.y);

        let ranges: Vec<(usize, usize, usize, usize)> = mesh
            .facets
            .iter()
            .map(|f| {
                let (a, b, c) = (projected[f[0]], projected[f[1]], projected[f[2]]);
                let lo = a.inf(&b).inf(&c) - Vector2::repeat(pad);
                let hi = a.sup(&b).sup(&c) + Vector2::repeat(pad);
                let (x0, y0) = Self::cell_of(&lo, &min, &inv_cell, nx, ny);
                let (x1, y1) = Self::cell_of(&hi, &min, &inv_cell, nx, ny);
                (x0, y0, x1, y1)
            })
            .collect();
        let mut counts = vec![0u32; nx * ny + 1];
        for &(x0, y0, x1, y1) in &ranges {
            for y in y0..y1 + 1 {
                for x in x0..x1 + 1 {
                    counts[y * nx + x + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut members = vec![0u32; *counts.last().unwrap_or(&0) as usize];
        for (fi, &(x0, y0, x1, y1)) in ranges.iter().enumerate() {
            for y in y0..y1 + 1 {
                for x in x0..x1 + 1 {
                    let cell = y * nx + x;
                    members[counts[cell] as usize] = fi as u32;
                    counts[cell] += 1;
                }
            }
        }
        let reach = mesh
            .facets
            .iter()
            .map(|f| depth[f[0]].max(depth[f[1]]).max(depth[f[2]]))
            .collect();
        Self {
            dir: *dir,
            e1,
            e2,
            min,
            inv_cell,
            nx,
            ny,
            starts,
            members,
            reach,
        }
    }

    fn cell_of(p: &Vector2<f64>, min: &Vector2<f64>, inv_cell: &Vector2<f64>, nx: usize, ny: usize) -> (usize, usize) {
        let x = ((p.x - min.x) * inv_cell.x).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let y = ((p.y - min.y) * inv_cell.y).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (x, y)
    }

    fn occluded(&self, mesh: &TriMesh, origin: &Vector3<f64>, skip: usize) -> bool {
        let p = Vector2::new(origin.dot(&self.e1), origin.dot(&self.e2));
        let rel = p - self.min;
        if rel.x < 0.0 || rel.y < 0.0 || rel.x * self.inv_cell.x > self.nx as f64 || rel.y * self.inv_cell.y > self.ny as f64 {
            return false;
        }
        // a hit at t > 0 needs a vertex ahead of the origin along the ray
        let origin_depth = origin.dot(&self.dir);
        let (x, y) = Self::cell_of(&p, &self.min, &self.inv_cell, self.nx, self.ny);
        let cell = y * self.nx + x;
        self.members[self.starts[cell] as usize..self.starts[cell + 1] as usize]
            .iter()
            .any(|&fi| {
                let fi = fi as usize;
                if fi == skip || self.reach[fi] < origin_depth {
                    return false;
                }
                let [a, b, c] = mesh.facets[fi];
                ray_hits_triangle(origin, &self.dir, &mesh.vertices[a], &mesh.vertices[b], &mesh.vertices[c])
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{build_mesh, ShapeParams};

    #[test]
    fn sphere_has_no_occlusion() {
        let mesh = build_mesh(&ShapeParams::sphere(1.0, 0), 3).unwrap();
        for (w, w0) in [
            (Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.9, 0.3, 0.1)),
            (Vector3::new(0.2, -0.5, 0.8), Vector3::new(0.2, -0.5, 0.8)),
        ] {
            let (w, w0) = (w.normalize(), w0.normalize());
            assert_eq!(
                classify_facets(&mesh, &w, &w0).facet_flags,
                classify_facets_normal(&mesh, &w, &w0).facet_flags
            );
        }
    }

    #[test]
    fn equal_directions_match_visible_set() {
        let mesh = build_mesh(&ShapeParams::sphere(1.0, 0), 2).unwrap();
        let w = Vector3::new(0.3, 0.4, -0.2).normalize();
        let vis = classify_facets_normal(&mesh, &w, &w);
        let visible: Vec<bool> = mesh.normals.iter().map(|n| n.dot(&w) > 0.0).collect();
        assert_eq!(vis.facet_flags, visible);
    }

    #[test]
    fn opposite_directions_give_empty_set() {
        let mesh = build_mesh(&ShapeParams::sphere(1.0, 0), 2).unwrap();
        let w = Vector3::new(0.0, 0.6, 0.8);
        assert!(classify_facets(&mesh, &w, &-w).is_empty());
    }

    #[test]
    fn triangle_hit_basics() {
        let (a, b, c) = (Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 1.0), Vector3::new(0.0, 1.0, 1.0));
        let up = Vector3::z();
        assert!(ray_hits_triangle(&Vector3::new(0.2, 0.2, 0.0), &up, &a, &b, &c));
        assert!(!ray_hits_triangle(&Vector3::new(0.2, 0.2, 2.0), &up, &a, &b, &c));
        assert!(!ray_hits_triangle(&Vector3::new(0.8, 0.8, 0.0), &up, &a, &b, &c));
    }
}
