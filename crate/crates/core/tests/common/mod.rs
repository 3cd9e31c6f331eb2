#![allow(dead_code)]

use nalgebra::Vector3;

use mce::shape::TriMesh;

/// Axis-aligned box with each face split into `n × n` squares of two
/// triangles, counter-clockwise seen from outside.
pub fn box_mesh(lo: Vector3<f64>, hi: Vector3<f64>, n: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let mut vertices = Vec::new();
    let mut facets = Vec::new();
    // (normal axis, side, u axis, v axis) with u × v along the outward normal
    let faces = [
        (0, 1.0, 1, 2),
        (0, -1.0, 2, 1),
        (1, 1.0, 2, 0),
        (1, -1.0, 0, 2),
        (2, 1.0, 0, 1),
        (2, -1.0, 1, 0),
    ];
    for (axis, side, u, v) in faces {
        let base = vertices.len();
        for j in 0..=n {
            for i in 0..=n {
                let mut p = Vector3::zeros();
                p[axis] = if side > 0.0 { hi[axis] } else { lo[axis] };
                p[u] = lo[u] + (hi[u] - lo[u]) * i as f64 / n as f64;
                p[v] = lo[v] + (hi[v] - lo[v]) * j as f64 / n as f64;
                vertices.push(p);
            }
        }
        let idx = |i: usize, j: usize| base + j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                facets.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                facets.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
    }
    (vertices, facets)
}

/// A 3×3-subdivided lower box with a smaller box floating above it: 120
/// facets, not convex, so the upper box shadows and hides parts of the
/// lower one.
pub fn stacked_boxes() -> TriMesh {
    let (mut v, mut f) = box_mesh(Vector3::new(-1.0, -1.0, -0.8), Vector3::new(1.0, 1.0, 0.0), 3);
    let (v2, f2) = box_mesh(Vector3::new(-0.4, -0.3, 0.05), Vector3::new(0.5, 0.4, 0.85), 1);
    let off = v.len();
    v.extend(v2);
    f.extend(f2.into_iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
    TriMesh::new(v, f).unwrap()
}

/// Ray/triangle test by plane intersection and edge-side checks.
pub fn ray_hits(origin: &Vector3<f64>, dir: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> bool {
    let n = (b - a).cross(&(c - a));
    let denom = n.dot(dir);
    if denom.abs() < 1e-14 * n.norm() {
        return false;
    }
    let t = n.dot(&(a - origin)) / denom;
    if t <= 0.0 {
        return false;
    }
    let x = origin + dir * t;
    let side = |p: &Vector3<f64>, q: &Vector3<f64>| (q - p).cross(&(x - p)).dot(&n) >= 0.0;
    side(a, b) && side(b, c) && side(c, a)
}

/// Brute-force visibility: every facet against every other facet.
pub fn brute_force_visibility(mesh: &TriMesh, omega: &Vector3<f64>, omega0: &Vector3<f64>) -> Vec<bool> {
    let offset = mce::projection::visibility::RAY_OFFSET * mesh.bounding_radius();
    (0..mesh.facet_count())
        .map(|i| {
            let n = mesh.normals[i];
            if !(n.dot(omega) > 0.0 && n.dot(omega0) > 0.0) {
                return false;
            }
            let origin = mesh.centroid(i) + n * offset;
            let blocked = |d: &Vector3<f64>| {
                (0..mesh.facet_count()).any(|j| {
                    let [a, b, c] = mesh.facets[j];
                    j != i && ray_hits(&origin, d, &mesh.vertices[a], &mesh.vertices[b], &mesh.vertices[c])
                })
            };
            !blocked(omega) && !blocked(omega0)
        })
        .collect()
}

/// Unit vectors spread over the sphere (golden-angle spiral).
pub fn fibonacci_directions(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
