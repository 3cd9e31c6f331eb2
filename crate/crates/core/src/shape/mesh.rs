use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use nalgebra::Vector3;

use super::harmonics::{coeff_count, eval_sh_all};
use super::{radius_from_exponent, ShapeParams};
use crate::error::{Error, Result};

/// Triangulated polytope in the body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub facets: Vec<[usize; 3]>,
    /// Outward unit normals, one per facet.
    pub normals: Vec<Vector3<f64>>,
    /// Facet areas.
    pub areas: Vec<f64>,
    /// Edge connectivity, shared between meshes of one tessellation.
    pub edges: Arc<EdgeTable>,
}

/// Undirected edges of a facet list and their adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTable {
    /// `(min, max)` vertex pairs in ascending order.
    pub edges: Vec<(usize, usize)>,
    /// Facets containing each edge.
    pub facets: Vec<Vec<usize>>,
    /// Edge indices of each facet.
    pub facet_edges: Vec<[usize; 3]>,
}

impl EdgeTable {
    pub fn new(facets: &[[usize; 3]]) -> Self {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(facets.len() * 3 / 2);
        for (fi, f) in facets.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        let mut pairs: Vec<((usize, usize), Vec<usize>)> = map.into_iter().collect();
        pairs.sort_unstable_by_key(|(e, _)| *e);
        let index: HashMap<(usize, usize), usize> = pairs.iter().enumerate().map(|(i, (e, _))| (*e, i)).collect();
        let facet_edges = facets
            .iter()
            .map(|f| {
                let mut out = [0; 3];
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    out[k] = index[&(a.min(b), a.max(b))];
                }
                out
            })
            .collect();
        let (edges, facets) = pairs.into_iter().unzip();
        Self {
            edges,
            facets,
            facet_edges,
        }
    }
}

impl TriMesh {
    /// Builds a mesh from counter-clockwise (seen from outside) facets.
    pub fn new(vertices: Vec<Vector3<f64>>, facets: Vec<[usize; 3]>) -> Result<Self> {
        let edges = Arc::new(EdgeTable::new(&facets));
        Self::with_edges(vertices, facets, edges)
    }

    /// As [`TriMesh::new`], reusing a precomputed edge table for `facets`.
    pub fn with_edges(vertices: Vec<Vector3<f64>>, facets: Vec<[usize; 3]>, edges: Arc<EdgeTable>) -> Result<Self> {
        if edges.facet_edges.len() != facets.len() {
            return Err(Error::DimensionMismatch {
                what: "edge table facets",
                expected: facets.len(),
                actual: edges.facet_edges.len(),
            });
        }
        let mut normals = Vec::with_capacity(facets.len());
        let mut areas = Vec::with_capacity(facets.len());
        for (fi, f) in facets.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Domain(format!("facet {fi} references a missing vertex")));
            }
            let cross = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            let norm = cross.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Domain(format!("facet {fi} is degenerate")));
            }
            normals.push(cross / norm);
            areas.push(0.5 * norm);
        }
        Ok(Self {
            vertices,
            facets,
            normals,
            areas,
            edges,
        })
    }

    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    pub fn centroid(&self, facet: usize) -> Vector3<f64> {
        let [a, b, c] = self.facets[facet];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Enclosed volume by the divergence theorem.
    pub fn volume(&self) -> f64 {
        self.facets
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])))
            .sum::<f64>()
            / 6.0
    }

    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `Σ area · ν`, zero for a closed surface.
    pub fn area_weighted_normal_sum(&self) -> Vector3<f64> {
        self.normals
            .iter()
            .zip(&self.areas)
            .fold(Vector3::zeros(), |acc, (n, a)| acc + n * *a)
    }

    /// Maps each undirected edge `(min, max)` to the facets that contain it.
    pub fn edge_facets(&self) -> HashMap<(usize, usize), Vec<usize>> {
        self.edges
            .edges
            .iter()
            .copied()
            .zip(self.edges.facets.iter().cloned())
            .collect()
    }

    /// Checks unit normals, outward orientation about the origin and closure.
    pub fn check_invariants(&self) -> Result<()> {
        for (fi, n) in self.normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Precondition(format!("normal {fi} is not unit length")));
            }
            if n.dot(&self.centroid(fi)) <= 0.0 {
                return Err(Error::Precondition(format!("normal {fi} points inward")));
            }
        }
        let closure = self.area_weighted_normal_sum().norm();
        if closure > 1e-9 * self.total_area() {
            return Err(Error::Precondition(format!("mesh is not closed (|sum a n| = {closure:e})")));
        }
        Ok(())
    }

    /// Wavefront OBJ with 1-based triangular faces.
    pub fn write_obj<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for f in &self.facets {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }
}

/// Unit-sphere triangulation from a subdivided icosahedron.
#[derive(Debug, Clone)]
pub struct Tessellation {
    pub directions: Vec<Vector3<f64>>,
    /// `(θ, φ)` of every direction.
    pub angles: Vec<(f64, f64)>,
    pub facets: Vec<[usize; 3]>,
    pub edges: Arc<EdgeTable>,
}

impl Tessellation {
    /// `20 · 4^subdivision` facets.
    pub fn icosphere(subdivision: usize) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut directions: Vec<Vector3<f64>> = [
            [-1.0, phi, 0.0],
            [1.0, phi, 0.0],
            [-1.0, -phi, 0.0],
            [1.0, -phi, 0.0],
            [0.0, -1.0, phi],
            [0.0, 1.0, phi],
            [0.0, -1.0, -phi],
            [0.0, 1.0, -phi],
            [phi, 0.0, -1.0],
            [phi, 0.0, 1.0],
            [-phi, 0.0, -1.0],
            [-phi, 0.0, 1.0],
        ]
        .iter()
        .map(|v| Vector3::new(v[0], v[1], v[2]).normalize())
        .collect();
        let mut facets: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for f in facets.iter_mut() {
            let (a, b, c) = (directions[f[0]], directions[f[1]], directions[f[2]]);
            if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
                f.swap(1, 2);
            }
        }

        for _ in 0..subdivision {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(facets.len() * 4);
            let mut midpoint = |a: usize, b: usize, dirs: &mut Vec<Vector3<f64>>| -> usize {
                *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    dirs.push((dirs[a] + dirs[b]).normalize());
                    dirs.len() - 1
                })
            };
            for &[a, b, c] in &facets {
                let ab = midpoint(a, b, &mut directions);
                let bc = midpoint(b, c, &mut directions);
                let ca = midpoint(c, a, &mut directions);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            facets = next;
        }

        let angles = directions
            .iter()
            .map(|d| (d.z.clamp(-1.0, 1.0).acos(), d.y.atan2(d.x)))
            .collect();
        let edges = Arc::new(EdgeTable::new(&facets));
        Self {
            directions,
            angles,
            facets,
            edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.directions.len()
    }

    /// Places every node at its radius along its direction.
    pub fn realize_with(&self, radii: &[f64]) -> Result<TriMesh> {
        let vertices = self
            .directions
            .iter()
            .zip(radii)
            .map(|(d, r)| d * *r)
            .collect();
        TriMesh::with_edges(vertices, self.facets.clone(), Arc::clone(&self.edges))
    }
}

/// Tessellation with the harmonic basis cached at every node, so that
/// repeated realizations cost one matrix-vector product.
#[derive(Debug, Clone)]
pub struct ShapeBasis {
    tess: Tessellation,
    l_max: usize,
    /// Row-major `nodes × coeff_count(l_max)`.
    values: Vec<f64>,
}

impl ShapeBasis {
    pub fn new(subdivision: usize, l_max: usize) -> Self {
        let tess = Tessellation::icosphere(subdivision);
        let width = coeff_count(l_max);
        let mut values = vec![0.0; tess.node_count() * width];
        for (row, &(theta, phi)) in values.chunks_mut(width).zip(&tess.angles) {
            eval_sh_all(l_max, theta, phi, row);
        }
        Self { tess, l_max, values }
    }

    pub fn tessellation(&self) -> &Tessellation {
        &self.tess
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn radii(&self, params: &ShapeParams) -> Result<Vec<f64>> {
        if params.l_max() > self.l_max {
            return Err(Error::DimensionMismatch {
                what: "shape degree vs cached basis degree",
                expected: self.l_max,
                actual: params.l_max(),
            });
        }
        let width = coeff_count(self.l_max);
        let coeffs = params.coeffs();
        self.values
            .chunks(width)
            .zip(&self.tess.angles)
            .map(|(row, &(theta, phi))| {
                let e: f64 = row.iter().zip(coeffs).map(|(y, c)| y * c).sum();
                radius_from_exponent(e, theta, phi)
            })
            .collect()
    }

    pub fn realize(&self, params: &ShapeParams) -> Result<TriMesh> {
        self.tess.realize_with(&self.radii(params)?)
    }
}

/// Triangulated body for `params` on an icosphere of the given subdivision.
pub fn build_mesh(params: &ShapeParams, subdivision: usize) -> Result<TriMesh> {
    ShapeBasis::new(subdivision, params.l_max()).realize(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::SpinState;
    use std::f64::consts::PI;

    #[test]
    fn facet_counts() {
        for s in 0..4 {
            let t = Tessellation::icosphere(s);
            assert_eq!(t.facets.len(), 20 * 4usize.pow(s as u32));
            assert_eq!(t.node_count(), 10 * 4usize.pow(s as u32) + 2);
        }
    }

    #[test]
    fn unit_sphere_area_and_volume() {
        let mesh = build_mesh(&ShapeParams::sphere(1.0, 0), 3).unwrap();
        assert_eq!(mesh.facet_count(), 1280);
        assert!((mesh.total_area() - 4.0 * PI).abs() < 0.01 * 4.0 * PI);
        assert!((mesh.volume() - 4.0 * PI / 3.0).abs() < 0.01 * 4.0 * PI / 3.0);
        mesh.check_invariants().unwrap();
    }

    #[test]
    fn refinement_converges_about_fourfold() {
        let errs: Vec<(f64, f64)> = (1..5)
            .map(|s| {
                let m = build_mesh(&ShapeParams::sphere(1.0, 0), s).unwrap();
                ((4.0 * PI - m.total_area()).abs(), (4.0 * PI / 3.0 - m.volume()).abs())
            })
            .collect();
        for w in errs.windows(2) {
            let (ra, rv) = (w[0].0 / w[1].0, w[0].1 / w[1].1);
            assert!((3.5..4.5).contains(&ra), "area ratio {ra}");
            assert!((3.5..4.5).contains(&rv), "volume ratio {rv}");
        }
    }

    #[test]
    fn elongated_shape_is_closed() {
        let mut p = ShapeParams::new(4, 4, SpinState::default());
        p.set(2, 0, 0.3).unwrap();
        p.set(2, 2, -0.2).unwrap();
        p.set(3, 1, 0.1).unwrap();
        let mesh = build_mesh(&p, 3).unwrap();
        mesh.check_invariants().unwrap();
        assert!(mesh.area_weighted_normal_sum().norm() < 1e-9 * mesh.total_area());
    }

    #[test]
    fn basis_cache_matches_direct_evaluation() {
        let mut p = ShapeParams::new(3, 3, SpinState::default());
        p.set(1, -1, 0.2).unwrap();
        p.set(3, 2, 0.07).unwrap();
        let basis = ShapeBasis::new(2, 6);
        let radii = basis.radii(&p).unwrap();
        for (r, &(t, f)) in radii.iter().zip(&basis.tessellation().angles) {
            let direct = crate::shape::eval_radius(&p, t, f).unwrap();
            assert!((r - direct).abs() < 1e-12);
        }
        assert!(ShapeBasis::new(1, 2).radii(&p).is_err());
    }

    #[test]
    fn obj_export_lists_every_face() {
        let mesh = build_mesh(&ShapeParams::sphere(1.0, 0), 1).unwrap();
        let mut buf = Vec::new();
        mesh.write_obj(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 42);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 80);
    }
}
