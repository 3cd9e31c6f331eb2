//! Generalized projections of a triangulated body: visible-and-illuminated
//! facet sets, disk-integrated brightness and starlike profile radii.

pub mod profile;
pub mod visibility;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape::{build_mesh, ShapeParams, SpinState, TriMesh};

pub use profile::{boundary_edges, flagged_edges, profile_max_radius, profile_radii, project_point, ProfileSample};
pub use visibility::{classify_facets, classify_facets_normal, ray_hits_triangle, VisibilityMethod, VisibilitySet};

/// Scattering law `R(μ, μ₀)`, where μ = ⟨ω, ν⟩ and μ₀ = ⟨ω₀, ν⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScatteringLaw {
    /// `ρ μ₀`
    Lambert { albedo: f64 },
    /// `ρ μ₀ / (μ + μ₀)`
    LommelSeeliger { albedo: f64 },
    /// `ρ [(1 - w) μ₀/(μ + μ₀) + w μ₀]`
    Mixed { albedo: f64, weight: f64 },
}

impl ScatteringLaw {
    pub fn validate(&self) -> Result<()> {
        let (albedo, weight) = match *self {
            ScatteringLaw::Lambert { albedo } | ScatteringLaw::LommelSeeliger { albedo } => (albedo, 0.0),
            ScatteringLaw::Mixed { albedo, weight } => (albedo, weight),
        };
        if !(albedo > 0.0) || !albedo.is_finite() {
            return Err(Error::Domain(format!("albedo must be > 0, got {albedo}")));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Domain(format!("mix weight must lie in [0, 1], got {weight}")));
        }
        Ok(())
    }

    pub fn intensity(&self, mu: f64, mu0: f64) -> f64 {
        match *self {
            ScatteringLaw::Lambert { albedo } => albedo * mu0,
            ScatteringLaw::LommelSeeliger { albedo } => albedo * mu0 / (mu + mu0),
            ScatteringLaw::Mixed { albedo, weight } => albedo * ((1.0 - weight) * mu0 / (mu + mu0) + weight * mu0),
        }
    }
}

impl Default for ScatteringLaw {
    fn default() -> Self {
        ScatteringLaw::LommelSeeliger { albedo: 1.0 }
    }
}

/// Default image-plane basis for viewing direction `omega`:
/// `e₁ = normalize(z × ω)` (or `x × ω` when ω ∥ z) and `e₂ = ω × e₁`.
pub fn plane_basis(omega: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let mut e1 = Vector3::z().cross(omega);
    if e1.norm() < 1e-9 {
        e1 = Vector3::x().cross(omega);
    }
    let e1 = e1.normalize();
    let e2 = omega.cross(&e1).normalize();
    (e1, e2)
}

/// Viewing geometry of one profile image, in the body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileGeometry {
    pub omega: Vector3<f64>,
    pub omega0: Vector3<f64>,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    /// Ray origin ϰ₀ in image-plane coordinates.
    pub offset: Vector2<f64>,
    /// Ray directions α measured from `e1` toward `e2`.
    pub angles: Vec<f64>,
}

impl ProfileGeometry {
    /// Body-frame geometry with the default basis.
    pub fn new(omega: Vector3<f64>, omega0: Vector3<f64>, offset: Vector2<f64>, angles: Vec<f64>) -> Result<Self> {
        check_unit(&omega, "omega")?;
        check_unit(&omega0, "omega0")?;
        let (e1, e2) = plane_basis(&omega);
        Ok(Self {
            omega,
            omega0,
            e1,
            e2,
            offset,
            angles,
        })
    }

    /// Body-frame geometry with an explicit basis.
    pub fn with_basis(
        omega: Vector3<f64>,
        omega0: Vector3<f64>,
        e1: Vector3<f64>,
        e2: Vector3<f64>,
        offset: Vector2<f64>,
        angles: Vec<f64>,
    ) -> Result<Self> {
        check_unit(&omega, "omega")?;
        check_unit(&omega0, "omega0")?;
        let ok = (e1.norm() - 1.0).abs() < 1e-12
            && (e2.norm() - 1.0).abs() < 1e-12
            && e1.dot(&e2).abs() < 1e-12
            && e1.dot(&omega).abs() < 1e-12
            && e2.dot(&omega).abs() < 1e-12;
        if !ok {
            return Err(Error::Domain("image-plane basis must be orthonormal and perpendicular to omega".into()));
        }
        Ok(Self {
            omega,
            omega0,
            e1,
            e2,
            offset,
            angles,
        })
    }

    /// Geometry from ecliptic directions at time `t`. The default basis is
    /// fixed on the sky (built from ecliptic `z`) and rotated into the body
    /// frame together with the directions, so α is a sky position angle.
    pub fn from_ecliptic(
        spin: &SpinState,
        time: f64,
        omega_ecl: &Vector3<f64>,
        omega0_ecl: &Vector3<f64>,
        offset: Vector2<f64>,
        angles: Vec<f64>,
    ) -> Result<Self> {
        check_unit(omega_ecl, "omega")?;
        check_unit(omega0_ecl, "omega0")?;
        let rot = spin.ecliptic_to_body(time);
        let (e1, e2) = plane_basis(omega_ecl);
        Ok(Self {
            omega: rot * omega_ecl,
            omega0: rot * omega0_ecl,
            e1: rot * e1,
            e2: rot * e2,
            offset,
            angles,
        })
    }
}

pub(crate) fn check_unit(v: &Vector3<f64>, what: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("{what} must be a unit vector (norm {})", v.norm())));
    }
    Ok(())
}

/// `Σ R(μ, μ₀) μ dσ` over the flagged facets.
pub fn disk_brightness(
    mesh: &TriMesh,
    vis: &VisibilitySet,
    omega: &Vector3<f64>,
    omega0: &Vector3<f64>,
    law: &ScatteringLaw,
) -> f64 {
    vis.flagged()
        .map(|fi| {
            let n = &mesh.normals[fi];
            let (mu, mu0) = (n.dot(omega), n.dot(omega0));
            law.intensity(mu, mu0) * mu * mesh.areas[fi]
        })
        .sum()
}

/// Profile radii of a mesh for one image geometry.
pub fn render_profile_on_mesh(mesh: &TriMesh, geom: &ProfileGeometry) -> Result<Vec<ProfileSample>> {
    if geom.angles.is_empty() {
        return Err(Error::Precondition("profile geometry has no angles".into()));
    }
    let vis = classify_facets(mesh, &geom.omega, &geom.omega0);
    profile_radii(mesh, &vis, geom)
}

/// Builds the mesh for `params` and renders image `image_index` with the
/// offset stored in `params`.
pub fn render_profile(
    params: &ShapeParams,
    image_index: usize,
    geom: &ProfileGeometry,
    mesh_subdivision: usize,
) -> Result<Vec<ProfileSample>> {
    let mesh = build_mesh(params, mesh_subdivision)?;
    let mut geom = geom.clone();
    geom.offset = params.offset(image_index);
    render_profile_on_mesh(&mesh, &geom).map_err(|e| match e {
        Error::NoIntersection { alpha, angle_index, .. } => Error::NoIntersection {
            alpha,
            image: Some(image_index),
            angle_index,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sphere(subdivision: usize) -> TriMesh {
        build_mesh(&ShapeParams::sphere(1.0, 0), subdivision).unwrap()
    }

    #[test]
    fn projection_examples() {
        let w = Vector3::new(0.0, 0.6, 0.8);
        let g = ProfileGeometry::new(w, w, Vector2::zeros(), vec![0.0]).unwrap();
        assert!(project_point(&w, &g).norm() < 1e-15);
        let e1 = project_point(&g.e1, &g);
        assert!((e1 - Vector2::new(1.0, 0.0)).norm() < 1e-15);

        let g = ProfileGeometry::with_basis(Vector3::z(), Vector3::z(), Vector3::x(), Vector3::y(), Vector2::zeros(), vec![]).unwrap();
        assert_eq!(project_point(&Vector3::new(1.0, 2.0, 3.0), &g), Vector2::new(1.0, 2.0));
    }

    #[test]
    fn default_basis_is_right_handed() {
        for w in [Vector3::z(), Vector3::new(0.3, -0.2, 0.9).normalize(), -Vector3::z()] {
            let (e1, e2) = plane_basis(&w);
            assert!(e1.dot(&w).abs() < 1e-12 && e2.dot(&w).abs() < 1e-12);
            assert!((e1.cross(&e2) - w).norm() < 1e-12);
        }
    }

    #[test]
    fn bad_basis_rejected() {
        assert!(ProfileGeometry::with_basis(Vector3::z(), Vector3::z(), Vector3::x(), Vector3::z(), Vector2::zeros(), vec![]).is_err());
        assert!(ProfileGeometry::new(Vector3::new(1.0, 1.0, 0.0), Vector3::z(), Vector2::zeros(), vec![]).is_err());
    }

    #[test]
    fn lambert_sphere_brightness() {
        let mesh = sphere(3);
        let w = Vector3::new(0.1, -0.4, 0.7).normalize();
        let vis = classify_facets(&mesh, &w, &w);
        let law = ScatteringLaw::Lambert { albedo: 0.3 };
        let l = disk_brightness(&mesh, &vis, &w, &w, &law);
        let exact = 2.0 * PI * 0.3 / 3.0;
        assert!((l - exact).abs() < 0.01 * exact, "{l} vs {exact}");
    }

    #[test]
    fn lommel_seeliger_sphere_brightness() {
        let mesh = sphere(3);
        let w = Vector3::new(0.5, 0.5, 0.5).normalize();
        let vis = classify_facets(&mesh, &w, &w);
        let law = ScatteringLaw::LommelSeeliger { albedo: 0.2 };
        let l = disk_brightness(&mesh, &vis, &w, &w, &law);
        let exact = 0.2 * PI / 2.0;
        assert!((l - exact).abs() < 0.01 * exact);
    }

    #[test]
    fn back_lit_sphere_is_dark() {
        let mesh = sphere(2);
        let w = Vector3::x();
        let vis = classify_facets(&mesh, &w, &-w);
        assert_eq!(disk_brightness(&mesh, &vis, &w, &-w, &ScatteringLaw::default()), 0.0);
    }

    #[test]
    fn lommel_seeliger_reciprocity() {
        let mesh = sphere(3);
        let w = Vector3::new(1.0, 0.2, 0.1).normalize();
        let w0 = Vector3::new(0.9, -0.3, 0.3).normalize();
        let law = ScatteringLaw::LommelSeeliger { albedo: 1.0 };
        let a = disk_brightness(&mesh, &classify_facets(&mesh, &w, &w0), &w, &w0, &law);
        let b = disk_brightness(&mesh, &classify_facets(&mesh, &w0, &w), &w0, &w, &law);
        assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
    }

    #[test]
    fn brightness_and_radius_scale_with_size() {
        let mesh = sphere(2);
        let big = TriMesh::new(mesh.vertices.iter().map(|v| v * 2.0).collect(), mesh.facets.clone()).unwrap();
        let w = Vector3::new(0.3, 0.1, 0.95).normalize();
        let w0 = Vector3::new(0.35, 0.2, 0.9).normalize();
        let law = ScatteringLaw::Mixed { albedo: 0.5, weight: 0.3 };
        let (v1, v2) = (classify_facets(&mesh, &w, &w0), classify_facets(&big, &w, &w0));
        assert_eq!(v1, v2);
        let (l1, l2) = (disk_brightness(&mesh, &v1, &w, &w0, &law), disk_brightness(&big, &v2, &w, &w0, &law));
        assert!((l2 / l1 - 4.0).abs() < 1e-9 * 4.0);
        let g = ProfileGeometry::new(w, w0, Vector2::zeros(), vec![0.4]).unwrap();
        let (r1, r2) = (
            profile_max_radius(&mesh, &v1, &g, 0.4).unwrap(),
            profile_max_radius(&big, &v2, &g, 0.4).unwrap(),
        );
        assert!((r2 / r1 - 2.0).abs() < 1e-9 * 2.0);
    }

    #[test]
    fn render_profile_errors_when_back_lit() {
        let p = ShapeParams::sphere(1.0, 0);
        let g = ProfileGeometry::new(Vector3::x(), -Vector3::x(), Vector2::zeros(), vec![0.0, 1.0]).unwrap();
        assert!(matches!(render_profile(&p, 0, &g, 2), Err(Error::NoIntersection { image: Some(0), .. })));
    }
}
