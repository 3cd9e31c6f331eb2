//! Starlike body parametrization and discretization.
//!
//! The surface radius is `r(θ, φ) = exp(Σ c_lm Y_l^m(θ, φ))`, positive by
//! construction. [`ShapeParams`] also carries the spin state and the
//! per-image profile offsets, which together make up the full model.

pub mod harmonics;
pub mod mesh;
pub mod spin;

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use harmonics::{coeff_count, coeff_index, eval_sh_basis, eval_sh_all, index_to_lm};
pub use mesh::{build_mesh, ShapeBasis, Tessellation, TriMesh};
pub use spin::{body_frame_directions, SpinState, HOURS_PER_DAY};

/// Largest allowed exponent in the radius series before it is treated as
/// an overflow.
pub const EXPONENT_CAP: f64 = 50.0;

/// Shape coefficients, spin state and per-image profile offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    l_max: usize,
    m_max: usize,
    coeffs: Vec<f64>,
    pub spin: SpinState,
    pub offsets: Vec<Vector2<f64>>,
}

impl ShapeParams {
    /// All-zero coefficients (the unit sphere). `m_max` caps `|m|`.
    pub fn new(l_max: usize, m_max: usize, spin: SpinState) -> Self {
        Self {
            l_max,
            m_max: m_max.min(l_max),
            coeffs: vec![0.0; coeff_count(l_max)],
            spin,
            offsets: Vec::new(),
        }
    }

    /// Sphere of the given radius.
    pub fn sphere(radius: f64, l_max: usize) -> Self {
        let mut p = Self::new(l_max, l_max, SpinState::default());
        p.coeffs[0] = radius.ln() * (4.0 * PI).sqrt();
        p
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn allows(&self, l: usize, m: i64) -> bool {
        l <= self.l_max && m.unsigned_abs() as usize <= l.min(self.m_max)
    }

    pub fn get(&self, l: usize, m: i64) -> f64 {
        if self.allows(l, m) {
            self.coeffs[coeff_index(l, m)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, l: usize, m: i64, value: f64) -> Result<()> {
        if !self.allows(l, m) {
            return Err(Error::Domain(format!(
                "coefficient ({l}, {m}) outside l_max={} / m_max={}",
                self.l_max, self.m_max
            )));
        }
        if !value.is_finite() {
            return Err(Error::Domain(format!("coefficient ({l}, {m}) is not finite")));
        }
        self.coeffs[coeff_index(l, m)] = value;
        Ok(())
    }

    /// Coefficients in [`coeff_index`] order; entries outside the `m` cap are zero.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// The admissible `(l, m)` pairs in flat-index order.
    pub fn active_terms(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        (0..coeff_count(self.l_max))
            .map(index_to_lm)
            .filter(|&(l, m)| self.allows(l, m))
    }

    /// Copy with a different truncation; coefficients outside it are dropped.
    pub fn with_truncation(&self, l_max: usize, m_max: usize) -> Self {
        let mut out = Self::new(l_max, m_max, self.spin);
        out.offsets = self.offsets.clone();
        for (l, m) in self.active_terms() {
            if out.allows(l, m) {
                out.coeffs[coeff_index(l, m)] = self.get(l, m);
            }
        }
        out
    }

    /// `Σ c_lm Y_l^m(θ, φ)`.
    pub fn exponent(&self, theta: f64, phi: f64) -> f64 {
        let mut basis = vec![0.0; coeff_count(self.l_max)];
        eval_sh_all(self.l_max, theta, phi, &mut basis);
        basis.iter().zip(&self.coeffs).map(|(y, c)| y * c).sum()
    }

    pub fn offset(&self, image: usize) -> Vector2<f64> {
        self.offsets.get(image).copied().unwrap_or_else(Vector2::zeros)
    }

    pub fn validate(&self) -> Result<()> {
        self.spin.validate()?;
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite shape coefficient".into()));
        }
        if self.offsets.iter().any(|o| !o.x.is_finite() || !o.y.is_finite()) {
            return Err(Error::Domain("non-finite profile offset".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ShapeFile = serde_json::from_str(text)?;
        file.into_params()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ShapeFile::from_params(self))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }
}

/// `exp(Σ c_lm Y_l^m(θ, φ))`, failing when the exponent exceeds [`EXPONENT_CAP`].
pub fn eval_radius(params: &ShapeParams, theta: f64, phi: f64) -> Result<f64> {
    radius_from_exponent(params.exponent(theta, phi), theta, phi)
}

pub(crate) fn radius_from_exponent(exponent: f64, theta: f64, phi: f64) -> Result<f64> {
    if !exponent.is_finite() || exponent > EXPONENT_CAP {
        return Err(Error::Overflow {
            exponent,
            cap: EXPONENT_CAP,
            theta,
            phi,
        });
    }
    Ok(exponent.exp())
}

/// On-disk shape description. Angles in degrees, period in hours, epoch in days.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeFile {
    pub l_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    pub coeffs: Vec<CoeffEntry>,
    pub spin: SpinFile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offsets: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub l: usize,
    pub m: i64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinFile {
    pub pole_lon_deg: f64,
    pub pole_lat_deg: f64,
    pub period_h: f64,
    pub phase0_deg: f64,
    pub epoch: f64,
}

impl From<SpinState> for SpinFile {
    fn from(s: SpinState) -> Self {
        Self {
            pole_lon_deg: s.pole_lon.to_degrees(),
            pole_lat_deg: s.pole_lat.to_degrees(),
            period_h: s.period_h,
            phase0_deg: s.phase0.to_degrees(),
            epoch: s.epoch,
        }
    }
}

impl SpinFile {
    pub fn to_spin(self) -> Result<SpinState> {
        SpinState::new(
            self.pole_lon_deg.to_radians(),
            self.pole_lat_deg.to_radians(),
            self.period_h,
            self.phase0_deg.to_radians(),
            self.epoch,
        )
    }
}

impl ShapeFile {
    pub fn from_params(p: &ShapeParams) -> Self {
        Self {
            l_max: p.l_max,
            m_max: (p.m_max < p.l_max).then_some(p.m_max),
            coeffs: p
                .active_terms()
                .map(|(l, m)| CoeffEntry { l, m, value: p.get(l, m) })
                .collect(),
            spin: p.spin.into(),
            offsets: p.offsets.iter().map(|o| [o.x, o.y]).collect(),
        }
    }

    pub fn into_params(self) -> Result<ShapeParams> {
        let m_max = self.m_max.unwrap_or(self.l_max);
        let mut p = ShapeParams::new(self.l_max, m_max, self.spin.to_spin()?);
        for c in &self.coeffs {
            p.set(c.l, c.m, c.value)?;
        }
        p.offsets = self.offsets.iter().map(|o| Vector2::new(o[0], o[1])).collect();
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_coefficients_give_unit_radius() {
        let p = ShapeParams::new(4, 4, SpinState::default());
        for (t, f) in [(0.0, 0.0), (1.0, 2.0), (PI, 5.0)] {
            assert_relative_eq!(eval_radius(&p, t, f).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_term_scales_radius() {
        let mut p = ShapeParams::new(2, 2, SpinState::default());
        p.set(0, 0, (4.0 * PI).sqrt()).unwrap();
        assert_relative_eq!(eval_radius(&p, 0.7, 0.2).unwrap(), std::f64::consts::E, epsilon = 1e-12);
        let s = ShapeParams::sphere(2.5, 3);
        assert_relative_eq!(eval_radius(&s, 2.0, 1.0).unwrap(), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn overflow_is_reported() {
        let mut p = ShapeParams::new(0, 0, SpinState::default());
        p.set(0, 0, 60.0 * (4.0 * PI).sqrt()).unwrap();
        assert!(matches!(eval_radius(&p, 0.1, 0.1), Err(Error::Overflow { .. })));
    }

    #[test]
    fn m_cap_restricts_terms() {
        let mut p = ShapeParams::new(8, 6, SpinState::default());
        assert!(p.set(8, 7, 0.1).is_err());
        assert!(p.set(8, -7, 0.1).is_err());
        assert!(p.set(8, 6, 0.1).is_ok());
        assert_eq!(p.active_terms().count(), 81 - 6);
    }

    #[test]
    fn json_round_trip() {
        let mut p = ShapeParams::new(3, 2, SpinState::new(0.5, 0.3, 7.0, 0.1, 12.0).unwrap());
        p.set(2, -1, 0.12).unwrap();
        p.set(3, 2, -0.05).unwrap();
        p.offsets = vec![Vector2::new(0.1, -0.2)];
        let back = ShapeParams::from_json_str(&p.to_json_string().unwrap()).unwrap();
        assert_eq!(back.l_max(), 3);
        assert_eq!(back.m_max(), 2);
        assert_relative_eq!(back.get(2, -1), 0.12);
        assert_relative_eq!(back.spin.pole_lon, 0.5, epsilon = 1e-12);
        assert_eq!(back.offsets.len(), 1);
    }

    #[test]
    fn json_rejects_out_of_range_term() {
        let text = r#"{"l_max": 2, "coeffs": [{"l": 1, "m": 2, "value": 0.1}],
            "spin": {"pole_lon_deg": 0, "pole_lat_deg": 90, "period_h": 5, "phase0_deg": 0, "epoch": 0}}"#;
        assert!(ShapeParams::from_json_str(text).is_err());
    }
}
