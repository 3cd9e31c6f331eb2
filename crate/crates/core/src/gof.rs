//! Goodness-of-fit measures for the shape problem and the generic mode
//! evaluator handed to the compatibility machinery.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::projection::{
    classify_facets, disk_brightness, profile_radii, ProfileGeometry, ProfileSample, ScatteringLaw,
};
use crate::shape::{body_frame_directions, ShapeBasis, ShapeParams, TriMesh};

/// Lower bound applied to χ² values before taking logarithms.
pub const CHI2_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct BrightnessRecord {
    /// Observation time, days.
    pub time: f64,
    /// Viewing direction, ecliptic frame.
    pub omega: Vector3<f64>,
    /// Illumination direction, ecliptic frame.
    pub omega0: Vector3<f64>,
    pub l_obs: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BrightnessData {
    pub records: Vec<BrightnessRecord>,
}

impl BrightnessData {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Precondition("brightness data is empty".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            crate::projection::check_unit(&r.omega, "omega").map_err(|e| Error::Precondition(format!("record {i}: {e}")))?;
            crate::projection::check_unit(&r.omega0, "omega0").map_err(|e| Error::Precondition(format!("record {i}: {e}")))?;
            if !(r.l_obs >= 0.0) || !r.l_obs.is_finite() {
                return Err(Error::Precondition(format!("record {i}: brightness must be finite and >= 0")));
            }
            if !(r.sigma > 0.0) || !r.sigma.is_finite() {
                return Err(Error::Precondition(format!("record {i}: sigma must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub alpha: f64,
    pub r_obs: f64,
    pub sigma: f64,
}

/// One profile image: its observing geometry and measured radii.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileImage {
    pub id: usize,
    pub time: f64,
    pub omega: Vector3<f64>,
    pub omega0: Vector3<f64>,
    pub points: Vec<ProfilePoint>,
}

impl ProfileImage {
    pub fn angles(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.alpha).collect()
    }

    /// Body-frame geometry for the given spin state and offset.
    pub fn geometry(&self, params: &ShapeParams, offset: Vector2<f64>) -> Result<ProfileGeometry> {
        ProfileGeometry::from_ecliptic(&params.spin, self.time, &self.omega, &self.omega0, offset, self.angles())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileData {
    pub images: Vec<ProfileImage>,
}

impl ProfileData {
    /// Total number of radii N_∂.
    pub fn point_count(&self) -> usize {
        self.images.iter().map(|i| i.points.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_count() == 0 {
            return Err(Error::Precondition("profile data is empty".into()));
        }
        for img in &self.images {
            crate::projection::check_unit(&img.omega, "omega")?;
            crate::projection::check_unit(&img.omega0, "omega0")?;
            for w in img.points.windows(2) {
                if !(w[1].alpha > w[0].alpha) {
                    return Err(Error::Precondition(format!(
                        "image {}: angles must be strictly increasing",
                        img.id
                    )));
                }
            }
            for p in &img.points {
                if !(p.r_obs > 0.0) || !(p.sigma > 0.0) {
                    return Err(Error::Precondition(format!(
                        "image {}: radii and sigmas must be > 0",
                        img.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Cached tessellation and scattering law for repeated model evaluations.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    basis: ShapeBasis,
    law: ScatteringLaw,
}

impl ForwardModel {
    pub fn new(subdivision: usize, l_max: usize, law: ScatteringLaw) -> Self {
        Self {
            basis: ShapeBasis::new(subdivision, l_max),
            law,
        }
    }

    pub fn law(&self) -> &ScatteringLaw {
        &self.law
    }

    pub fn mesh(&self, params: &ShapeParams) -> Result<TriMesh> {
        self.basis.realize(params)
    }

    /// Modelled brightness for every record.
    pub fn brightness(&self, data: &BrightnessData, params: &ShapeParams) -> Result<Vec<f64>> {
        let mesh = self.mesh(params)?;
        Ok(brightness_on_mesh(&mesh, data, params, &self.law))
    }

    /// Modelled radii for every image, with the offsets stored in `params`.
    pub fn profiles(&self, data: &ProfileData, params: &ShapeParams) -> Result<Vec<Vec<ProfileSample>>> {
        let mesh = self.mesh(params)?;
        profiles_on_mesh(&mesh, data, params)
    }

    pub fn chi2_brightness(&self, data: &BrightnessData, params: &ShapeParams) -> Result<f64> {
        let model = self.brightness(data, params)?;
        Ok(data
            .records
            .iter()
            .zip(model)
            .map(|(r, l)| ((r.l_obs - l) / r.sigma).powi(2))
            .sum())
    }

    pub fn chi2_profile(&self, data: &ProfileData, params: &ShapeParams) -> Result<f64> {
        let model = self.profiles(data, params)?;
        Ok(data
            .images
            .iter()
            .zip(model)
            .flat_map(|(img, samples)| img.points.iter().zip(samples))
            .map(|(p, s)| ((p.r_obs - s.r_max) / p.sigma).powi(2))
            .sum())
    }
}

pub(crate) fn brightness_on_mesh(mesh: &TriMesh, data: &BrightnessData, params: &ShapeParams, law: &ScatteringLaw) -> Vec<f64> {
    data.records
        .iter()
        .map(|r| {
            let (w, w0) = body_frame_directions(&params.spin, r.time, &r.omega, &r.omega0);
            let vis = classify_facets(mesh, &w, &w0);
            disk_brightness(mesh, &vis, &w, &w0, law)
        })
        .collect()
}

pub(crate) fn profiles_on_mesh(mesh: &TriMesh, data: &ProfileData, params: &ShapeParams) -> Result<Vec<Vec<ProfileSample>>> {
    data.images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let geom = img.geometry(params, params.offset(i))?;
            let vis = classify_facets(mesh, &geom.omega, &geom.omega0);
            profile_radii(mesh, &vis, &geom).map_err(|e| match e {
                Error::NoIntersection { alpha, angle_index, .. } => Error::NoIntersection {
                    alpha,
                    image: Some(i),
                    angle_index,
                },
                other => other,
            })
        })
        .collect()
}

/// `Σ [(L_obs - L_mod)/σ]²`.
pub fn chi2_brightness(data: &BrightnessData, params: &ShapeParams, law: &ScatteringLaw, subdivision: usize) -> Result<f64> {
    ForwardModel::new(subdivision, params.l_max(), *law).chi2_brightness(data, params)
}

/// `Σ [(r_obs - r_mod)/σ]²` over all images and angles.
pub fn chi2_profile(data: &ProfileData, params: &ShapeParams, subdivision: usize) -> Result<f64> {
    ForwardModel::new(subdivision, params.l_max(), ScatteringLaw::default()).chi2_profile(data, params)
}

/// Angular-Laplacian smoothness penalty `Σ_{l≥1} [l(l+1)]² c_lm²`.
pub fn regularizer(params: &ShapeParams) -> f64 {
    params
        .active_terms()
        .filter(|&(l, _)| l >= 1)
        .map(|(l, m)| {
            let w = (l * (l + 1)) as f64;
            (w * params.get(l, m)).powi(2)
        })
        .sum()
}

/// `sqrt(χ²/N)`.
pub fn rms_deviation(chi2: f64, n_points: usize) -> Result<f64> {
    if n_points == 0 {
        return Err(Error::Domain("rms deviation needs at least one data point".into()));
    }
    if !(chi2 >= 0.0) {
        return Err(Error::Domain(format!("chi-square must be >= 0, got {chi2}")));
    }
    Ok((chi2 / n_points as f64).sqrt())
}

type EvalFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;

/// A named χ² function of the parameter vector.
#[derive(Clone)]
pub struct ModeEvaluator {
    pub name: String,
    eval: Arc<EvalFn>,
    /// Number of data points N_i behind the measure.
    pub n_points: usize,
    /// Upper bound ε_i for an acceptable χ², if known.
    pub bound: Option<f64>,
    /// True for regularizing functions treated as modes.
    pub regularizer: bool,
}

impl fmt::Debug for ModeEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeEvaluator")
            .field("name", &self.name)
            .field("n_points", &self.n_points)
            .field("bound", &self.bound)
            .field("regularizer", &self.regularizer)
            .finish_non_exhaustive()
    }
}

impl ModeEvaluator {
    pub fn new<F>(name: impl Into<String>, n_points: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            n_points,
            bound: None,
            regularizer: false,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn as_regularizer(mut self) -> Self {
        self.regularizer = true;
        self
    }

    /// Raw χ² at `p`.
    pub fn chi2(&self, p: &[f64]) -> Result<f64> {
        let v = (self.eval)(p)?;
        if !(v >= 0.0) {
            return Err(Error::Domain(format!("mode `{}` returned invalid chi-square {v}", self.name)));
        }
        Ok(v)
    }

    /// χ² raised to [`CHI2_FLOOR`], safe for logarithms.
    pub fn floored(&self, p: &[f64]) -> Result<f64> {
        self.chi2(p).map(|v| v.max(CHI2_FLOOR))
    }

    /// Copy whose χ² is multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let inner = Arc::clone(&self.eval);
        Self {
            name: self.name.clone(),
            eval: Arc::new(move |p: &[f64]| inner(p).map(|v| v * factor)),
            n_points: self.n_points,
            bound: self.bound.map(|b| b * factor),
            regularizer: self.regularizer,
        }
    }
}

/// Mapping between the free-parameter vector and [`ShapeParams`]: the
/// admissible harmonic coefficients followed by one `(x, y)` offset per
/// profile image. The spin state is held fixed.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    template: ShapeParams,
    terms: Vec<(usize, i64)>,
    n_images: usize,
}

/// Characteristic scale of harmonic coefficients.
pub const COEFF_SCALE: f64 = 0.1;

impl ParamLayout {
    pub fn new(template: ShapeParams, n_images: usize) -> Self {
        let terms = template.active_terms().collect();
        Self {
            template,
            terms,
            n_images,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len() + 2 * self.n_images
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn terms(&self) -> &[(usize, i64)] {
        &self.terms
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn template(&self) -> &ShapeParams {
        &self.template
    }

    pub fn to_vector(&self, params: &ShapeParams) -> Vec<f64> {
        let mut v: Vec<f64> = self.terms.iter().map(|&(l, m)| params.get(l, m)).collect();
        for i in 0..self.n_images {
            let o = params.offset(i);
            v.extend_from_slice(&[o.x, o.y]);
        }
        v
    }

    pub fn to_params(&self, p: &[f64]) -> Result<ShapeParams> {
        if p.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "shape parameter vector",
                expected: self.len(),
                actual: p.len(),
            });
        }
        let mut params = self.template.clone();
        for (&(l, m), &v) in self.terms.iter().zip(p) {
            params.set(l, m, v)?;
        }
        let rest = &p[self.terms.len()..];
        params.offsets = rest.chunks(2).map(|c| Vector2::new(c[0], c[1])).collect();
        Ok(params)
    }

    /// Coefficient scale [`COEFF_SCALE`]; offsets scaled by `offset_scale`.
    pub fn scales(&self, offset_scale: f64) -> Vec<f64> {
        let mut s = vec![COEFF_SCALE; self.terms.len()];
        s.extend(std::iter::repeat_n(offset_scale, 2 * self.n_images));
        s
    }
}

/// Data and model choices behind the two-mode shape problem.
#[derive(Debug, Clone)]
pub struct ShapeProblem {
    pub brightness: Arc<BrightnessData>,
    pub profiles: Arc<ProfileData>,
    pub model: Arc<ForwardModel>,
    pub layout: ParamLayout,
    /// Fixed weight of the smoothness penalty absorbed into the brightness mode.
    pub regularizer_weight: f64,
}

impl ShapeProblem {
    pub fn new(
        brightness: BrightnessData,
        profiles: ProfileData,
        law: ScatteringLaw,
        subdivision: usize,
        template: ShapeParams,
        regularizer_weight: f64,
    ) -> Result<Self> {
        brightness.validate()?;
        profiles.validate()?;
        law.validate()?;
        let model = ForwardModel::new(subdivision, template.l_max(), law);
        let layout = ParamLayout::new(template, profiles.images.len());
        Ok(Self {
            brightness: Arc::new(brightness),
            profiles: Arc::new(profiles),
            model: Arc::new(model),
            layout,
            regularizer_weight,
        })
    }

    /// χ²_L of the brightness data alone.
    pub fn chi2_brightness(&self, p: &[f64]) -> Result<f64> {
        self.model.chi2_brightness(&self.brightness, &self.layout.to_params(p)?)
    }

    pub fn chi2_profile(&self, p: &[f64]) -> Result<f64> {
        self.model.chi2_profile(&self.profiles, &self.layout.to_params(p)?)
    }

    pub fn regularizer(&self, p: &[f64]) -> Result<f64> {
        Ok(regularizer(&self.layout.to_params(p)?))
    }

    /// Brightness mode (with the weighted regularizer absorbed) followed by
    /// the profile mode.
    pub fn modes(&self) -> Vec<ModeEvaluator> {
        let b = self.clone();
        let brightness = ModeEvaluator::new("brightness", self.brightness.len(), move |p: &[f64]| {
            let params = b.layout.to_params(p)?;
            let chi2 = b.model.chi2_brightness(&b.brightness, &params)?;
            Ok(chi2 + b.regularizer_weight * regularizer(&params))
        });
        let pr = self.clone();
        let profile = ModeEvaluator::new("profile", self.profiles.point_count(), move |p: &[f64]| {
            pr.chi2_profile(p)
        });
        vec![brightness, profile]
    }

    /// Starting point: a sphere sized from the mean observed radius, with
    /// zero offsets.
    pub fn initial_guess(&self) -> Vec<f64> {
        let n = self.profiles.point_count().max(1) as f64;
        let mean_r = self
            .profiles
            .images
            .iter()
            .flat_map(|i| i.points.iter().map(|p| p.r_obs))
            .sum::<f64>()
            / n;
        let mut params = self.layout.template().clone();
        for (l, m) in self.layout.terms().to_vec() {
            let _ = params.set(l, m, 0.0);
        }
        let _ = params.set(0, 0, mean_r.max(1e-6).ln() * (4.0 * std::f64::consts::PI).sqrt());
        params.offsets = vec![Vector2::zeros(); self.layout.n_images()];
        self.layout.to_vector(&params)
    }

    /// Characteristic offset scale: a tenth of the mean observed radius.
    pub fn scales(&self) -> Vec<f64> {
        let n = self.profiles.point_count().max(1) as f64;
        let mean_r = self
            .profiles
            .images
            .iter()
            .flat_map(|i| i.points.iter().map(|p| p.r_obs))
            .sum::<f64>()
            / n;
        self.layout.scales(0.1 * mean_r.max(1e-6))
    }
}
