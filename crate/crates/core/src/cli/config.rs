//! Run configuration shared by all commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mce::{LambdaGridSpec, TraceOptions};
use crate::optimizer::OptimizerOptions;
use crate::projection::ScatteringLaw;
use crate::shape::SpinFile;

/// Gaussian noise added by `simulate`, as fractions of the true values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma_l: f64,
    pub sigma_r: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_l >= 0.0 && self.sigma_r >= 0.0) {
            return Err(Error::Config("noise fractions must be >= 0".into()));
        }
        Ok(())
    }
}

/// Upper bounds ε on the raw χ² of each mode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    pub brightness: Option<f64>,
    pub profile: Option<f64>,
}

/// The inversion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub l_max: usize,
    pub m_max: Option<usize>,
    /// Weight of the smoothness penalty added to the brightness χ².
    pub regularizer_weight: f64,
    /// Spin state held fixed during inversion; defaults to the one in the
    /// shape file.
    pub spin: Option<SpinFile>,
    /// Number of starts for each single-mode minimization.
    pub starts: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            l_max: 6,
            m_max: None,
            regularizer_weight: 1e-3,
            spin: None,
            starts: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationGeometry {
    /// Days.
    pub time: f64,
    /// Unit viewing direction, ecliptic frame.
    pub omega: [f64; 3],
    /// Unit illumination direction, ecliptic frame.
    pub omega0: [f64; 3],
}

/// Observation geometries for `simulate`. Explicit lists take precedence
/// over the generated defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub brightness_epochs: usize,
    pub images: usize,
    /// Profile angles per image, evenly spaced over a full turn.
    pub angles: usize,
    pub phase_min_deg: f64,
    pub phase_max_deg: f64,
    /// Viewing directions are drawn with ecliptic latitude in ±this value.
    pub max_latitude_deg: f64,
    /// Brightness epochs are spread over this many days.
    pub time_span_days: f64,
    pub epochs: Option<Vec<ObservationGeometry>>,
    pub image_geometry: Option<Vec<ObservationGeometry>>,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            brightness_epochs: 20,
            images: 5,
            angles: 36,
            phase_min_deg: 10.0,
            phase_max_deg: 25.0,
            max_latitude_deg: 60.0,
            time_span_days: 30.0,
            epochs: None,
            image_geometry: None,
        }
    }
}

/// Optimizer defaults sized for the shape problem.
fn default_optimizer() -> OptimizerOptions {
    OptimizerOptions {
        max_iterations: 400,
        gradient_tolerance: 1e-6,
        step_tolerance: 1e-9,
        value_tolerance: 1e-9,
        fd_step: 1e-5,
        ..Default::default()
    }
}

/// Configuration file contents. Relative paths are resolved against the
/// directory holding the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Ground-truth shape for `simulate`; spin source for the inversion.
    pub shape: Option<PathBuf>,
    pub brightness: PathBuf,
    pub profiles: PathBuf,
    pub scattering: ScatteringLaw,
    pub subdivision: usize,
    pub lambda_grid: LambdaGridSpec,
    pub trace: TraceOptions,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerOptions,
    pub bounds: BoundsSpec,
    pub noise: NoiseSpec,
    /// Seed for generated geometries and multi-start jitter.
    pub seed: u64,
    pub model: ModelSpec,
    pub geometry: GeometrySpec,
    pub continuity_factor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            shape: None,
            brightness: PathBuf::from("brightness.csv"),
            profiles: PathBuf::from("profiles.csv"),
            scattering: ScatteringLaw::default(),
            subdivision: 3,
            lambda_grid: LambdaGridSpec::default(),
            trace: TraceOptions::default(),
            optimizer: default_optimizer(),
            bounds: BoundsSpec::default(),
            noise: NoiseSpec::default(),
            seed: 0,
            model: ModelSpec::default(),
            geometry: GeometrySpec::default(),
            continuity_factor: 10.0,
        }
    }
}

impl RunConfig {
    /// Reads, resolves and validates a configuration file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        self.shape = self.shape.as_deref().map(join);
        self.brightness = join(&self.brightness);
        self.profiles = join(&self.profiles);
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.subdivision) {
            return Err(Error::Config(format!("subdivision must lie in [1, 6], got {}", self.subdivision)));
        }
        self.noise.validate()?;
        self.optimizer.validate()?;
        self.scattering.validate()?;
        if self.model.starts == 0 {
            return Err(Error::Config("model.starts must be >= 1".into()));
        }
        if !(self.model.regularizer_weight >= 0.0) {
            return Err(Error::Config("model.regularizer_weight must be >= 0".into()));
        }
        if !(self.continuity_factor > 1.0) {
            return Err(Error::Config("continuity_factor must be > 1".into()));
        }
        let g = &self.geometry;
        if !(0.0..180.0).contains(&g.phase_min_deg) || !(g.phase_min_deg..180.0).contains(&g.phase_max_deg) {
            return Err(Error::Config("phase angle range must satisfy 0 <= min <= max < 180".into()));
        }
        if g.angles == 0 {
            return Err(Error::Config("geometry.angles must be >= 1".into()));
        }
        for b in [self.bounds.brightness, self.bounds.profile].into_iter().flatten() {
            if !(b > 0.0) {
                return Err(Error::Config("bounds must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn shape_path(&self) -> Result<&Path> {
        self.shape
            .as_deref()
            .ok_or_else(|| Error::Config("the configuration names no shape file".into()))
    }

    pub fn require_file(path: &Path) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
        }
    }
}
