//! Synthetic observations of a known shape.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{GeometrySpec, NoiseSpec, ObservationGeometry, RunConfig};
use super::io;
use crate::error::{Error, Result};
use crate::gof::{brightness_on_mesh, profiles_on_mesh, BrightnessData, BrightnessRecord, ProfileData, ProfileImage, ProfilePoint};
use crate::projection::{plane_basis, ScatteringLaw};
use crate::shape::{build_mesh, ShapeFile, ShapeParams, SpinState, HOURS_PER_DAY};

/// What `simulate` used, for scoring an inversion later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthManifest {
    pub shape: ShapeFile,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub scattering: ScatteringLaw,
    pub subdivision: usize,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub brightness: BrightnessData,
    pub profiles: ProfileData,
    /// Noise-free brightness per record.
    pub true_brightness: Vec<f64>,
    /// Noise-free radii per image and angle.
    pub true_radii: Vec<Vec<f64>>,
}

fn random_direction(rng: &mut ChaCha8Rng, max_lat: f64) -> Vector3<f64> {
    let lon = rng.gen_range(0.0..TAU);
    let s = max_lat.sin();
    let lat = rng.gen_range(-s..=s).asin();
    Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}

/// Illumination direction at the given phase angle from `omega`, in a
/// random azimuth.
fn illumination(rng: &mut ChaCha8Rng, omega: &Vector3<f64>, phase: f64) -> Vector3<f64> {
    let (e1, e2) = plane_basis(omega);
    let psi = rng.gen_range(0.0..TAU);
    (omega * phase.cos() + (e1 * psi.cos() + e2 * psi.sin()) * phase.sin()).normalize()
}

fn draw(rng: &mut ChaCha8Rng, spec: &GeometrySpec, time: f64) -> ObservationGeometry {
    let omega = random_direction(rng, spec.max_latitude_deg.to_radians());
    let phase = rng.gen_range(spec.phase_min_deg..=spec.phase_max_deg).to_radians();
    let omega0 = illumination(rng, &omega, phase);
    ObservationGeometry {
        time,
        omega: omega.into(),
        omega0: omega0.into(),
    }
}

/// Brightness epochs spread over the configured span, and profile images
/// spread over one rotation, unless explicit lists are given.
pub fn observation_geometry(
    spec: &GeometrySpec,
    spin: &SpinState,
    seed: u64,
) -> (Vec<ObservationGeometry>, Vec<ObservationGeometry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = spec.brightness_epochs;
    let epochs = spec.epochs.clone().unwrap_or_else(|| {
        (0..m)
            .map(|k| {
                let t = spin.epoch + spec.time_span_days * (k as f64 + rng.gen_range(0.0..1.0)) / m as f64;
                draw(&mut rng, spec, t)
            })
            .collect()
    });
    let n = spec.images;
    let period_days = spin.period_h / HOURS_PER_DAY;
    let images = spec.image_geometry.clone().unwrap_or_else(|| {
        (0..n)
            .map(|j| {
                let t = spin.epoch + period_days * (j as f64 + 0.2 * rng.gen_range(0.0..1.0)) / n as f64;
                draw(&mut rng, spec, t)
            })
            .collect()
    });
    (epochs, images)
}

fn noisy(rng: &mut ChaCha8Rng, value: f64, fraction: f64) -> (f64, f64) {
    if fraction > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        (value * (1.0 + fraction * z), fraction * value)
    } else {
        (value, 1.0)
    }
}

/// Renders brightness and profiles of `truth` and adds relative Gaussian
/// noise. Noise-free data get unit sigmas, so rms deviations come out in
/// model units.
pub fn simulate(
    truth: &ShapeParams,
    law: &ScatteringLaw,
    subdivision: usize,
    geometry: &GeometrySpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Simulation> {
    noise.validate()?;
    law.validate()?;
    let (epochs, images) = observation_geometry(geometry, &truth.spin, seed);
    let vec3 = |a: [f64; 3]| Vector3::new(a[0], a[1], a[2]);
    let mut brightness = BrightnessData {
        records: epochs
            .iter()
            .map(|g| BrightnessRecord {
                time: g.time,
                omega: vec3(g.omega),
                omega0: vec3(g.omega0),
                l_obs: 0.0,
                sigma: 1.0,
            })
            .collect(),
    };
    let angles: Vec<f64> = (0..geometry.angles)
        .map(|k| TAU * k as f64 / geometry.angles as f64)
        .collect();
    let mut profiles = ProfileData {
        images: images
            .iter()
            .enumerate()
            .map(|(id, g)| ProfileImage {
                id,
                time: g.time,
                omega: vec3(g.omega),
                omega0: vec3(g.omega0),
                points: angles
                    .iter()
                    .map(|&alpha| ProfilePoint {
                        alpha,
                        r_obs: 1.0,
                        sigma: 1.0,
                    })
                    .collect(),
            })
            .collect(),
    };

    let mesh = build_mesh(truth, subdivision)?;
    let true_brightness = brightness_on_mesh(&mesh, &brightness, truth, law);
    let true_radii: Vec<Vec<f64>> = profiles_on_mesh(&mesh, &profiles, truth)?
        .into_iter()
        .map(|s| s.into_iter().map(|p| p.r_max).collect())
        .collect();
    if true_brightness.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Precondition(
            "an epoch sees no illuminated surface; adjust the geometry".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    for (r, &l) in brightness.records.iter_mut().zip(&true_brightness) {
        (r.l_obs, r.sigma) = noisy(&mut rng, l, noise.sigma_l);
    }
    for (img, radii) in profiles.images.iter_mut().zip(&true_radii) {
        for (p, &r) in img.points.iter_mut().zip(radii) {
            (p.r_obs, p.sigma) = noisy(&mut rng, r, noise.sigma_r);
        }
    }
    Ok(Simulation {
        brightness,
        profiles,
        true_brightness,
        true_radii,
    })
}

/// File names written by `simulate`.
pub const BRIGHTNESS_FILE: &str = "brightness.csv";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const TRUTH_SHAPE_FILE: &str = "truth_shape.json";
pub const RUN_FILE: &str = "run.json";

/// Simulates from the configured truth shape and writes the data files, the
/// truth manifest, the truth shape and a configuration for inverting them.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<()> {
    let shape_path = config.shape_path()?;
    RunConfig::require_file(shape_path)?;
    let truth = io::parse_shape_json(shape_path)?;
    let sim = simulate(
        &truth,
        &config.scattering,
        config.subdivision,
        &config.geometry,
        &config.noise,
        config.seed,
    )?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    io::write_brightness_csv(out.join(BRIGHTNESS_FILE), &sim.brightness)?;
    io::write_profile_csv(out.join(PROFILES_FILE), &sim.profiles)?;
    truth.save(out.join(TRUTH_SHAPE_FILE))?;
    io::write_json(
        out.join(TRUTH_FILE),
        &TruthManifest {
            shape: ShapeFile::from_params(&truth),
            seed: config.seed,
            noise: config.noise,
            scattering: config.scattering,
            subdivision: config.subdivision,
        },
    )?;
    let mut run = config.clone();
    run.shape = Some(TRUTH_SHAPE_FILE.into());
    run.brightness = BRIGHTNESS_FILE.into();
    run.profiles = PROFILES_FILE.into();
    io::write_json(out.join(RUN_FILE), &run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_at_fixed_phase_is_constant() {
        let spec = GeometrySpec {
            phase_min_deg: 15.0,
            phase_max_deg: 15.0,
            ..Default::default()
        };
        let sim = simulate(
            &ShapeParams::sphere(1.0, 0),
            &ScatteringLaw::default(),
            3,
            &spec,
            &NoiseSpec::default(),
            4,
        )
        .unwrap();
        let l = &sim.true_brightness;
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        assert!(l.iter().all(|v| (v - mean).abs() < 5e-3 * mean), "{l:?}");
        assert_eq!(sim.profiles.point_count(), 5 * 36);
        assert!(sim.brightness.records.iter().all(|r| r.sigma == 1.0));
    }

    #[test]
    fn generated_phase_angles_in_range() {
        let spec = GeometrySpec::default();
        let (epochs, images) = observation_geometry(&spec, &SpinState::default(), 1);
        assert_eq!((epochs.len(), images.len()), (20, 5));
        for g in epochs.iter().chain(&images) {
            let w = Vector3::from(g.omega);
            let w0 = Vector3::from(g.omega0);
            let phase = w.dot(&w0).acos().to_degrees();
            assert!((10.0 - 1e-9..=25.0 + 1e-9).contains(&phase), "{phase}");
            assert!((w.norm() - 1.0).abs() < 1e-12 && (w0.norm() - 1.0).abs() < 1e-12);
        }
    }
}
