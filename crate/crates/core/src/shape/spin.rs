use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

/// Hours per time unit. Epochs and observation times are in days.
pub const HOURS_PER_DAY: f64 = 24.0;

/// Rotation state of the body.
///
/// Directions are rotated from the ecliptic frame into the body frame; the
/// body itself stays fixed. The rotation is `Rz(-φ(t)) · Ry(β_p - π/2) ·
/// Rz(-λ_p)` with `φ(t) = φ₀ + 2π (t - t₀) · 24 / period_h`, so the pole is
/// mapped onto the body `+z` axis and a positive rotation phase turns the
/// body counter-clockwise about its pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    /// Pole ecliptic longitude λ_p, radians.
    pub pole_lon: f64,
    /// Pole ecliptic latitude β_p, radians in [-π/2, π/2].
    pub pole_lat: f64,
    /// Sidereal rotation period, hours.
    pub period_h: f64,
    /// Rotation phase φ₀ at the epoch, radians.
    pub phase0: f64,
    /// Epoch t₀, days.
    pub epoch: f64,
}

impl Default for SpinState {
    /// Pole along ecliptic +z, 1-hour period, zero phase at t = 0.
    fn default() -> Self {
        Self {
            pole_lon: 0.0,
            pole_lat: FRAC_PI_2,
            period_h: 1.0,
            phase0: 0.0,
            epoch: 0.0,
        }
    }
}

impl SpinState {
    pub fn new(pole_lon: f64, pole_lat: f64, period_h: f64, phase0: f64, epoch: f64) -> Result<Self> {
        let spin = Self {
            pole_lon,
            pole_lat,
            period_h,
            phase0,
            epoch,
        };
        spin.validate()?;
        Ok(spin)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period_h > 0.0) || !self.period_h.is_finite() {
            return Err(Error::Domain(format!("rotation period must be > 0, got {}", self.period_h)));
        }
        if !(-FRAC_PI_2 - 1e-12..=FRAC_PI_2 + 1e-12).contains(&self.pole_lat) {
            return Err(Error::Domain(format!(
                "pole latitude must lie in [-pi/2, pi/2], got {}",
                self.pole_lat
            )));
        }
        Ok(())
    }

    /// Rotation phase at time `t` (days).
    pub fn phase_at(&self, t: f64) -> f64 {
        self.phase0 + 2.0 * PI * (t - self.epoch) * HOURS_PER_DAY / self.period_h
    }

    /// Ecliptic → body rotation at time `t`.
    pub fn ecliptic_to_body(&self, t: f64) -> Rotation3<f64> {
        let z = Vector3::z_axis();
        let y = Vector3::y_axis();
        let to_pole = Rotation3::from_axis_angle(&y, self.pole_lat - FRAC_PI_2)
            * Rotation3::from_axis_angle(&z, -self.pole_lon);
        Rotation3::from_axis_angle(&z, -self.phase_at(t)) * to_pole
    }

    /// Pole direction in the ecliptic frame.
    pub fn pole(&self) -> Unit<Vector3<f64>> {
        let (sb, cb) = self.pole_lat.sin_cos();
        let (sl, cl) = self.pole_lon.sin_cos();
        Unit::new_normalize(Vector3::new(cb * cl, cb * sl, sb))
    }
}

/// Rotates the viewing and illumination directions into the body frame.
pub fn body_frame_directions(
    spin: &SpinState,
    time: f64,
    omega_ecl: &Vector3<f64>,
    omega0_ecl: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let rot = spin.ecliptic_to_body(time);
    (rot * omega_ecl, rot * omega0_ecl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pole_up() -> SpinState {
        SpinState::new(0.0, FRAC_PI_2, 6.0, 0.0, 100.0).unwrap()
    }

    #[test]
    fn identity_at_epoch() {
        let spin = pole_up();
        let w = Vector3::new(0.3, -0.4, 0.5).normalize();
        let w0 = Vector3::new(-0.1, 0.9, 0.2).normalize();
        let (a, b) = body_frame_directions(&spin, spin.epoch, &w, &w0);
        assert_relative_eq!(a, w, epsilon = 1e-14);
        assert_relative_eq!(b, w0, epsilon = 1e-14);
    }

    #[test]
    fn full_period_is_identity() {
        let spin = pole_up();
        let w = Vector3::new(0.3, -0.4, 0.5).normalize();
        let t = spin.epoch + spin.period_h / HOURS_PER_DAY;
        let (a, _) = body_frame_directions(&spin, t, &w, &w);
        assert_relative_eq!(a, w, epsilon = 1e-12);
    }

    #[test]
    fn quarter_period_turns_x_to_minus_y() {
        let spin = pole_up();
        let t = spin.epoch + 0.25 * spin.period_h / HOURS_PER_DAY;
        let (a, _) = body_frame_directions(&spin, t, &Vector3::x(), &Vector3::x());
        assert_relative_eq!(a, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn pole_maps_to_body_z() {
        let spin = SpinState::new(1.2, -0.4, 7.3, 0.9, 3.0).unwrap();
        for t in [0.0, 1.7, 40.2] {
            let (p, _) = body_frame_directions(&spin, t, &spin.pole(), &spin.pole());
            assert_relative_eq!(p, Vector3::z(), epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_spin_rejected() {
        assert!(SpinState::new(0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(SpinState::new(0.0, 2.0, 1.0, 0.0, 0.0).is_err());
    }
}
