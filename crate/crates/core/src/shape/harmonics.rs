//! Real orthonormal spherical harmonics.
//!
//! Convention used everywhere in the crate:
//!
//! ```text
//! Y_l^0      = N_l0 P_l^0(cos θ)
//! Y_l^m      = √2 N_lm P_l^m(cos θ) cos(mφ)     m > 0
//! Y_l^{-m}   = √2 N_lm P_l^m(cos θ) sin(mφ)     m > 0
//! N_lm       = sqrt((2l+1)/(4π) · (l-m)!/(l+m)!)
//! ```
//!
//! `P_l^m` is the associated Legendre function *without* the Condon–Shortley
//! factor `(-1)^m`, so every basis function is positive near θ = 0⁺ for
//! φ = 0 (m ≥ 0). The basis is orthonormal on S² with respect to dΩ.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of `(l, m)` pairs with `l ≤ l_max`.
pub const fn coeff_count(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Flat index of `(l, m)` in an `l`-major layout with `m = -l..=l`.
pub fn coeff_index(l: usize, m: i64) -> usize {
    l * l + (l as i64 + m) as usize
}

/// Inverse of [`coeff_index`].
pub fn index_to_lm(index: usize) -> (usize, i64) {
    let l = (index as f64).sqrt().floor() as usize;
    // guard against rounding in the square root
    let l = if (l + 1) * (l + 1) <= index { l + 1 } else { l };
    let m = index as i64 - (l * l) as i64 - l as i64;
    (l, m)
}

/// Evaluates a single real orthonormal harmonic `Y_l^m(θ, φ)`.
pub fn eval_sh_basis(l: i64, m: i64, theta: f64, phi: f64) -> Result<f64> {
    if l < 0 || m.abs() > l {
        return Err(Error::Domain(format!(
            "spherical harmonic order requires |m| <= l, got l={l}, m={m}"
        )));
    }
    let l = l as usize;
    let ma = m.unsigned_abs() as usize;
    let plm = normalized_legendre_column(l, ma, theta.cos(), theta.sin());
    Ok(angular_factor(m, phi) * plm[l - ma])
}

/// Fills `out` with every `Y_l^m(θ, φ)` for `l ≤ l_max`, indexed by
/// [`coeff_index`].
pub fn eval_sh_all(l_max: usize, theta: f64, phi: f64, out: &mut [f64]) {
    debug_assert!(out.len() >= coeff_count(l_max));
    let (x, s) = (theta.cos(), theta.sin());
    for m in 0..=l_max {
        let column = normalized_legendre_column(l_max, m, x, s);
        let cos_m = (m as f64 * phi).cos();
        let sin_m = (m as f64 * phi).sin();
        for l in m..=l_max {
            let p = column[l - m];
            if m == 0 {
                out[coeff_index(l, 0)] = p;
            } else {
                out[coeff_index(l, m as i64)] = std::f64::consts::SQRT_2 * p * cos_m;
                out[coeff_index(l, -(m as i64))] = std::f64::consts::SQRT_2 * p * sin_m;
            }
        }
    }
}

fn angular_factor(m: i64, phi: f64) -> f64 {
    match m {
        0 => 1.0,
        m if m > 0 => std::f64::consts::SQRT_2 * (m as f64 * phi).cos(),
        m => std::f64::consts::SQRT_2 * ((-m) as f64 * phi).sin(),
    }
}

/// Returns `N_lm P_l^m(x)` for `l = m..=l_max` at fixed order `m`, using the
/// standard three-term recurrence on normalized functions.
fn normalized_legendre_column(l_max: usize, m: usize, x: f64, s: f64) -> Vec<f64> {
    let mut column = Vec::with_capacity(l_max + 1 - m.min(l_max));
    if m > l_max {
        return column;
    }
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for k in 1..=m {
        let k = k as f64;
        pmm *= ((2.0 * k + 1.0) / (2.0 * k)).sqrt() * s;
    }
    column.push(pmm);
    if l_max == m {
        return column;
    }
    let mut prev2 = pmm;
    let mut prev1 = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
    column.push(prev1);
    let mf = m as f64;
    for l in (m + 2)..=l_max {
        let lf = l as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
        let next = a * (x * prev1 - b * prev2);
        column.push(next);
        prev2 = prev1;
        prev1 = next;
    }
    column
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_and_dipole_values() {
        let y00 = eval_sh_basis(0, 0, 0.3, 1.7).unwrap();
        assert_relative_eq!(y00, 0.282_094_791_773_878_1, epsilon = 1e-15);
        let y10 = eval_sh_basis(1, 0, 0.0, 2.0).unwrap();
        assert_relative_eq!(y10, (3.0 / (4.0 * PI)).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(y10, 0.488_602_511_902_919_9, epsilon = 1e-15);
    }

    #[test]
    fn rejects_invalid_order() {
        assert!(matches!(eval_sh_basis(2, 3, 0.1, 0.1), Err(Error::Domain(_))));
        assert!(eval_sh_basis(2, -3, 0.1, 0.1).is_err());
    }

    #[test]
    fn index_round_trip() {
        for l in 0..10usize {
            for m in -(l as i64)..=(l as i64) {
                assert_eq!(index_to_lm(coeff_index(l, m)), (l, m));
            }
        }
        assert_eq!(coeff_index(8, 8) + 1, coeff_count(8));
    }

    #[test]
    fn batch_matches_single() {
        let mut all = vec![0.0; coeff_count(6)];
        eval_sh_all(6, 1.1, -0.4, &mut all);
        for (i, v) in all.iter().enumerate() {
            let (l, m) = index_to_lm(i);
            let single = eval_sh_basis(l as i64, m, 1.1, -0.4).unwrap();
            assert_relative_eq!(*v, single, epsilon = 1e-14);
        }
    }
}
