//! Weak-coupling limit: the drive acts as a pure displacement and only the
//! guardian photons see the bath.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::displacement_element;
use crate::model::{bath_occupation, PhysicalParams, Rates};
use crate::work::guardian_work_distribution;

/// Final-level tail below which the `w_nk` sum stops.
pub const TAIL_TOL: f64 = 1e-10;
pub const DEFAULT_M_MAX: usize = 10;

/// Squared displacement `(lambda0 t / 2)^2`; equals the projective mean work.
pub fn mu(t: f64, lambda0: f64) -> f64 {
    let alpha = 0.5 * lambda0 * t;
    alpha * alpha
}

/// Displacement amplitude of the resonant drive after time `t`.
pub fn drive_displacement(t: f64, lambda0: f64) -> Complex64 {
    Complex64::new(0.5 * lambda0 * t, 0.0)
}

/// `(mean, variance)` of the two-measurement work.
pub fn unitary_projective_moments(t: f64, params: &PhysicalParams) -> Result<(f64, f64)> {
    let m = mu(t, params.lambda0);
    Ok((m, 2.0 * (bath_occupation(params.beta)? + 0.5) * m))
}

/// `|<m|U_u(t)|n>|^2`.
pub fn unitary_t0(m: usize, n: usize, t: f64, lambda0: f64) -> Result<f64> {
    Ok(displacement_element(m, n, drive_displacement(t, lambda0))?.norm_sqr())
}

/// Guardian-weighted `k`-th moment of the calorimetric work for a start in
/// level `n`. The final-level sum runs at least to `m_max` and continues
/// until the next term drops below [`TAIL_TOL`] past the displaced mean.
pub fn w_nk(n: usize, k: u32, t: f64, params: &PhysicalParams, rates: &Rates, m_max: usize) -> Result<f64> {
    let displaced = mu(t, params.lambda0).sqrt() + (n as f64).sqrt();
    let bulk = displaced * displaced;
    let mut total = 0.0;
    for m in 0.. {
        let t0 = unitary_t0(m, n, t, params.lambda0)?;
        let term: f64 = guardian_work_distribution(n, m, rates)
            .into_iter()
            .map(|(w, p)| p * (w as f64).powi(k as i32))
            .sum::<f64>()
            * t0;
        total += term;
        if m >= m_max && m as f64 > bulk && term.abs() < TAIL_TOL {
            return Ok(total);
        }
        if m + n >= 170 {
            break;
        }
    }
    Err(Error::PrecisionLoss(format!("w_nk tail not below {TAIL_TOL:e} before level 170")))
}

/// Thermal average of `w_nk` over the two lowest initial levels.
pub fn unitary_calorimetric_moment(k: u32, t: f64, params: &PhysicalParams, rates: &Rates) -> Result<f64> {
    let boltzmann = (-params.beta).exp();
    let w0 = w_nk(0, k, t, params, rates, DEFAULT_M_MAX)?;
    let w1 = if boltzmann > 0.0 { w_nk(1, k, t, params, rates, DEFAULT_M_MAX)? } else { 0.0 };
    Ok((w0 + w1 * boltzmann) / (1.0 + boltzmann))
}

pub fn unitary_calorimetric_moments(t: f64, params: &PhysicalParams, rates: &Rates) -> Result<(f64, f64)> {
    let m1 = unitary_calorimetric_moment(1, t, params, rates)?;
    let m2 = unitary_calorimetric_moment(2, t, params, rates)?;
    Ok((m1, m2 - m1 * m1))
}

/// Zero-temperature `(mean, variance)` of the calorimetric work.
pub fn zero_temperature_calorimetric(t: f64, lambda0: f64) -> (f64, f64) {
    let m = mu(t, lambda0);
    let survival = (-m).exp();
    (-(-m).exp_m1(), survival * survival * m.exp_m1())
}
