//! Closed-form Fock matrix elements of the displacement operator
//! `D(alpha) = exp(alpha a^dagger - alpha* a)` in the untruncated basis.

use num_complex::Complex64;

use super::OperatorMatrix;
use crate::error::{Error, Result};

/// Index sum above which the factorial ratios are no longer trusted.
const MAX_INDEX_SUM: usize = 170;

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Generalized Laguerre polynomial `L_k^(a)(x)` by upward recurrence.
fn laguerre(k: usize, a: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + a - x) * cur - (jf + a) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `<m|D(alpha)|n>` via the associated Laguerre closed form.
///
/// Factorial ratios are evaluated in the log domain; indices with
/// `m + n > 170` are refused rather than returned with degraded accuracy.
pub fn displacement_element(m: usize, n: usize, alpha: Complex64) -> Result<Complex64> {
    if m + n > MAX_INDEX_SUM {
        return Err(Error::PrecisionLoss(format!(
            "displacement element <{m}|D|{n}> exceeds index sum {MAX_INDEX_SUM}"
        )));
    }
    let x = alpha.norm_sqr();
    if !x.is_finite() {
        return Err(Error::NonFinite("displacement amplitude"));
    }
    // <m|D(alpha)|n> = conj(<n|D(-alpha)|m>) covers m < n.
    let (hi, lo, amp, conj) = if m >= n { (m, n, alpha, false) } else { (n, m, -alpha, true) };
    let diff = hi - lo;
    if x == 0.0 {
        return Ok(if diff == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    }
    let lag = laguerre(lo, diff as f64, x);
    if lag == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let ln_mag = 0.5 * (ln_factorial(lo) - ln_factorial(hi)) + diff as f64 * amp.norm().ln() - 0.5 * x
        + lag.abs().ln();
    let phase = Complex64::from_polar(1.0, diff as f64 * amp.arg());
    let value = phase * (ln_mag.exp() * lag.signum());
    Ok(if conj { value.conj() } else { value })
}

/// The `dim x dim` block of the untruncated displacement operator.
pub fn displacement_matrix(dim: usize, alpha: Complex64) -> Result<OperatorMatrix> {
    let mut entries = ndarray::Array2::zeros((dim, dim));
    for m in 0..dim {
        for n in 0..dim {
            entries[[m, n]] = displacement_element(m, n, alpha)?;
        }
    }
    OperatorMatrix::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ladder_operators, matrix_exponential, quadratures, I};
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_overlap() {
        for &(re, im) in &[(0.3, 0.0), (1.1, -0.4), (0.0, 2.0)] {
            let alpha = Complex64::new(re, im);
            let d = displacement_element(0, 0, alpha).unwrap();
            assert_abs_diff_eq!(d.re, (-alpha.norm_sqr() / 2.0).exp(), epsilon = 1e-15);
            assert_abs_diff_eq!(d.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_displacement_is_identity() {
        for m in 0..6 {
            for n in 0..6 {
                let d = displacement_element(m, n, Complex64::new(0.0, 0.0)).unwrap();
                assert_eq!(d.re, if m == n { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn coherent_state_is_poissonian() {
        let alpha = Complex64::new(1.3, 0.4);
        let mu = alpha.norm_sqr();
        for m in 0..25 {
            let p = displacement_element(m, 0, alpha).unwrap().norm_sqr();
            let poisson = (-mu + m as f64 * mu.ln() - ln_factorial(m)).exp();
            assert_abs_diff_eq!(p, poisson, epsilon = 1e-14);
        }
    }

    #[test]
    fn rows_are_unit_norm_in_full_basis() {
        let alpha = Complex64::new(-0.8, 1.2);
        for n in 0..8 {
            let total: f64 = (0..120).map(|m| displacement_element(m, n, alpha).unwrap().norm_sqr()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn refuses_large_indices() {
        assert!(matches!(
            displacement_element(100, 71, Complex64::new(1.0, 0.0)),
            Err(Error::PrecisionLoss(_))
        ));
    }

    /// Truncated exponential of the drive generator against the closed form.
    #[test]
    fn matches_truncated_drive_propagator() {
        let dim = 40;
        let (_, p) = quadratures(dim).unwrap();
        // exp(-i (lambda t / sqrt 2) P) displaces by alpha = lambda t / 2.
        let alpha_re = std::f64::consts::PI / 2.0;
        let theta = alpha_re * 2.0 / std::f64::consts::SQRT_2;
        let u = matrix_exponential(&p.scale(-I * theta)).unwrap();
        let alpha = Complex64::new(alpha_re, 0.0);
        for m in 0..dim / 2 {
            for n in 0..dim / 2 {
                let exact = displacement_element(m, n, alpha).unwrap();
                assert!((u.get(m, n) - exact).norm() <= 1e-8, "m {m} n {n}");
                assert!((u.get(m, n).norm() - exact.norm()).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn complex_alpha_matches_generator() {
        let dim = 48;
        let (a, ad) = ladder_operators(dim).unwrap();
        let alpha = Complex64::new(0.9, -1.4);
        let gen = &ad.scale(alpha) - &a.scale(alpha.conj());
        let u = matrix_exponential(&gen).unwrap();
        let exact = displacement_matrix(dim / 2, alpha).unwrap();
        for m in 0..dim / 2 {
            for n in 0..dim / 2 {
                assert!((u.get(m, n) - exact.get(m, n)).norm() <= 1e-8);
            }
        }
    }
}
