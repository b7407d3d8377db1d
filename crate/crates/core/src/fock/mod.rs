//! Dense complex linear algebra on a truncated Fock space.
//!
//! Levels are indexed `0..dim`; `|n>` carries energy `n` in units of the
//! oscillator quantum (zero-point energy dropped).

mod displacement;
mod expm;

use std::ops::{Add, Mul, Sub};

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use displacement::{displacement_element, displacement_matrix, ln_factorial};
pub use expm::matrix_exponential;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Squared-norm slack accepted for a state to count as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Complex amplitudes over a truncated Fock basis.
///
/// Squared norms below one are meaningful: an unnormalized conditional state
/// carries the probability of the trajectory that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Array1<Complex64>,
}

impl StateVector {
    pub fn new(amps: Array1<Complex64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(Error::InvalidDimension(amps.len()));
        }
        Ok(Self { amps })
    }

    /// The Fock state `|level>`.
    pub fn basis(dim: usize, level: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        if level >= dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: level + 1 });
        }
        let mut amps = Array1::zeros(dim);
        amps[level] = Complex64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// Rescales to unit norm and returns the squared norm it had before.
    pub fn normalize(&mut self) -> f64 {
        let n2 = self.norm_sqr();
        if n2 > 0.0 {
            let inv = 1.0 / n2.sqrt();
            self.amps.mapv_inplace(|c| c * inv);
        }
        n2
    }

    /// Level populations `|c_m|^2`.
    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `<psi|psi'>` with the first argument conjugated.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(other.amps.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<Complex64> {
        let applied = op.apply(self)?;
        Ok(self.inner(&applied))
    }
}

/// Square complex matrix acting on [`StateVector`]s of the same dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    entries: Array2<Complex64>,
}

impl OperatorMatrix {
    pub fn new(entries: Array2<Complex64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, actual: c });
        }
        if r < 2 {
            return Err(Error::InvalidDimension(r));
        }
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { entries: Array2::zeros((dim, dim)) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: Array2::eye(dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut entries = Array2::zeros((diag.len(), diag.len()));
        for (i, &d) in diag.iter().enumerate() {
            entries[[i, i]] = Complex64::new(d, 0.0);
        }
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<Complex64> {
        self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[[row, col]]
    }

    pub fn dagger(&self) -> Self {
        Self { entries: self.entries.t().mapv(|z| z.conj()) }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { entries: self.entries.mapv(|z| z * factor) }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        Self { entries: self.entries.mapv(|z| z * factor) }
    }

    pub fn matmul(&self, rhs: &OperatorMatrix) -> Result<Self> {
        self.check_dim(rhs.dim())?;
        Ok(Self { entries: self.entries.dot(&rhs.entries) })
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.check_dim(state.dim())?;
        Ok(StateVector { amps: self.entries.dot(&state.amps) })
    }

    /// `self * rhs - rhs * self`.
    pub fn commutator(&self, rhs: &OperatorMatrix) -> Result<Self> {
        Ok(&self.matmul(rhs)? - &rhs.matmul(self)?)
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        self.entries
            .columns()
            .into_iter()
            .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.dagger()).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if self.dim() != other {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other });
        }
        Ok(())
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { entries: &self.entries + &rhs.entries }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { entries: &self.entries - &rhs.entries }
    }
}

impl Mul<Complex64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: Complex64) -> OperatorMatrix {
        self.scale(rhs)
    }
}

/// Annihilation and creation operators truncated to `dim` levels.
pub fn ladder_operators(dim: usize) -> Result<(OperatorMatrix, OperatorMatrix)> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let mut lowering = Array2::zeros((dim, dim));
    for n in 1..dim {
        lowering[[n - 1, n]] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    let lowering = OperatorMatrix { entries: lowering };
    let raising = lowering.dagger();
    Ok((lowering, raising))
}

/// `a^dagger a` on `dim` levels.
pub fn number_operator(dim: usize) -> Result<OperatorMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let diag: Vec<f64> = (0..dim).map(|n| n as f64).collect();
    Ok(OperatorMatrix::from_diagonal(&diag))
}

/// Dimensionless position and momentum quadratures,
/// `X = (a^dagger + a)/sqrt 2` and `P = i(a^dagger - a)/sqrt 2`.
pub fn quadratures(dim: usize) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let (a, ad) = ladder_operators(dim)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&ad + &a).scale_real(s);
    let p = (&ad - &a).scale(I * s);
    Ok((x, p))
}
