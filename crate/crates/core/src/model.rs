//! Physical parameterization of the driven, damped oscillator.
//!
//! Natural units throughout: hbar = 1 and the level spacing omega0 = 1, so
//! energies are in quanta and times in inverse level spacings. All dynamics
//! live in the interaction picture with respect to the bare oscillator, with
//! the rotating-wave approximation applied; the bare Hamiltonian never enters
//! a generator and energy bookkeeping uses the level index directly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{self, matrix_exponential, OperatorMatrix, I};

pub const DEFAULT_LAMBDA0: f64 = 0.01;
pub const DEFAULT_DIM: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Level spacing; fixed to 1 by the unit convention.
    pub omega0: f64,
    /// Resonant drive amplitude.
    pub lambda0: f64,
    /// Bath coupling strength.
    pub gamma: f64,
    /// Inverse temperature in units of the inverse level spacing. May be infinite.
    pub beta: f64,
    /// Drive window `[0, drive_time]`; the drive is off outside it.
    pub drive_time: f64,
    /// Fock truncation dimension.
    pub dim: usize,
}

impl PhysicalParams {
    /// Default drive (`lambda0 = 0.01`, `T = pi/lambda0`, 10 levels) with the
    /// given coupling and temperature.
    pub fn new(gamma: f64, beta: f64) -> Self {
        Self {
            omega0: 1.0,
            lambda0: DEFAULT_LAMBDA0,
            gamma,
            beta,
            drive_time: std::f64::consts::PI / DEFAULT_LAMBDA0,
            dim: DEFAULT_DIM,
        }
    }

    pub fn with_lambda0(mut self, lambda0: f64) -> Self {
        self.lambda0 = lambda0;
        self
    }

    pub fn with_drive_time(mut self, drive_time: f64) -> Self {
        self.drive_time = drive_time;
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// Hard checks fail; weak-drive and weak-coupling violations only warn so
    /// that strongly damped runs stay possible.
    pub fn validate(&self) -> Result<()> {
        if self.omega0 != 1.0 {
            return Err(Error::InvalidParameter {
                name: "omega0",
                reason: format!("level spacing is the unit of energy, got {}", self.omega0),
            });
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidTemperature(self.beta));
        }
        if self.dim < 2 {
            return Err(Error::InvalidDimension(self.dim));
        }
        if !(self.drive_time >= 0.0 && self.drive_time.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "drive_time",
                reason: format!("must be finite and non-negative, got {}", self.drive_time),
            });
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda0",
                reason: format!("must be finite and non-negative, got {}", self.lambda0),
            });
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be finite and non-negative, got {}", self.gamma),
            });
        }
        if self.lambda0 > 0.1 * self.omega0 {
            log::warn!("lambda0 = {} is not small against the level spacing (weak driving)", self.lambda0);
        }
        if self.gamma > 0.1 * self.omega0 {
            log::warn!("gamma = {} is not small against the level spacing (weak coupling)", self.gamma);
        }
        Ok(())
    }
}

/// Bath transition rates. `gamma0` drives emission into the bath
/// (`C0 ~ a`), `gamma1` absorption from it (`C1 ~ a^dagger`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma_sigma: f64,
    pub occupation: f64,
}

/// Bose occupation `1/(e^beta - 1)`; zero at infinite beta.
pub fn bath_occupation(beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidTemperature(beta));
    }
    Ok(1.0 / beta.exp_m1())
}

pub fn make_rates(params: &PhysicalParams) -> Result<Rates> {
    params.validate()?;
    let occupation = bath_occupation(params.beta)?;
    let gamma0 = params.gamma * (occupation + 1.0);
    let gamma1 = params.gamma * occupation;
    Ok(Rates { gamma0, gamma1, gamma_sigma: gamma0 + gamma1, occupation })
}

/// `C0 = sqrt(gamma0) a` and `C1 = sqrt(gamma1) a^dagger`.
pub fn jump_operators(rates: &Rates, dim: usize) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let (a, ad) = fock::ladder_operators(dim)?;
    Ok((a.scale_real(rates.gamma0.sqrt()), ad.scale_real(rates.gamma1.sqrt())))
}

/// Diagonal of `C0^dagger C0 + C1^dagger C1`, i.e. `gamma0 n + gamma1 (n + 1)`.
///
/// This is the true jump-rate operator in the untruncated basis; on the top
/// truncated level it differs from the matrix product of the truncated
/// operators.
pub fn jump_rate_diagonal(rates: &Rates, dim: usize) -> Vec<f64> {
    (0..dim).map(|n| rates.gamma0 * n as f64 + rates.gamma1 * (n + 1) as f64).collect()
}

/// Non-hermitian generator `K = (lambda0/sqrt 2) P - (i/2)(gamma_sigma n + gamma1)`,
/// so that the no-jump propagator is `U_nh(t) = exp(-i K t)`.
pub fn nh_generator(params: &PhysicalParams, rates: &Rates) -> Result<OperatorMatrix> {
    let (_, p) = fock::quadratures(params.dim)?;
    let mut k = p.scale_real(params.lambda0 * std::f64::consts::FRAC_1_SQRT_2).into_entries();
    for n in 0..params.dim {
        let decay = rates.gamma_sigma * n as f64 + rates.gamma1;
        k[[n, n]] += Complex64::new(0.0, -0.5 * decay);
    }
    OperatorMatrix::new(k)
}

/// `H - (i/2) sum C^dagger C` built from the truncated jump operators. It
/// equals [`nh_generator`] except on the top level, where the truncated `C1`
/// cannot absorb; with it the jump unraveling reproduces the truncated master
/// equation exactly.
pub fn truncated_nh_generator(params: &PhysicalParams, rates: &Rates) -> Result<OperatorMatrix> {
    let mut k = nh_generator(params, rates)?.into_entries();
    let top = params.dim - 1;
    k[[top, top]] += Complex64::new(0.0, 0.5 * rates.gamma1 * params.dim as f64);
    OperatorMatrix::new(k)
}

/// `U_nh(t) = exp(-i K t)` for a generator from [`nh_generator`].
pub fn no_jump_propagator(generator: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    matrix_exponential(&generator.scale(-I * t))
}
