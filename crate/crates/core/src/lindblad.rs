//! Deterministic density-matrix integration of the master equation
//!
//! `d rho/dt = -i[H, rho] + sum_i (C_i rho C_i^dagger - 1/2 {C_i^dagger C_i, rho})`
//!
//! with `H = (lambda0/sqrt 2) P` in the interaction picture. Serves as the
//! brute-force reference for trajectory ensembles.

use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{self, OperatorMatrix, I};
use crate::model::{self, PhysicalParams, Rates};
use crate::trajectory::{default_dt, thermal_distribution};

/// Positivity violation that aborts an integration.
pub const POSITIVITY_FAILURE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: Array2<Complex64>,
}

impl DensityMatrix {
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

    /// `|n><n|`.
    pub fn pure_level(dim: usize, level: usize) -> Result<Self> {
        let mut entries = Array2::zeros((dim, dim));
        if level >= dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: level + 1 });
        }
        entries[[level, level]] = Complex64::new(1.0, 0.0);
        Self::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.diag().sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.entries.diag().iter().map(|z| z.re).collect()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.entries[[i, j]] - self.entries[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// True when every eigenvalue is `>= -tol`, tested by a Cholesky
    /// factorization of `rho + tol I`.
    pub fn is_positive_within(&self, tol: f64) -> bool {
        let d = self.dim();
        let mut l = Array2::<Complex64>::zeros((d, d));
        for j in 0..d {
            let mut diag = self.entries[[j, j]].re + tol;
            for k in 0..j {
                diag -= l[[j, k]].norm_sqr();
            }
            if !(diag > 0.0) {
                return false;
            }
            let ljj = diag.sqrt();
            l[[j, j]] = Complex64::new(ljj, 0.0);
            for i in (j + 1)..d {
                let mut s = self.entries[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]].conj();
                }
                l[[i, j]] = s / ljj;
            }
        }
        true
    }
}

pub fn thermal_state(beta: f64, dim: usize) -> Result<DensityMatrix> {
    let p = thermal_distribution(beta, dim)?;
    let mut entries = Array2::zeros((dim, dim));
    for (n, pn) in p.into_iter().enumerate() {
        entries[[n, n]] = Complex64::new(pn, 0.0);
    }
    DensityMatrix::new(entries)
}

/// `tr(O rho)`.
pub fn expectation(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<Complex64> {
    if op.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), actual: op.dim() });
    }
    let d = rho.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            acc += op.get(i, k) * rho.entries[[k, i]];
        }
    }
    Ok(acc)
}

/// Right-hand side pieces: effective generator `K = H - (i/2) sum C^dagger C`
/// and the jump operators.
struct Liouvillian {
    k: Array2<Complex64>,
    k_dag: Array2<Complex64>,
    jumps: Vec<(Array2<Complex64>, Array2<Complex64>)>,
}

impl Liouvillian {
    fn new(params: &PhysicalParams, rates: &Rates) -> Result<Self> {
        let (_, p) = fock::quadratures(params.dim)?;
        let (c0, c1) = model::jump_operators(rates, params.dim)?;
        let decay = &c0.dagger().matmul(&c0)? + &c1.dagger().matmul(&c1)?;
        let k = &p.scale_real(params.lambda0 * std::f64::consts::FRAC_1_SQRT_2) - &decay.scale(I * 0.5);
        let k = k.into_entries();
        let k_dag = k.t().mapv(|z| z.conj());
        let jumps = [c0, c1]
            .into_iter()
            .filter(|c| c.max_abs() > 0.0)
            .map(|c| {
                let dag = c.dagger().into_entries();
                (c.into_entries(), dag)
            })
            .collect();
        Ok(Self { k, k_dag, jumps })
    }

    fn apply(&self, rho: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = (self.k.dot(rho) - rho.dot(&self.k_dag)).mapv(|z| -I * z);
        for (c, c_dag) in &self.jumps {
            out = out + c.dot(rho).dot(c_dag);
        }
        out
    }
}

/// Default ODE step: a tenth of the trajectory step for the same grid.
pub fn default_step(params: &PhysicalParams, rates: &Rates, grid: &[f64]) -> f64 {
    default_dt(params, rates, grid) / 10.0
}

/// Integrates from `t = 0` and returns the state at each grid time.
pub fn integrate(rho0: &DensityMatrix, params: &PhysicalParams, rates: &Rates, grid: &[f64]) -> Result<Vec<DensityMatrix>> {
    integrate_with_step(rho0, params, rates, grid, default_step(params, rates, grid))
}

/// Classical RK4 with steps no longer than `max_step`, landing exactly on
/// every grid time.
pub fn integrate_with_step(
    rho0: &DensityMatrix,
    params: &PhysicalParams,
    rates: &Rates,
    grid: &[f64],
    max_step: f64,
) -> Result<Vec<DensityMatrix>> {
    params.validate()?;
    if rho0.dim() != params.dim {
        return Err(Error::DimensionMismatch { expected: params.dim, actual: rho0.dim() });
    }
    if !(max_step > 0.0) {
        return Err(Error::InvalidParameter { name: "max_step", reason: format!("{max_step}") });
    }
    let lv = Liouvillian::new(params, rates)?;
    let mut rho = rho0.entries.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &target in grid {
        if target < t {
            return Err(Error::InvalidParameter { name: "grid", reason: "times must be increasing".into() });
        }
        let span = target - t;
        let steps = if span > 0.0 { (span / max_step * (1.0 - 1e-12)).ceil().max(1.0) as usize } else { 0 };
        if steps > 0 {
            let h = span / steps as f64;
            for _ in 0..steps {
                let k1 = lv.apply(&rho);
                let k2 = lv.apply(&(&rho + &k1.mapv(|z| z * (h / 2.0))));
                let k3 = lv.apply(&(&rho + &k2.mapv(|z| z * (h / 2.0))));
                let k4 = lv.apply(&(&rho + &k3.mapv(|z| z * h)));
                rho = rho + (k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (h / 6.0));
            }
        }
        t = target;
        let state = DensityMatrix::new(rho.clone())?;
        if !state.is_positive_within(POSITIVITY_FAILURE) {
            return Err(Error::IntegratorFailure(format!("positivity violated beyond {POSITIVITY_FAILURE:e} at t = {t}")));
        }
        out.push(state);
    }
    Ok(out)
}

/// Largest relative change of `<n>` or `<n^2>` over the grid when the
/// truncation dimension is doubled, starting from the thermal state.
pub fn truncation_convergence(params: &PhysicalParams, rates: &Rates, grid: &[f64]) -> Result<f64> {
    let moments = |dim: usize| -> Result<Vec<(f64, f64)>> {
        let p = params.clone().with_dim(dim);
        let states = integrate(&thermal_state(p.beta, dim)?, &p, rates, grid)?;
        Ok(states
            .iter()
            .map(|rho| {
                let pops = rho.populations();
                let n1: f64 = pops.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
                let n2: f64 = pops.iter().enumerate().map(|(n, p)| (n * n) as f64 * p).sum();
                (n1, n2)
            })
            .collect())
    };
    let base = moments(params.dim)?;
    let doubled = moments(params.dim * 2)?;
    let rel = |a: f64, b: f64| if b.abs() > 1e-12 { ((a - b) / b).abs() } else { (a - b).abs() };
    Ok(base.iter().zip(&doubled).map(|(a, b)| rel(a.0, b.0).max(rel(a.1, b.1))).fold(0.0, f64::max))
}

/// Writes `t,p0,...,p{D-1}` rows.
pub fn write_populations<W: Write>(mut out: W, grid: &[f64], states: &[DensityMatrix], header: &[String]) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let dim = states.first().map_or(0, DensityMatrix::dim);
    let mut writer = csv::Writer::from_writer(out);
    let mut cols = vec!["t".to_string()];
    cols.extend((0..dim).map(|n| format!("p{n}")));
    writer.write_record(&cols)?;
    for (t, rho) in grid.iter().zip(states) {
        let mut row = vec![format!("{t:.10e}")];
        row.extend(rho.populations().iter().map(|p| format!("{p:.12e}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
