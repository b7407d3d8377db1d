//! Quantum-jump (Monte Carlo wave function) trajectories.
//!
//! Fixed-step first-order unraveling: each step draws one uniform that
//! selects no-jump, an emission (`C0`) or an absorption (`C1`) with
//! probabilities `dt <psi|C_i^dagger C_i|psi>`. The no-jump branch applies the
//! exact step propagator `U_nh(dt)`. The state is renormalized after every
//! step, so checkpointed states are normalized.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::StateVector;
use crate::model::{self, PhysicalParams, Rates};

pub const DEFAULT_N_TRAJ: usize = 100_000;
pub const DEFAULT_GRID_POINTS: usize = 101;

/// Bound on `dt * max(gamma_sigma * dim, lambda0)`.
pub const STEP_VALIDITY: f64 = 0.01;

/// Top-level population that triggers a truncation warning.
pub const TOP_LEVEL_WARN: f64 = 1e-3;
/// Ensemble-averaged top-level population that invalidates a run.
pub const TOP_LEVEL_ERROR: f64 = 1e-1;

const UNDERFLOW: f64 = 1e-300;

/// Trajectories per work unit; fixed so reductions do not depend on the
/// worker count.
pub const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JumpKind {
    /// `C0` applied: a quantum is emitted into the bath.
    Emission = 0,
    /// `C1` applied: a quantum is absorbed from the bath.
    Absorption = 1,
}

impl JumpKind {
    pub fn index(self) -> u8 {
        self as u8
    }

    /// Heat delivered to the bath, `(-1)^index` quanta.
    pub fn heat(self) -> i64 {
        match self {
            JumpKind::Emission => 1,
            JumpKind::Absorption => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub kind: JumpKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub time: f64,
    pub state: StateVector,
    /// Cumulative heat into the bath, in quanta.
    pub heat: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub initial_level: usize,
    pub jumps: Vec<JumpEvent>,
    pub checkpoints: Vec<Checkpoint>,
    /// Largest top-level population seen along the trajectory.
    pub max_top_population: f64,
}

impl TrajectoryRecord {
    pub fn checkpoint_at(&self, tau: f64) -> Result<&Checkpoint> {
        self.checkpoints
            .iter()
            .find(|c| (c.time - tau).abs() <= 1e-12 * tau.abs().max(1.0))
            .ok_or(Error::GridMismatch(tau))
    }

    pub fn truncation_warning(&self) -> bool {
        self.max_top_population > TOP_LEVEL_WARN
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub master_seed: u64,
    /// Increasing checkpoint times in `[0, drive_time]`.
    pub checkpoint_grid: Vec<f64>,
    /// Step override; `None` applies [`default_dt`].
    pub dt: Option<f64>,
}

impl EnsembleConfig {
    pub fn new(n_traj: usize, master_seed: u64, checkpoint_grid: Vec<f64>) -> Self {
        Self { n_traj, master_seed, checkpoint_grid, dt: None }
    }
}

/// `points` evenly spaced times on `[0, end]`.
pub fn uniform_grid(end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![end],
        _ => (0..points).map(|i| end * i as f64 / (points - 1) as f64).collect(),
    }
}

/// `min(0.01/(gamma_sigma dim), 0.01/lambda0, spacing/10)`, skipping terms
/// whose rate is zero.
pub fn default_dt(params: &PhysicalParams, rates: &Rates, grid: &[f64]) -> f64 {
    let mut dt = f64::INFINITY;
    let dissipative = rates.gamma_sigma * params.dim as f64;
    if dissipative > 0.0 {
        dt = dt.min(STEP_VALIDITY / dissipative);
    }
    if params.lambda0 > 0.0 {
        dt = dt.min(STEP_VALIDITY / params.lambda0);
    }
    let mut prev = 0.0;
    for &t in grid {
        if t > prev {
            dt = dt.min((t - prev) / 10.0);
        }
        prev = t;
    }
    if dt.is_finite() {
        dt
    } else {
        1.0
    }
}

fn validate_grid(grid: &[f64], drive_time: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter { name: "checkpoint_grid", reason: "empty".into() });
    }
    let mut prev = f64::NEG_INFINITY;
    for &t in grid {
        if !(t >= 0.0 && t <= drive_time * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter {
                name: "checkpoint_grid",
                reason: format!("time {t} outside [0, {drive_time}]"),
            });
        }
        if t <= prev {
            return Err(Error::InvalidParameter {
                name: "checkpoint_grid",
                reason: "times must be strictly increasing".into(),
            });
        }
        prev = t;
    }
    Ok(())
}

/// Thermal level distribution `p(n) ~ exp(-beta n)` renormalized over `dim` levels.
pub fn thermal_distribution(beta: f64, dim: usize) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::InvalidTemperature(beta));
    }
    let weights: Vec<f64> = (0..dim).map(|n| if n == 0 { 1.0 } else { (-beta * n as f64).exp() }).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

fn sample_from_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

pub fn sample_initial_level<R: Rng + ?Sized>(beta: f64, dim: usize, rng: &mut R) -> Result<usize> {
    let p = thermal_distribution(beta, dim)?;
    Ok(sample_from_cdf(&cumulative(&p), rng.random()))
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Independent random streams per trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Dynamics = 0,
    Projective = 1,
    Calorimetric = 2,
}

/// Counter-based stream split: one ChaCha key per master seed, one stream
/// per `(trajectory, purpose)`. Independent of scheduling order.
pub fn trajectory_rng(master_seed: u64, index: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64 * 3 + stream as u64);
    rng
}

/// One piece of the stepping schedule: `steps` equal steps ending on a checkpoint.
#[derive(Clone, Debug)]
struct Segment {
    start: f64,
    end: f64,
    steps: usize,
    dt: f64,
    propagator: usize,
}

/// Precomputed, read-only machinery for generating trajectories.
#[derive(Clone, Debug)]
pub struct TrajectoryEngine {
    dim: usize,
    gamma0: f64,
    gamma1: f64,
    initial_cdf: Vec<f64>,
    segments: Vec<Segment>,
    /// Row-major step propagators.
    propagators: Vec<Vec<Complex64>>,
    grid: Vec<f64>,
}

impl TrajectoryEngine {
    pub fn new(params: &PhysicalParams, rates: &Rates, config: &EnsembleConfig) -> Result<Self> {
        params.validate()?;
        validate_grid(&config.checkpoint_grid, params.drive_time)?;
        let dt_max = match config.dt {
            Some(dt) => {
                let stiff = (rates.gamma_sigma * params.dim as f64).max(params.lambda0);
                if !(dt > 0.0) || dt * stiff > STEP_VALIDITY * (1.0 + 1e-9) {
                    return Err(Error::InvalidParameter {
                        name: "dt",
                        reason: format!("dt * max(gamma_sigma dim, lambda0) = {} exceeds {STEP_VALIDITY}", dt * stiff),
                    });
                }
                dt
            }
            None => default_dt(params, rates, &config.checkpoint_grid),
        };

        let generator = model::truncated_nh_generator(params, rates)?;
        let mut segments = Vec::with_capacity(config.checkpoint_grid.len());
        let mut propagators: Vec<Vec<Complex64>> = Vec::new();
        let mut step_lengths: Vec<f64> = Vec::new();
        let mut start = 0.0;
        for &end in &config.checkpoint_grid {
            let span = end - start;
            let steps = if span > 0.0 { (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize } else { 0 };
            let dt = if steps > 0 { span / steps as f64 } else { 0.0 };
            let propagator = match step_lengths.iter().position(|&d| (d - dt).abs() <= 1e-12 * dt) {
                Some(i) => i,
                None => {
                    let u = model::no_jump_propagator(&generator, dt)?;
                    propagators.push(u.entries().iter().copied().collect());
                    step_lengths.push(dt);
                    propagators.len() - 1
                }
            };
            segments.push(Segment { start, end, steps, dt, propagator });
            start = end;
        }

        Ok(Self {
            dim: params.dim,
            gamma0: rates.gamma0,
            gamma1: rates.gamma1,
            initial_cdf: cumulative(&thermal_distribution(params.beta, params.dim)?),
            segments,
            propagators,
            grid: config.checkpoint_grid.clone(),
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(|s| s.steps).sum()
    }

    /// Samples the initial level and evolves through every checkpoint.
    pub fn evolve<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TrajectoryRecord> {
        let level = sample_from_cdf(&self.initial_cdf, rng.random());
        self.evolve_from(level, rng)
    }

    /// Evolves from the Fock state `|initial_level>`.
    pub fn evolve_from<R: Rng + ?Sized>(&self, initial_level: usize, rng: &mut R) -> Result<TrajectoryRecord> {
        let dim = self.dim;
        if initial_level >= dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: initial_level + 1 });
        }
        let mut psi = vec![Complex64::new(0.0, 0.0); dim];
        psi[initial_level] = Complex64::new(1.0, 0.0);
        let mut scratch = psi.clone();
        let mut heat = 0i64;
        let mut jumps = Vec::new();
        let mut checkpoints = Vec::with_capacity(self.segments.len());
        let mut max_top = psi[dim - 1].norm_sqr();

        for seg in &self.segments {
            let u = &self.propagators[seg.propagator];
            for step in 0..seg.steps {
                let t_end = if step + 1 == seg.steps { seg.end } else { seg.start + (step + 1) as f64 * seg.dt };
                // truncated C1 annihilates the top level, so it cannot absorb
                let (mut n_mean, mut n1_mean) = (0.0, 0.0);
                for (n, c) in psi.iter().enumerate() {
                    let p = c.norm_sqr();
                    n_mean += n as f64 * p;
                    if n + 1 < dim {
                        n1_mean += (n + 1) as f64 * p;
                    }
                }
                let p_emit = seg.dt * self.gamma0 * n_mean;
                let p_absorb = seg.dt * self.gamma1 * n1_mean;
                let r: f64 = rng.random();
                if r < p_emit {
                    // C0 = sqrt(gamma0) a; the prefactor drops out on renormalization.
                    for n in 0..dim {
                        scratch[n] = if n + 1 < dim { psi[n + 1] * ((n + 1) as f64).sqrt() } else { Complex64::new(0.0, 0.0) };
                    }
                    std::mem::swap(&mut psi, &mut scratch);
                    jumps.push(JumpEvent { time: t_end, kind: JumpKind::Emission });
                    heat += 1;
                } else if r < p_emit + p_absorb {
                    for n in 0..dim {
                        scratch[n] = if n > 0 { psi[n - 1] * (n as f64).sqrt() } else { Complex64::new(0.0, 0.0) };
                    }
                    std::mem::swap(&mut psi, &mut scratch);
                    jumps.push(JumpEvent { time: t_end, kind: JumpKind::Absorption });
                    heat -= 1;
                } else {
                    for (row, out) in scratch.iter_mut().enumerate() {
                        let coeffs = &u[row * dim..(row + 1) * dim];
                        *out = coeffs.iter().zip(psi.iter()).map(|(a, b)| a * b).sum();
                    }
                    std::mem::swap(&mut psi, &mut scratch);
                }
                let n2: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
                if !(n2 >= UNDERFLOW) {
                    return Err(Error::NormUnderflow(n2));
                }
                let inv = 1.0 / n2.sqrt();
                psi.iter_mut().for_each(|c| *c *= inv);
                max_top = max_top.max(psi[dim - 1].norm_sqr());
            }
            checkpoints.push(Checkpoint {
                time: seg.end,
                state: StateVector::new(ndarray::Array1::from(psi.clone()))?,
                heat,
            });
        }

        Ok(TrajectoryRecord { initial_level, jumps, checkpoints, max_top_population: max_top })
    }

    /// Evolves trajectory `index` of an ensemble seeded by `master_seed`.
    pub fn evolve_indexed(&self, master_seed: u64, index: usize) -> Result<TrajectoryRecord> {
        let mut rng = trajectory_rng(master_seed, index, Stream::Dynamics);
        self.evolve(&mut rng).map_err(|e| Error::Trajectory { index, source: Box::new(e) })
    }

    /// Deterministic parallel map-reduce over trajectories `0..n_traj`.
    ///
    /// Trajectories are grouped in fixed chunks of [`CHUNK`]; each chunk folds
    /// sequentially in index order and chunk results merge in chunk order, so
    /// the result does not depend on how many workers ran.
    pub fn map_reduce<T, Map, Merge>(
        &self,
        n_traj: usize,
        master_seed: u64,
        identity: impl Fn() -> T + Sync + Send,
        map: Map,
        merge: Merge,
    ) -> Result<T>
    where
        T: Send,
        Map: Fn(&mut T, usize, TrajectoryRecord) -> Result<()> + Sync + Send,
        Merge: Fn(T, T) -> T + Sync + Send,
    {
        let n_chunks = n_traj.div_ceil(CHUNK);
        let partials: Vec<Result<T>> = (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut acc = identity();
                for index in chunk * CHUNK..((chunk + 1) * CHUNK).min(n_traj) {
                    let record = self.evolve_indexed(master_seed, index)?;
                    map(&mut acc, index, record).map_err(|e| Error::Trajectory { index, source: Box::new(e) })?;
                }
                Ok(acc)
            })
            .collect();
        let mut total = identity();
        for partial in partials {
            total = merge(total, partial?);
        }
        Ok(total)
    }
}

/// Generates one trajectory from a seed of its own.
pub fn evolve_trajectory(
    params: &PhysicalParams,
    rates: &Rates,
    config: &EnsembleConfig,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let engine = TrajectoryEngine::new(params, rates, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    engine.evolve(&mut rng)
}

/// All `n_traj` records of an ensemble, in index order.
///
/// Records hold every checkpoint state; for large ensembles stream through
/// [`TrajectoryEngine::map_reduce`] instead.
pub fn run_ensemble(params: &PhysicalParams, rates: &Rates, config: &EnsembleConfig) -> Result<Vec<TrajectoryRecord>> {
    let engine = TrajectoryEngine::new(params, rates, config)?;
    engine.map_reduce(
        config.n_traj,
        config.master_seed,
        Vec::new,
        |acc, _, record| {
            acc.push(record);
            Ok(())
        },
        |mut a, mut b| {
            a.append(&mut b);
            a
        },
    )
}

/// Writes jump events as `traj_id,event_time,event_index` rows.
pub fn write_jump_dump<'a, W: Write>(
    out: W,
    jumps: impl IntoIterator<Item = (usize, &'a [JumpEvent])>,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["traj_id", "event_time", "event_index"])?;
    for (id, events) in jumps {
        for e in events {
            writer.write_record([id.to_string(), format!("{:.12e}", e.time), e.kind.index().to_string()])?;
        }
    }
    writer.flush()?;
    Ok(())
}
