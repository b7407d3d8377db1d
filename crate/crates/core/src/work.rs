//! Per-trajectory thermodynamic bookkeeping.
//!
//! All energies are integers in quanta of the level spacing: heat from jump
//! counts, projective internal energy from level differences, calorimetric
//! internal energy from the two guardian photons. The first law
//! `W = dU + Q` therefore holds exactly for every sample.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::StateVector;
use crate::model::Rates;
use crate::trajectory::TrajectoryRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkKind {
    Projective,
    Calorimetric,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkSample {
    pub kind: WorkKind,
    pub tau: f64,
    pub delta_u: i64,
    pub heat: i64,
    pub value: i64,
}

impl WorkSample {
    fn new(kind: WorkKind, tau: f64, delta_u: i64, heat: i64) -> Self {
        Self { kind, tau, delta_u, heat, value: delta_u + heat }
    }
}

/// Guardian photons: `ell_i` before the drive, `ell_f` after it. `ell_f` is
/// `None` when no photon is emitted at all (zero temperature, ground state).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GuardianOutcome {
    pub ell_i: u8,
    pub ell_f: Option<u8>,
}

impl GuardianOutcome {
    /// Inferred internal-energy change plus the final guardian's heat.
    pub fn work_contribution(self) -> (i64, i64) {
        match self.ell_f {
            Some(f) => (f as i64 - self.ell_i as i64, if f == 0 { 1 } else { -1 }),
            None => (-(self.ell_i as i64), 0),
        }
    }
}

/// Heat into the bath up to and including `tau`, in quanta.
pub fn heat_up_to(record: &TrajectoryRecord, tau: f64) -> i64 {
    record.jumps.iter().take_while(|j| j.time <= tau).map(|j| j.kind.heat()).sum()
}

/// Two-measurement work at checkpoint `tau`: the final level is drawn from
/// the checkpoint populations.
pub fn projective_work<R: Rng + ?Sized>(record: &TrajectoryRecord, tau: f64, rng: &mut R) -> Result<WorkSample> {
    let checkpoint = record.checkpoint_at(tau)?;
    let m = sample_level(&checkpoint.state, rng.random());
    let delta_u = m as i64 - record.initial_level as i64;
    Ok(WorkSample::new(WorkKind::Projective, tau, delta_u, heat_up_to(record, tau)))
}

fn sample_level(state: &StateVector, u: f64) -> usize {
    let pops = state.populations();
    let total: f64 = pops.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (m, p) in pops.iter().enumerate() {
        acc += p;
        if target < acc {
            return m;
        }
    }
    pops.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// `[p_i(0|n), p_i(1|n)]`; `None` when no photon can precede the drive
/// (`n = 0` with `gamma1 = 0`).
pub fn guardian_initial_probs(n: usize, rates: &Rates) -> Option<[f64; 2]> {
    let absorb = rates.gamma1 * (n + 1) as f64;
    let emit = rates.gamma0 * n as f64;
    let denom = absorb + emit;
    (denom > 0.0).then(|| [absorb / denom, emit / denom])
}

/// `[p_f(0|m), p_f(1|m)]`; `None` when no photon follows the drive
/// (`m = 0` with `gamma1 = 0`).
pub fn guardian_final_probs_level(m: usize, rates: &Rates) -> Option<[f64; 2]> {
    let emit = rates.gamma0 * m as f64;
    let absorb = rates.gamma1 * (m + 1) as f64;
    let denom = emit + absorb;
    (denom > 0.0).then(|| [emit / denom, absorb / denom])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinalGuardianProbs {
    pub p0: f64,
    pub p1: f64,
    pub no_photon: f64,
}

/// Level mixture of the final-guardian law over the populations of `state`.
pub fn guardian_final_probs_state(state: &StateVector, rates: &Rates) -> FinalGuardianProbs {
    let pops = state.populations();
    let total: f64 = pops.iter().sum();
    let mut out = FinalGuardianProbs { p0: 0.0, p1: 0.0, no_photon: 0.0 };
    for (m, p) in pops.iter().enumerate() {
        let w = p / total;
        match guardian_final_probs_level(m, rates) {
            Some([f0, f1]) => {
                out.p0 += w * f0;
                out.p1 += w * f1;
            }
            None => out.no_photon += w,
        }
    }
    out
}

pub fn sample_initial_guardian(n: usize, rates: &Rates, u: f64) -> u8 {
    match guardian_initial_probs(n, rates) {
        Some([p0, _]) => u8::from(u >= p0),
        // Nothing precedes a ground-state start at zero temperature.
        None => 0,
    }
}

pub fn sample_final_guardian(state: &StateVector, rates: &Rates, u: f64) -> Option<u8> {
    let probs = guardian_final_probs_state(state, rates);
    if u < probs.p0 {
        Some(0)
    } else if u < probs.p0 + probs.p1 || probs.no_photon == 0.0 {
        Some(1)
    } else {
        None
    }
}

/// Calorimetric work under the two-level inference at checkpoint `tau`.
/// Draws `ell_i` and then `ell_f` from `rng`.
pub fn calorimetric_work<R: Rng + ?Sized>(
    record: &TrajectoryRecord,
    tau: f64,
    rates: &Rates,
    rng: &mut R,
) -> Result<(WorkSample, GuardianOutcome)> {
    let ell_i = sample_initial_guardian(record.initial_level, rates, rng.random());
    calorimetric_work_given(record, tau, rates, ell_i, rng)
}

/// Calorimetric work with the pre-drive photon `ell_i` already observed;
/// draws only `ell_f`.
pub fn calorimetric_work_given<R: Rng + ?Sized>(
    record: &TrajectoryRecord,
    tau: f64,
    rates: &Rates,
    ell_i: u8,
    rng: &mut R,
) -> Result<(WorkSample, GuardianOutcome)> {
    let checkpoint = record.checkpoint_at(tau)?;
    let ell_f = sample_final_guardian(&checkpoint.state, rates, rng.random());
    let guardians = GuardianOutcome { ell_i, ell_f };
    let (delta_u, guardian_heat) = guardians.work_contribution();
    let sample = WorkSample::new(WorkKind::Calorimetric, tau, delta_u, heat_up_to(record, tau) + guardian_heat);
    Ok((sample, guardians))
}

/// Law of `dU_c + guardian heat` given initial level `n` and final level `m`,
/// as `(value, probability)` pairs. Values lie in `{-1, 0, 1}`.
pub fn guardian_work_distribution(n: usize, m: usize, rates: &Rates) -> Vec<(i64, f64)> {
    let initial: Vec<(u8, f64)> = match guardian_initial_probs(n, rates) {
        Some([p0, p1]) => vec![(0, p0), (1, p1)],
        None => vec![(0, 1.0)],
    };
    let finals: Vec<(Option<u8>, f64)> = match guardian_final_probs_level(m, rates) {
        Some([p0, p1]) => vec![(Some(0), p0), (Some(1), p1)],
        None => vec![(None, 1.0)],
    };
    let mut out = Vec::with_capacity(4);
    for &(ell_i, pi) in &initial {
        for &(ell_f, pf) in &finals {
            let (du, q) = GuardianOutcome { ell_i, ell_f }.work_contribution();
            out.push((du + q, pi * pf));
        }
    }
    out
}

/// Counts of integer work values at one checkpoint. Merging adds counts, so
/// it is exact, associative and commutative.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorkHistogram {
    counts: BTreeMap<i64, u64>,
}

impl WorkHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: i64) {
        *self.counts.entry(value).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &WorkHistogram) {
        for (&v, &c) in &other.counts {
            *self.counts.entry(v).or_insert(0) += c;
        }
    }

    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &BTreeMap<i64, u64> {
        &self.counts
    }

    pub fn moments(&self) -> Result<Moments> {
        let n = self.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("{n} samples; at least 2 required")));
        }
        let nf = n as f64;
        let mean = self.counts.iter().map(|(&v, &c)| v as f64 * c as f64).sum::<f64>() / nf;
        let central = |k: i32| self.counts.iter().map(|(&v, &c)| (v as f64 - mean).powi(k) * c as f64).sum::<f64>() / nf;
        let m2 = central(2);
        let m4 = central(4);
        let variance = m2 * nf / (nf - 1.0);
        let var_of_var = (m4 - (nf - 3.0) / (nf - 1.0) * variance * variance) / nf;
        Ok(Moments {
            n,
            mean,
            variance,
            stderr_mean: (variance / nf).sqrt(),
            stderr_variance: var_of_var.max(0.0).sqrt(),
        })
    }

    /// Jackknife standard error of the unbiased variance; a cross-check on
    /// the asymptotic fourth-moment formula.
    pub fn jackknife_stderr_variance(&self) -> Result<f64> {
        let n = self.len();
        if n < 3 {
            return Err(Error::InsufficientData(format!("{n} samples; jackknife needs at least 3")));
        }
        let nf = n as f64;
        let s1: f64 = self.counts.iter().map(|(&v, &c)| v as f64 * c as f64).sum();
        let s2: f64 = self.counts.iter().map(|(&v, &c)| (v as f64).powi(2) * c as f64).sum();
        let loo: Vec<(f64, f64)> = self
            .counts
            .iter()
            .map(|(&v, &c)| {
                let v = v as f64;
                let (a, b, k) = (s1 - v, s2 - v * v, nf - 1.0);
                ((b - a * a / k) / (k - 1.0), c as f64)
            })
            .collect();
        let avg = loo.iter().map(|(s, c)| s * c).sum::<f64>() / nf;
        let spread = loo.iter().map(|(s, c)| (s - avg).powi(2) * c).sum::<f64>();
        Ok(((nf - 1.0) / nf * spread).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub stderr_mean: f64,
    pub stderr_variance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub stderr_mean: Vec<f64>,
    pub stderr_variance: Vec<f64>,
    pub histograms: Vec<WorkHistogram>,
}

impl MomentSummary {
    pub fn from_histograms(times: &[f64], histograms: Vec<WorkHistogram>) -> Result<Self> {
        if times.len() != histograms.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), actual: histograms.len() });
        }
        let moments = histograms.iter().map(WorkHistogram::moments).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: times.to_vec(),
            mean: moments.iter().map(|m| m.mean).collect(),
            variance: moments.iter().map(|m| m.variance).collect(),
            stderr_mean: moments.iter().map(|m| m.stderr_mean).collect(),
            stderr_variance: moments.iter().map(|m| m.stderr_variance).collect(),
            histograms,
        })
    }

    pub fn n_traj(&self) -> u64 {
        self.histograms.first().map_or(0, WorkHistogram::len)
    }
}

/// Summary over samples grouped by checkpoint.
pub fn summarize(samples_per_time: &[Vec<WorkSample>]) -> Result<MomentSummary> {
    let mut times = Vec::with_capacity(samples_per_time.len());
    let mut hists = Vec::with_capacity(samples_per_time.len());
    for group in samples_per_time {
        let tau = group
            .first()
            .map(|s| s.tau)
            .ok_or_else(|| Error::InsufficientData("empty sample group".into()))?;
        let mut h = WorkHistogram::new();
        for s in group {
            h.push(s.value);
        }
        times.push(tau);
        hists.push(h);
    }
    MomentSummary::from_histograms(&times, hists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_rates, PhysicalParams};
    use crate::trajectory::{Checkpoint, JumpEvent, JumpKind};
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(initial: usize, kinds: &[(f64, u8)], state: StateVector, tau: f64) -> TrajectoryRecord {
        let jumps: Vec<JumpEvent> = kinds
            .iter()
            .map(|&(time, k)| JumpEvent { time, kind: if k == 0 { JumpKind::Emission } else { JumpKind::Absorption } })
            .collect();
        let heat = jumps.iter().filter(|j| j.time <= tau).map(|j| j.kind.heat()).sum();
        TrajectoryRecord {
            initial_level: initial,
            jumps,
            checkpoints: vec![Checkpoint { time: tau, state, heat }],
            max_top_population: 0.0,
        }
    }

    fn rates(beta: f64) -> Rates {
        make_rates(&PhysicalParams::new(1.0, beta)).unwrap()
    }

    #[test]
    fn heat_sums() {
        let s = StateVector::basis(4, 0).unwrap();
        assert_eq!(heat_up_to(&record(0, &[(1.0, 0), (2.0, 0), (3.0, 1)], s.clone(), 5.0), 5.0), 1);
        assert_eq!(heat_up_to(&record(0, &[], s.clone(), 5.0), 5.0), 0);
        assert_eq!(heat_up_to(&record(0, &[(1.0, 0), (3.0, 1)], s, 5.0), 2.0), 1);
    }

    #[test]
    fn projective_work_first_law() {
        let rec = record(0, &[(1.0, 1)], StateVector::basis(4, 2).unwrap(), 3.0);
        let w = projective_work(&rec, 3.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!((w.delta_u, w.heat, w.value), (2, -1, 1));
        assert!(matches!(projective_work(&rec, 1.0, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn projective_work_zero_without_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 0..5 {
            let rec = record(n, &[], StateVector::basis(6, n).unwrap(), 0.0);
            assert_eq!(projective_work(&rec, 0.0, &mut rng).unwrap().value, 0);
        }
    }

    #[test]
    fn initial_guardian_values() {
        let r = rates(2.0);
        assert_eq!(guardian_initial_probs(0, &r), Some([1.0, 0.0]));
        assert_abs_diff_eq!(guardian_initial_probs(1, &r).unwrap()[0], 0.21301, epsilon = 1e-5);
        let hot = rates(1e-4);
        let p = guardian_initial_probs(500, &hot).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-3);
        assert_eq!(guardian_initial_probs(0, &rates(f64::INFINITY)), None);
    }

    #[test]
    fn final_guardian_values() {
        let r = rates(2.0);
        assert_eq!(guardian_final_probs_level(0, &r), Some([0.0, 1.0]));
        assert_abs_diff_eq!(guardian_final_probs_level(1, &r).unwrap()[0], 0.78699, epsilon = 1e-5);
        let cold = rates(f64::INFINITY);
        assert_eq!(guardian_final_probs_level(3, &cold), Some([1.0, 0.0]));
        assert_eq!(guardian_final_probs_level(0, &cold), None);
    }

    #[test]
    fn final_guardian_for_fock_state_matches_level_law() {
        let r = rates(1.3);
        for m in 0..6 {
            let p = guardian_final_probs_state(&StateVector::basis(6, m).unwrap(), &r);
            let [f0, f1] = guardian_final_probs_level(m, &r).unwrap();
            assert_eq!((p.p0, p.p1, p.no_photon), (f0, f1, 0.0));
        }
    }

    #[test]
    fn zero_temperature_no_photon_weight_is_ground_population() {
        let r = rates(f64::INFINITY);
        let alpha = Complex64::new(0.9, 0.0);
        let amps = Array1::from_shape_fn(30, |m| crate::fock::displacement_element(m, 0, alpha).unwrap());
        let state = StateVector::new(amps).unwrap();
        let p = guardian_final_probs_state(&state, &r);
        assert_abs_diff_eq!(p.no_photon, (-alpha.norm_sqr()).exp(), epsilon = 1e-12);
    }

    #[test]
    fn calorimetric_brackets() {
        let cases = [
            (GuardianOutcome { ell_i: 0, ell_f: Some(1) }, 0),
            (GuardianOutcome { ell_i: 0, ell_f: Some(0) }, 1),
            (GuardianOutcome { ell_i: 1, ell_f: Some(1) }, -1),
            (GuardianOutcome { ell_i: 1, ell_f: Some(0) }, 0),
            (GuardianOutcome { ell_i: 0, ell_f: None }, 0),
            (GuardianOutcome { ell_i: 1, ell_f: None }, -1),
        ];
        for (g, expected) in cases {
            let (du, q) = g.work_contribution();
            assert_eq!(du + q, expected, "{g:?}");
        }
    }

    #[test]
    fn calorimetric_sample_first_law_and_reuse() {
        let r = rates(1.0);
        let rec = record(2, &[(1.0, 0), (2.0, 0)], StateVector::basis(5, 1).unwrap(), 3.0);
        let base = ChaCha8Rng::seed_from_u64(77);
        let (a, ga) = calorimetric_work(&rec, 3.0, &r, &mut base.clone()).unwrap();
        let (b, gb) = calorimetric_work(&rec, 3.0, &r, &mut base.clone()).unwrap();
        assert_eq!((a, ga), (b, gb));
        assert_eq!(a.value, a.delta_u + a.heat);
        let (_, guardian_heat) = ga.work_contribution();
        assert_eq!(a.heat, 2 + guardian_heat);
    }

    #[test]
    fn summary_of_constant_and_symmetric_samples() {
        let mk = |v: i64| WorkSample::new(WorkKind::Projective, 1.0, v, 0);
        let s = summarize(&[vec![mk(3); 10]]).unwrap();
        assert_eq!(s.variance[0], 0.0);
        assert_eq!(s.mean[0], 3.0);
        let n = 1000;
        let group: Vec<_> = (0..n).map(|i| mk(if i % 2 == 0 { -1 } else { 1 })).collect();
        let s = summarize(&[group]).unwrap();
        assert_abs_diff_eq!(s.mean[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.variance[0], n as f64 / (n - 1) as f64, epsilon = 1e-12);
        assert_eq!(s.n_traj(), n as u64);
    }

    #[test]
    fn summary_requires_two_samples() {
        let one = vec![WorkSample::new(WorkKind::Projective, 0.0, 1, 0)];
        assert!(matches!(summarize(&[one]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn variance_stderr_agrees_with_jackknife() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut h = WorkHistogram::new();
        for _ in 0..20_000 {
            let v: i64 = rng.random_range(-3..=5) + rng.random_range(0..=2);
            h.push(v);
        }
        let m = h.moments().unwrap();
        let jk = h.jackknife_stderr_variance().unwrap();
        assert!((m.stderr_variance - jk).abs() / jk < 0.02, "{} vs {jk}", m.stderr_variance);
    }

    #[test]
    fn high_temperature_t0_guardian_moments() {
        // p_i = p_f = 1/2 limit: mean 0, second moment 1/2
        let r = rates(1e-6);
        let dist = guardian_work_distribution(400, 400, &r);
        let mean: f64 = dist.iter().map(|&(v, p)| v as f64 * p).sum();
        let second: f64 = dist.iter().map(|&(v, p)| (v * v) as f64 * p).sum();
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(second, 0.5, epsilon = 1e-5);
    }

    proptest! {
        #[test]
        fn guardian_laws_normalize(n in 0usize..200, gamma in 1e-6f64..1.0, beta in 0.01f64..50.0) {
            let r = make_rates(&PhysicalParams::new(gamma, beta)).unwrap();
            for probs in [guardian_initial_probs(n, &r), guardian_final_probs_level(n, &r)].into_iter().flatten() {
                prop_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
                prop_assert!((probs[0] + probs[1] - 1.0).abs() < 4.0 * f64::EPSILON);
            }
        }

        #[test]
        fn final_guardian_state_law_normalizes(seed in any::<u64>(), beta in prop_oneof![Just(f64::INFINITY), 0.1f64..10.0]) {
            let r = make_rates(&PhysicalParams::new(0.01, beta)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amps = Array1::from_shape_fn(10, |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let mut s = StateVector::new(amps).unwrap();
            s.normalize();
            let p = guardian_final_probs_state(&s, &r);
            prop_assert!((p.p0 + p.p1 + p.no_photon - 1.0).abs() < 1e-14);
        }

        #[test]
        fn first_law_holds_for_every_sample(seed in any::<u64>(), n in 0usize..6, m in 0usize..6, jumps in proptest::collection::vec(0u8..2, 0..8)) {
            let r = rates(1.5);
            let kinds: Vec<(f64, u8)> = jumps.iter().enumerate().map(|(i, &k)| (i as f64 + 0.5, k)).collect();
            let rec = record(n, &kinds, StateVector::basis(6, m).unwrap(), 10.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = projective_work(&rec, 10.0, &mut rng).unwrap();
            let (c, _) = calorimetric_work(&rec, 10.0, &r, &mut rng).unwrap();
            prop_assert_eq!(p.value, p.delta_u + p.heat);
            prop_assert_eq!(c.value, c.delta_u + c.heat);
            prop_assert!((-1..=1).contains(&c.delta_u));
            prop_assert_eq!(p.delta_u, m as i64 - n as i64);
        }
    }
}
