//! Dilated processes and their simulation.
//!
//! A [`DilatedProcess`] is a system of dimension `d_sys` coupled to an
//! environment of dimension `d_env`, prepared in a joint initial state and
//! evolved by one channel per step between `n` probe times. The composite
//! basis index is `x_sys * d_env + x_env`: the system is the slow (left)
//! Kronecker factor throughout.
//!
//! At each probe time the system is either measured in the computational
//! basis -- a projective, invasive operation implemented by conjugation with
//! `P_x (x) I_env` -- or left completely untouched. The two options are *not*
//! related by marginalization, which is exactly why families of distributions
//! over all probing patterns carry more information than the fully measured
//! distribution alone.
//!
//! [`run_schedule`] produces the joint outcome distribution for one pattern
//! by propagating subnormalized joint states along every outcome branch;
//! [`all_pattern_statistics`] assembles the complete family. The
//! [`trajectory`] module re-computes the same distributions by an unrelated
//! pure-state method and exists purely as a cross-check.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::stats::{self, JointDistribution, StatisticsFamily};

pub mod trajectory;

/// Tolerance for validating states (Hermiticity, positivity, unit trace) and
/// channels (trace preservation).
pub const TOL_VALIDATION: f64 = 1e-10;

/// Exhaustive pattern enumeration is capped at this many probe times
/// (2^12 = 4096 patterns).
pub const MAX_ENUMERATED_TIMES: usize = 12;

// ---------------------------------------------------------------------------
// Gates
// ---------------------------------------------------------------------------

/// Common fixed operators, all in the computational basis and the
/// system-slow index convention.
pub mod gates {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn hadamard() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::new(2, 2, vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]).unwrap()
    }

    pub fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap()
    }

    pub fn pauli_y() -> ComplexMatrix {
        ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap()
    }

    pub fn pauli_z() -> ComplexMatrix {
        ComplexMatrix::new(2, 2, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]).unwrap()
    }

    /// Exchange of two `d`-dimensional factors: `|a, b> -> |b, a>`.
    pub fn swap(d: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(d * d, d * d, |r, col| {
            let (a, b) = (col / d, col % d);
            if r == b * d + a {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    /// Qubit-qubit CNOT flipping the *system* when the environment is 1:
    /// `|s, e> -> |s xor e, e>`.
    pub fn cnot_environment_control() -> ComplexMatrix {
        ComplexMatrix::from_fn(4, 4, |r, col| {
            let (s, e) = (col / 2, col % 2);
            if r == (s ^ e) * 2 + e {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    /// Qubit-qubit CNOT flipping the *environment* when the system is 1:
    /// `|s, e> -> |s, e xor s>`.
    pub fn cnot_system_control() -> ComplexMatrix {
        ComplexMatrix::from_fn(4, 4, |r, col| {
            let (s, e) = (col / 2, col % 2);
            if r == s * 2 + (e ^ s) {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// A validated density operator: Hermitian, positive semidefinite and of
/// unit trace, all within [`TOL_VALIDATION`].
///
/// Simulation internals deliberately work on raw [`ComplexMatrix`] values
/// instead: outcome branches carry *subnormalized* states whose trace is the
/// probability of the branch, and those are a different role from a state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidState {
                reason: format!("matrix is {}x{}", matrix.rows(), matrix.cols()),
            });
        }
        if !matrix.is_hermitian(TOL_VALIDATION) {
            return Err(Error::InvalidState {
                reason: "matrix is not Hermitian".into(),
            });
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TOL_VALIDATION || trace.im.abs() > TOL_VALIDATION {
            return Err(Error::InvalidState {
                reason: format!("trace is {:+e}{:+e}i, expected 1", trace.re, trace.im),
            });
        }
        let eigenvalues = matrix.hermitian_eigenvalues()?;
        if let Some(&min) = eigenvalues.first() {
            if min < -TOL_VALIDATION {
                return Err(Error::InvalidState {
                    reason: format!("negative eigenvalue {min:+e}"),
                });
            }
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// The maximally mixed state `I/d`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale(Complex64::new(1.0 / dim as f64, 0.0)),
        }
    }

    /// Pure state `|psi><psi|` from a column vector, which must be normalized.
    pub fn pure(ket: &ComplexMatrix) -> Result<Self> {
        if ket.cols() != 1 {
            return Err(Error::InvalidState {
                reason: "pure state constructor expects a column vector".into(),
            });
        }
        Self::new(ket.matmul(&ket.dagger())?)
    }

    /// Computational basis state `|i><i|`.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(Error::OutcomeOutOfRange { outcome: i, dim });
        }
        Self::pure(&ComplexMatrix::basis_column(dim, i))
    }
}

impl Serialize for DensityOperator {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.matrix.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityOperator {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let matrix = ComplexMatrix::deserialize(deserializer)?;
        DensityOperator::new(matrix).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// A completely positive trace-preserving map in Kraus form.
///
/// Construction validates the completeness relation `sum_k K_k^dag K_k = I`
/// within [`TOL_VALIDATION`]; complete positivity is automatic in this
/// representation.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    dim: usize,
    kraus_ops: Vec<ComplexMatrix>,
}

impl KrausChannel {
    pub fn new(kraus_ops: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus_ops.first().ok_or_else(|| Error::InvalidChannel {
            reason: "a channel needs at least one Kraus operator".into(),
        })?;
        if !first.is_square() {
            return Err(Error::InvalidChannel {
                reason: format!("Kraus operators must be square, got {}x{}", first.rows(), first.cols()),
            });
        }
        let dim = first.rows();
        for (i, k) in kraus_ops.iter().enumerate() {
            if k.rows() != dim || k.cols() != dim {
                return Err(Error::InvalidChannel {
                    reason: format!(
                        "Kraus operator {i} is {}x{}, expected {dim}x{dim}",
                        k.rows(),
                        k.cols()
                    ),
                });
            }
        }
        let mut completeness = ComplexMatrix::zeros(dim, dim);
        for k in &kraus_ops {
            completeness = completeness.add(&k.dagger().matmul(k)?);
        }
        let deviation = completeness.max_abs_diff(&ComplexMatrix::identity(dim));
        if deviation > TOL_VALIDATION {
            return Err(Error::InvalidChannel {
                reason: format!(
                    "Kraus operators violate the completeness relation by {deviation:e}"
                ),
            });
        }
        Ok(Self { dim, kraus_ops })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            kraus_ops: vec![ComplexMatrix::identity(dim)],
        }
    }

    /// Unitary evolution as a single-operator channel.
    pub fn from_unitary(u: ComplexMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    /// Traces out the system and re-prepares it in `|target>`, leaving the
    /// environment untouched: Kraus operators `|target><i| (x) I_env`.
    pub fn discard_and_reprepare_system(
        d_sys: usize,
        d_env: usize,
        target: usize,
    ) -> Result<Self> {
        if target >= d_sys {
            return Err(Error::OutcomeOutOfRange {
                outcome: target,
                dim: d_sys,
            });
        }
        let id_env = ComplexMatrix::identity(d_env);
        let tgt = ComplexMatrix::basis_column(d_sys, target);
        let ops = (0..d_sys)
            .map(|i| {
                let flip = tgt.matmul(&ComplexMatrix::basis_column(d_sys, i).dagger())?;
                Ok(flip.kron(&id_env))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ops)
    }

    /// Embeds a channel acting on the system alone into the joint space
    /// (`K -> K (x) I_env`).
    pub fn embedded_on_system(&self, d_env: usize) -> Self {
        let id_env = ComplexMatrix::identity(d_env);
        Self {
            dim: self.dim * d_env,
            kraus_ops: self.kraus_ops.iter().map(|k| k.kron(&id_env)).collect(),
        }
    }

    /// Embeds a channel acting on the environment alone into the joint space
    /// (`K -> I_sys (x) K`).
    pub fn embedded_on_environment(&self, d_sys: usize) -> Self {
        let id_sys = ComplexMatrix::identity(d_sys);
        Self {
            dim: d_sys * self.dim,
            kraus_ops: self.kraus_ops.iter().map(|k| id_sys.kron(k)).collect(),
        }
    }

    /// Sequential composition: first `self`, then `later`, returned as a
    /// single channel with the pairwise Kraus products.
    pub fn then(&self, later: &KrausChannel) -> Result<KrausChannel> {
        if self.dim != later.dim {
            return Err(Error::InvalidChannel {
                reason: format!(
                    "cannot compose a dimension-{} channel with a dimension-{} channel",
                    self.dim, later.dim
                ),
            });
        }
        let mut ops = Vec::with_capacity(self.kraus_ops.len() * later.kraus_ops.len());
        for b in &later.kraus_ops {
            for a in &self.kraus_ops {
                ops.push(b.matmul(a)?);
            }
        }
        KrausChannel::new(ops)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.kraus_ops
    }

    /// Applies the channel to a density-operator-like matrix (normalized or
    /// subnormalized); the trace is preserved either way.
    pub fn apply(&self, state: &ComplexMatrix) -> Result<ComplexMatrix> {
        if state.rows() != self.dim || state.cols() != self.dim {
            return Err(Error::ShapeMismatch {
                left_rows: self.dim,
                left_cols: self.dim,
                right_rows: state.rows(),
                right_cols: state.cols(),
            });
        }
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus_ops {
            out = out.add(&k.matmul(state)?.matmul(&k.dagger())?);
        }
        Ok(out)
    }

    /// Typed variant of [`Self::apply`] for normalized states.
    pub fn apply_state(&self, state: &DensityOperator) -> Result<DensityOperator> {
        DensityOperator::new(self.apply(state.matrix())?)
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelRepr {
    kraus_ops: Vec<ComplexMatrix>,
}

impl Serialize for KrausChannel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ChannelRepr {
            kraus_ops: self.kraus_ops.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KrausChannel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ChannelRepr::deserialize(deserializer)?;
        KrausChannel::new(repr.kraus_ops).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Projective system measurement
// ---------------------------------------------------------------------------

/// Rank-1 computational-basis projector `|outcome><outcome|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projector {
    dim: usize,
    outcome: usize,
}

impl Projector {
    pub fn new(dim: usize, outcome: usize) -> Result<Self> {
        if outcome >= dim {
            return Err(Error::OutcomeOutOfRange { outcome, dim });
        }
        Ok(Self { dim, outcome })
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.dim, self.dim);
        m[(self.outcome, self.outcome)] = Complex64::new(1.0, 0.0);
        m
    }

    /// The projector embedded on the system factor of a joint space.
    pub fn embedded(&self, d_env: usize) -> ComplexMatrix {
        self.matrix().kron(&ComplexMatrix::identity(d_env))
    }
}

/// Projects a joint (possibly subnormalized) state onto system outcome `x`:
/// returns `(P_x (x) I) rho (P_x (x) I)` and the outcome probability
/// `tr[(P_x (x) I) rho]` relative to the trace of `rho`.
///
/// Because `P_x` is rank-1 and diagonal, the conjugation keeps exactly the
/// system-block `(x, x)` of `rho` and zeroes everything else.
pub fn measure_system(
    state: &ComplexMatrix,
    d_sys: usize,
    d_env: usize,
    outcome: usize,
) -> Result<(ComplexMatrix, f64)> {
    if !state.is_square() || state.rows() != d_sys * d_env {
        return Err(Error::BadFactorization {
            dim: state.rows(),
            first: d_sys,
            second: d_env,
        });
    }
    if outcome >= d_sys {
        return Err(Error::OutcomeOutOfRange {
            outcome,
            dim: d_sys,
        });
    }
    let mut projected = ComplexMatrix::zeros(state.rows(), state.rows());
    let mut probability = 0.0;
    for e1 in 0..d_env {
        let r = outcome * d_env + e1;
        probability += state[(r, r)].re;
        for e2 in 0..d_env {
            let c = outcome * d_env + e2;
            projected[(r, c)] = state[(r, c)];
        }
    }
    Ok((projected, probability))
}

// ---------------------------------------------------------------------------
// Processes and schedules
// ---------------------------------------------------------------------------

/// A system-environment process probed at `n_times` times, with one joint
/// channel per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedProcess {
    d_sys: usize,
    d_env: usize,
    initial_state: DensityOperator,
    steps: Vec<KrausChannel>,
}

impl DilatedProcess {
    pub fn new(
        d_sys: usize,
        d_env: usize,
        initial_state: DensityOperator,
        steps: Vec<KrausChannel>,
    ) -> Result<Self> {
        if d_sys < 2 {
            return Err(Error::InvalidProcess {
                reason: format!("system dimension {d_sys} is too small to measure"),
            });
        }
        if d_env < 1 {
            return Err(Error::InvalidProcess {
                reason: "environment dimension must be at least 1".into(),
            });
        }
        let joint = d_sys * d_env;
        if initial_state.dim() != joint {
            return Err(Error::InvalidProcess {
                reason: format!(
                    "initial state has dimension {}, expected {joint}",
                    initial_state.dim()
                ),
            });
        }
        for (i, step) in steps.iter().enumerate() {
            if step.dim() != joint {
                return Err(Error::InvalidProcess {
                    reason: format!("step {i} has dimension {}, expected {joint}", step.dim()),
                });
            }
        }
        Ok(Self {
            d_sys,
            d_env,
            initial_state,
            steps,
        })
    }

    pub fn d_sys(&self) -> usize {
        self.d_sys
    }

    pub fn d_env(&self) -> usize {
        self.d_env
    }

    pub fn n_times(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn initial_state(&self) -> &DensityOperator {
        &self.initial_state
    }

    pub fn steps(&self) -> &[KrausChannel] {
        &self.steps
    }
}

#[derive(Serialize, Deserialize)]
struct ProcessRepr {
    d_sys: usize,
    d_env: usize,
    n_times: usize,
    initial_state: DensityOperator,
    steps: Vec<KrausChannel>,
}

impl Serialize for DilatedProcess {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ProcessRepr {
            d_sys: self.d_sys,
            d_env: self.d_env,
            n_times: self.n_times(),
            initial_state: self.initial_state.clone(),
            steps: self.steps.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DilatedProcess {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ProcessRepr::deserialize(deserializer)?;
        if repr.n_times != repr.steps.len() + 1 {
            return Err(serde::de::Error::custom(format!(
                "n_times is {} but there are {} steps (expected n_times - 1)",
                repr.n_times,
                repr.steps.len()
            )));
        }
        DilatedProcess::new(repr.d_sys, repr.d_env, repr.initial_state, repr.steps)
            .map_err(serde::de::Error::custom)
    }
}

/// Which probe times are measured, as a bitmask over `n_times` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeSchedule {
    n_times: usize,
    mask: u32,
}

impl ProbeSchedule {
    pub fn from_mask(n_times: usize, mask: u32) -> Result<Self> {
        if n_times == 0 || n_times > 32 {
            return Err(Error::InvalidPattern {
                pattern: format!("{mask:b}"),
                reason: format!("unsupported number of probe times: {n_times}"),
            });
        }
        if n_times < 32 && mask >= 1 << n_times {
            return Err(Error::InvalidPattern {
                pattern: format!("{mask:b}"),
                reason: format!("mask has bits beyond the {n_times} probe times"),
            });
        }
        Ok(Self { n_times, mask })
    }

    /// Parses `"1011"`-style strings, `t1` leftmost.
    pub fn from_pattern(pattern: &str) -> Result<Self> {
        let mask = stats::pattern_to_mask(pattern, pattern.len())?;
        Self::from_mask(pattern.len(), mask)
    }

    pub fn all_measured(n_times: usize) -> Result<Self> {
        let mask = if n_times >= 32 { u32::MAX } else { (1u32 << n_times) - 1 };
        Self::from_mask(n_times, mask)
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn pattern(&self) -> String {
        stats::mask_to_pattern(self.mask, self.n_times)
    }

    pub fn is_measured(&self, time: usize) -> bool {
        time < self.n_times && self.mask & (1 << time) != 0
    }

    pub fn measured_times(&self) -> Vec<usize> {
        stats::times_of_mask(self.mask, self.n_times)
    }

    pub fn count_measured(&self) -> usize {
        self.mask.count_ones() as usize
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

fn check_schedule(process: &DilatedProcess, schedule: &ProbeSchedule) -> Result<()> {
    if schedule.n_times() != process.n_times() {
        return Err(Error::ScheduleMismatch {
            schedule_times: schedule.n_times(),
            process_times: process.n_times(),
        });
    }
    Ok(())
}

/// Joint outcome distribution of one probing pattern.
///
/// Every outcome branch carries its own subnormalized joint state: measuring
/// at a time splits each branch into `d_sys` projected branches, while an
/// unmeasured time applies no operation at all. The branch traces after the
/// final time are the outcome probabilities. Probabilities are exact up to
/// floating-point round-off; no sampling is involved.
pub fn run_schedule(
    process: &DilatedProcess,
    schedule: &ProbeSchedule,
) -> Result<JointDistribution> {
    check_schedule(process, schedule)?;
    let d = process.d_sys();
    // Evolution after the last measured time cannot influence any outcome
    // (the steps preserve the trace of every branch), so propagation stops
    // there.
    let horizon = schedule.measured_times().last().copied().unwrap_or(0);
    // Branches in lexicographic outcome order; measuring appends the newest
    // outcome as the fastest-varying digit, so the earliest measured time
    // ends up varying slowest, matching the distribution layout.
    let mut branches = vec![process.initial_state().matrix().clone()];
    for t in 0..=horizon {
        if schedule.is_measured(t) {
            let mut next = Vec::with_capacity(branches.len() * d);
            for state in &branches {
                for outcome in 0..d {
                    let (projected, _) = measure_system(state, d, process.d_env(), outcome)?;
                    next.push(projected);
                }
            }
            branches = next;
        }
        if t < horizon {
            let step = &process.steps()[t];
            for state in &mut branches {
                *state = step.apply(state)?;
            }
        }
    }
    let probs: Vec<f64> = branches.iter().map(|b| b.trace().re).collect();
    JointDistribution::new(process.n_times(), schedule.measured_times(), d, probs).map_err(|e| {
        match e {
            // A bad distribution out of a validated process is a simulator
            // bug, not an input error.
            Error::NotNormalized { sum, .. } => Error::Internal {
                reason: format!("simulated branch probabilities sum to {sum}"),
            },
            Error::NegativeProbability { value, index } => Error::Internal {
                reason: format!("simulated probability {value} at index {index}"),
            },
            other => other,
        }
    })
}

/// The family of joint distributions over *all* probing patterns.
///
/// Errors if the process has more than [`MAX_ENUMERATED_TIMES`] probe times.
pub fn all_pattern_statistics(process: &DilatedProcess) -> Result<StatisticsFamily> {
    let n = process.n_times();
    if n > MAX_ENUMERATED_TIMES {
        return Err(Error::TooManyTimes {
            n_times: n,
            max: MAX_ENUMERATED_TIMES,
        });
    }
    let mut family = StatisticsFamily::new(n, process.d_sys())?;
    for mask in 0..=((1u32 << n) - 1) {
        let schedule = ProbeSchedule::from_mask(n, mask)?;
        family.insert(run_schedule(process, &schedule)?)?;
    }
    Ok(family)
}

/// Joint states along a single outcome branch, for regression tests and
/// debugging.
#[derive(Debug, Clone)]
pub struct ScheduleTrace {
    /// State immediately before each probe time (after the preceding step).
    pub pre_probe: Vec<ComplexMatrix>,
    /// State immediately after each probe time (projected if measured,
    /// unchanged otherwise).
    pub post_probe: Vec<ComplexMatrix>,
    /// Probability of this outcome branch.
    pub probability: f64,
}

/// Propagates one outcome assignment through a schedule, recording the joint
/// state before and after every probe time. `outcomes` lists the outcome for
/// each *measured* time in time order. States are subnormalized: each trace
/// is the probability of the branch so far.
pub fn trace_schedule(
    process: &DilatedProcess,
    schedule: &ProbeSchedule,
    outcomes: &[usize],
) -> Result<ScheduleTrace> {
    check_schedule(process, schedule)?;
    if outcomes.len() != schedule.count_measured() {
        return Err(Error::OutcomeCount {
            expected: schedule.count_measured(),
            got: outcomes.len(),
        });
    }
    let n = process.n_times();
    let mut state = process.initial_state().matrix().clone();
    let mut pre_probe = Vec::with_capacity(n);
    let mut post_probe = Vec::with_capacity(n);
    let mut outcome_iter = outcomes.iter();
    for t in 0..n {
        pre_probe.push(state.clone());
        if schedule.is_measured(t) {
            let &x = outcome_iter.next().expect("length checked above");
            let (projected, _) = measure_system(&state, process.d_sys(), process.d_env(), x)?;
            state = projected;
        }
        post_probe.push(state.clone());
        if t + 1 < n {
            state = process.steps()[t].apply(&state)?;
        }
    }
    let probability = post_probe.last().expect("n_times >= 1").trace().re;
    Ok(ScheduleTrace {
        pre_probe,
        post_probe,
        probability,
    })
}
