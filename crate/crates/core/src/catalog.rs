//! Reference circuits with exactly known statistics, plus random generators.
//!
//! The two circuits built here are minimal examples of *hidden memory*: four
//! probe times, one system qubit, one environment qubit, and fully Markovian
//! statistics whenever every time is measured. The memory only shows up in
//! the rest of the family:
//!
//! * [`hidden_memory_circuit`] - skipping the second measurement makes the
//!   final outcome echo the first one perfectly, so the sub-pattern `1011`
//!   is maximally non-Markovian while `1111` is Markovian.
//! * [`incompatible_statistics_circuit`] - every pattern is Markovian in
//!   isolation, but the transition probability from `t3` to `t4` depends on
//!   whether `t2` was measured, so no single memoryless model fits all
//!   patterns.
//!
//! [`oracle_tables`] lists closed-form outcome tables for both circuits as
//! exact rationals; tests compare the simulator against them entry by entry.
//! The [`random`] module provides Haar-distributed unitaries and the random
//! states, channels, processes and models used by the property suites.

use crate::numerics::ComplexMatrix;
use crate::quantum::{gates, DensityOperator, DilatedProcess, KrausChannel};
use crate::stats::Verdict;

use num_complex::Complex64;

// ---------------------------------------------------------------------------
// Exact rational probabilities
// ---------------------------------------------------------------------------

/// An exact probability, kept as a fraction so oracle tables carry no
/// floating-point error of their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };

    pub fn new(num: i64, den: i64) -> Self {
        assert!(den > 0, "denominator must be positive");
        Self { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

// ---------------------------------------------------------------------------
// The reference circuits
// ---------------------------------------------------------------------------

/// Environment-side readout channel used by both circuits: a measurement in
/// the `|+>/|->` basis whose outcome is fed forward as a fresh computational
/// basis state. Kraus operators `|0><+|` and `|1><-|`.
pub fn plus_basis_feedforward() -> KrausChannel {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = Complex64::new;
    let y0 = ComplexMatrix::new(2, 2, vec![c(h, 0.0), c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
        .expect("fixed 2x2 entries");
    let y1 = ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0), c(-h, 0.0)])
        .expect("fixed 2x2 entries");
    KrausChannel::new(vec![y0, y1]).expect("readout channel is trace preserving")
}

/// Four-time qubit-qubit circuit whose fully measured statistics are
/// Markovian while the pattern `1011` (skip `t2`) is maximally
/// non-Markovian.
///
/// Construction: the system starts maximally mixed with the environment in
/// `|0>`; a Hadamard precedes `t2`; a SWAP moves the measured outcome into
/// the environment before `t3`; between `t3` and `t4` the environment is
/// read out in the `|+>/|->` basis ([`plus_basis_feedforward`]) and a CNOT
/// controlled on the environment writes the result back onto the system.
///
/// Measuring at `t2` collapses the system to a computational basis state,
/// whose readout is an even coin -- but *skipping* `t2` leaves the Hadamard
/// output `|+>/|->` intact, the readout decodes it perfectly, and `x4` copies
/// `x1`.
pub fn hidden_memory_circuit() -> DilatedProcess {
    let env0 = DensityOperator::basis(2, 0).expect("|0> exists");
    let initial = DensityOperator::new(
        DensityOperator::maximally_mixed(2)
            .matrix()
            .kron(env0.matrix()),
    )
    .expect("product of valid states");
    let id2 = ComplexMatrix::identity(2);
    let step1 = KrausChannel::from_unitary(gates::hadamard().kron(&id2)).expect("unitary");
    let step2 = KrausChannel::from_unitary(gates::swap(2)).expect("unitary");
    let step3 = plus_basis_feedforward()
        .embedded_on_environment(2)
        .then(&KrausChannel::from_unitary(gates::cnot_environment_control()).expect("unitary"))
        .expect("composition of channels");
    DilatedProcess::new(2, 2, initial, vec![step1, step2, step3])
        .expect("fixed circuit is well formed")
}

/// Four-time qubit-qubit circuit where every probing pattern is Markovian in
/// isolation but the `t3 -> t4` transition probabilities differ between
/// patterns: measuring `t2` or not changes `P(x4 | x3)` from a fair coin to
/// a deterministic copy.
///
/// Construction: system and environment start classically correlated in
/// `(|00><00| + |11><11|)/2`; a Hadamard precedes `t2`; between `t2` and
/// `t3` a Hadamard and a system-controlled CNOT run before the system is
/// discarded and re-prepared in `|0>`; a CNOT controlled on the environment
/// precedes `t4`. Measuring at `t2` scrambles the phase that the second
/// Hadamard would otherwise decode, leaving the environment mixed instead of
/// pinned to `|0>`.
pub fn incompatible_statistics_circuit() -> DilatedProcess {
    let c = Complex64::new;
    let half = c(0.5, 0.0);
    let mut correlated = ComplexMatrix::zeros(4, 4);
    correlated[(0, 0)] = half;
    correlated[(3, 3)] = half;
    let initial = DensityOperator::new(correlated).expect("classically correlated pair is valid");
    let id2 = ComplexMatrix::identity(2);
    let hadamard_sys = KrausChannel::from_unitary(gates::hadamard().kron(&id2)).expect("unitary");
    let step1 = hadamard_sys.clone();
    let step2 = hadamard_sys
        .then(&KrausChannel::from_unitary(gates::cnot_system_control()).expect("unitary"))
        .and_then(|ch| {
            ch.then(&KrausChannel::discard_and_reprepare_system(2, 2, 0).expect("valid reset"))
        })
        .expect("composition of channels");
    let step3 =
        KrausChannel::from_unitary(gates::cnot_environment_control()).expect("unitary");
    DilatedProcess::new(2, 2, initial, vec![step1, step2, step3])
        .expect("fixed circuit is well formed")
}

/// The bundled reference circuits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceCircuit {
    HiddenMemory,
    IncompatibleStatistics,
}

impl ReferenceCircuit {
    pub const ALL: [ReferenceCircuit; 2] = [
        ReferenceCircuit::HiddenMemory,
        ReferenceCircuit::IncompatibleStatistics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceCircuit::HiddenMemory => "hidden-memory",
            ReferenceCircuit::IncompatibleStatistics => "incompatible-statistics",
        }
    }

    pub fn build(self) -> DilatedProcess {
        match self {
            ReferenceCircuit::HiddenMemory => hidden_memory_circuit(),
            ReferenceCircuit::IncompatibleStatistics => incompatible_statistics_circuit(),
        }
    }

    /// The verdict the analysis is expected to reach on this circuit's
    /// family.
    pub fn expected_verdict(self) -> Verdict {
        match self {
            ReferenceCircuit::HiddenMemory => Verdict::HiddenMemoryNonmarkovianSub,
            ReferenceCircuit::IncompatibleStatistics => Verdict::HiddenMemoryIncompatible,
        }
    }
}

impl std::fmt::Display for ReferenceCircuit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Oracle tables
// ---------------------------------------------------------------------------

/// Whether a table lists joint probabilities or conditionals on the full
/// earlier history within the pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Joint,
    /// `P(target | all earlier measured outcomes)`; rows whose conditioning
    /// history has probability zero carry the conventional value 0.
    Conditional { target_time: usize },
}

/// A closed-form expected table for one probing pattern of one reference
/// circuit. Values are indexed like the simulator's distributions: one entry
/// per outcome tuple over the measured times, earliest time varying slowest.
#[derive(Debug, Clone)]
pub struct OracleTable {
    pub circuit: ReferenceCircuit,
    pub label: String,
    pub pattern: String,
    pub kind: TableKind,
    pub values: Vec<Rational>,
    pub note: String,
}

impl OracleTable {
    pub fn expected_f64(&self) -> Vec<f64> {
        self.values.iter().map(|r| r.to_f64()).collect()
    }

    /// Recomputes the tabulated quantity from the simulator, row for row in
    /// the same order as [`expected_f64`](Self::expected_f64).
    pub fn computed_f64(&self) -> crate::error::Result<Vec<f64>> {
        use crate::quantum::{run_schedule, ProbeSchedule};
        use crate::stats::conditional;

        let process = self.circuit.build();
        let schedule = ProbeSchedule::from_pattern(&self.pattern)?;
        let dist = run_schedule(&process, &schedule)?;
        match self.kind {
            TableKind::Joint => Ok(dist.probs().to_vec()),
            TableKind::Conditional { target_time } => {
                let times = schedule.measured_times();
                let target_slot = times
                    .iter()
                    .position(|&t| t == target_time)
                    .ok_or_else(|| crate::error::Error::TimeNotMeasured {
                        time: target_time,
                        pattern: self.pattern.clone(),
                    })?;
                let mut values = Vec::with_capacity(self.values.len());
                for index in 0..self.values.len() {
                    let outcomes: Vec<usize> = (0..times.len())
                        .map(|slot| (index >> (times.len() - 1 - slot)) & 1)
                        .collect();
                    let history: Vec<(usize, usize)> = times
                        .iter()
                        .zip(&outcomes)
                        .filter(|(&t, _)| t < target_time)
                        .map(|(&t, &x)| (t, x))
                        .collect();
                    values.push(conditional(
                        &dist,
                        target_time,
                        outcomes[target_slot],
                        &history,
                    )?);
                }
                Ok(values)
            }
        }
    }
}

/// Outcome tuple viewed by absolute (0-based) time index.
struct Outcomes<'a> {
    times: &'a [usize],
    values: &'a [usize],
}

impl Outcomes<'_> {
    fn at(&self, time: usize) -> usize {
        let slot = self
            .times
            .iter()
            .position(|&t| t == time)
            .expect("oracle closures only look up measured times");
        self.values[slot]
    }
}

fn table(
    circuit: ReferenceCircuit,
    pattern: &str,
    kind: TableKind,
    note: &str,
    f: impl Fn(&Outcomes) -> Rational,
) -> OracleTable {
    let n = pattern.len();
    let mask = crate::stats::pattern_to_mask(pattern, n).expect("oracle patterns are fixed");
    let times = crate::stats::times_of_mask(mask, n);
    let k = times.len();
    let mut values = Vec::with_capacity(1 << k);
    for index in 0..(1usize << k) {
        let mut outcomes = vec![0; k];
        for (slot, out) in outcomes.iter_mut().enumerate() {
            *out = (index >> (k - 1 - slot)) & 1;
        }
        values.push(f(&Outcomes {
            times: &times,
            values: &outcomes,
        }));
    }
    let what = match kind {
        TableKind::Joint => "joint",
        TableKind::Conditional { target_time } => {
            return OracleTable {
                circuit,
                label: format!("{} conditional t{} | {}", circuit.name(), target_time + 1, pattern),
                pattern: pattern.to_string(),
                kind,
                values,
                note: note.to_string(),
            }
        }
    };
    OracleTable {
        circuit,
        label: format!("{} {} {}", circuit.name(), what, pattern),
        pattern: pattern.to_string(),
        kind,
        values,
        note: note.to_string(),
    }
}

/// Every closed-form table both reference circuits are checked against.
///
/// Joint tables are compared against the simulator's distributions;
/// conditional tables against [`crate::stats::conditional`] with the full
/// earlier history of the pattern. All values are exact.
pub fn oracle_tables() -> Vec<OracleTable> {
    use ReferenceCircuit::{HiddenMemory as HM, IncompatibleStatistics as IC};
    let half = Rational::new(1, 2);
    let quarter = Rational::new(1, 4);
    let eighth = Rational::new(1, 8);
    let one = Rational::new(1, 1);
    let zero = Rational::ZERO;
    let joint = TableKind::Joint;
    let cond = |t| TableKind::Conditional { target_time: t };

    vec![
        // ----- hidden-memory circuit: joints -----
        table(HM, "1000", joint, "the first outcome is a fair coin", |_| half),
        table(HM, "1100", joint, "first two outcomes are independent fair coins", |_| quarter),
        table(
            HM,
            "1110",
            joint,
            "x3 is pinned to 0 because the measured system state is swapped out for |0>",
            |o| if o.at(2) == 0 { quarter } else { zero },
        ),
        table(
            HM,
            "1111",
            joint,
            "fully measured: x4 is a fair coin regardless of history, so the statistics are Markovian",
            |o| if o.at(2) == 0 { eighth } else { zero },
        ),
        table(
            HM,
            "1010",
            joint,
            "skipping t2 still pins x3 to 0",
            |o| if o.at(2) == 0 { half } else { zero },
        ),
        table(
            HM,
            "1011",
            joint,
            "skipping t2 preserves the Hadamard-encoded first outcome, so x4 echoes x1",
            |o| {
                if o.at(2) == 0 && o.at(3) == o.at(0) {
                    half
                } else {
                    zero
                }
            },
        ),
        table(
            HM,
            "0111",
            joint,
            "without t1 the readout is an even coin and x4 is uniform",
            |o| if o.at(2) == 0 { quarter } else { zero },
        ),
        table(
            HM,
            "1101",
            joint,
            "measuring t2 erases the encoding, so x4 is uniform even knowing x1",
            |_| eighth,
        ),
        table(
            HM,
            "1001",
            joint,
            "with both middle times skipped x4 echoes x1 perfectly",
            |o| if o.at(3) == o.at(0) { half } else { zero },
        ),
        table(
            HM,
            "0011",
            joint,
            "x3 pinned to 0, x4 a fair coin",
            |o| if o.at(2) == 0 { half } else { zero },
        ),
        // ----- hidden-memory circuit: conditionals -----
        table(
            HM,
            "1110",
            cond(2),
            "x3 is deterministically 0 given any history",
            |o| if o.at(2) == 0 { one } else { zero },
        ),
        table(
            HM,
            "1111",
            cond(3),
            "fully measured transition into t4 is an even coin; rows with x3=1 condition on a zero-probability event",
            |o| if o.at(2) == 0 { half } else { zero },
        ),
        table(
            HM,
            "1010",
            cond(2),
            "x3 stays deterministic when t2 is skipped",
            |o| if o.at(2) == 0 { one } else { zero },
        ),
        table(
            HM,
            "1011",
            cond(3),
            "with t2 skipped the transition into t4 is a perfect copy of x1: non-Markovian with violation 1",
            |o| {
                if o.at(2) == 0 && o.at(3) == o.at(0) {
                    one
                } else {
                    zero
                }
            },
        ),
        // ----- incompatible-statistics circuit: joints -----
        table(
            IC,
            "1111",
            joint,
            "fully measured: x1, x2 fair and independent, x3 pinned to 0, x4 a fair coin",
            |o| if o.at(2) == 0 { eighth } else { zero },
        ),
        table(
            IC,
            "1011",
            joint,
            "skipping t2 lets the second Hadamard decode the first, pinning the environment and hence x4 to 0",
            |o| {
                if o.at(2) == 0 && o.at(3) == 0 {
                    half
                } else {
                    zero
                }
            },
        ),
        table(
            IC,
            "1110",
            joint,
            "x3 pinned to 0 by the reset",
            |o| if o.at(2) == 0 { quarter } else { zero },
        ),
        table(
            IC,
            "1010",
            joint,
            "x3 pinned to 0 with t2 skipped",
            |o| if o.at(2) == 0 { half } else { zero },
        ),
        table(
            IC,
            "0111",
            joint,
            "without t1: x2 fair, x3 pinned to 0, x4 fair",
            |o| if o.at(2) == 0 { quarter } else { zero },
        ),
        table(
            IC,
            "0011",
            joint,
            "with both early times skipped the environment is pinned, so x3 and x4 are both 0",
            |o| if o.at(2) == 0 && o.at(3) == 0 { one } else { zero },
        ),
        table(
            IC,
            "1101",
            joint,
            "skipping t3 changes nothing: x4 is fair after t2 was measured",
            |_| eighth,
        ),
        // ----- incompatible-statistics circuit: conditionals -----
        table(
            IC,
            "1110",
            cond(2),
            "x3 deterministic given any fully measured history",
            |o| if o.at(2) == 0 { one } else { zero },
        ),
        table(
            IC,
            "1010",
            cond(2),
            "x3 deterministic with t2 skipped",
            |o| if o.at(2) == 0 { one } else { zero },
        ),
        table(
            IC,
            "0110",
            cond(2),
            "x3 deterministic with t1 skipped",
            |o| if o.at(2) == 0 { one } else { zero },
        ),
        table(
            IC,
            "1111",
            cond(3),
            "with t2 measured the t3 -> t4 transition is an even coin",
            |o| if o.at(2) == 0 { half } else { zero },
        ),
        table(
            IC,
            "1011",
            cond(3),
            "with t2 skipped the t3 -> t4 transition copies x3: incompatible with the fully measured transition",
            |o| {
                if o.at(2) == 0 && o.at(3) == o.at(2) {
                    one
                } else {
                    zero
                }
            },
        ),
    ]
}

// ---------------------------------------------------------------------------
// Random generators
// ---------------------------------------------------------------------------

/// Random states, unitaries, channels, processes and models with
/// deterministic seeding, for property tests and fitter starts.
pub mod random {
    use super::*;
    use crate::error::Result;
    use rand::Rng;

    /// Standard normal via Box-Muller.
    fn normal(rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn ginibre(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(dim, dim, |_, _| Complex64::new(normal(rng), normal(rng)))
    }

    /// Haar-distributed unitary: QR of a Ginibre matrix by modified
    /// Gram-Schmidt. The positive-diagonal normalization makes the
    /// decomposition unique, which is what makes the Q factor Haar.
    pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
        let g = ginibre(dim, rng);
        let mut columns: Vec<Vec<Complex64>> = (0..dim)
            .map(|c| (0..dim).map(|r| g[(r, c)]).collect())
            .collect();
        for c in 0..dim {
            let (settled, rest) = columns.split_at_mut(c);
            let current = &mut rest[0];
            for prev in settled.iter() {
                let overlap: Complex64 = prev
                    .iter()
                    .zip(current.iter())
                    .map(|(p, x)| p.conj() * x)
                    .sum();
                for (x, p) in current.iter_mut().zip(prev) {
                    *x -= overlap * p;
                }
            }
            let norm: f64 = current.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(norm > 1e-12, "Ginibre matrix numerically singular");
            for x in current.iter_mut() {
                *x /= norm;
            }
        }
        ComplexMatrix::from_fn(dim, dim, |r, c| columns[c][r])
    }

    /// Random full-rank density operator `G G^dag / tr`.
    pub fn random_density(dim: usize, rng: &mut impl Rng) -> DensityOperator {
        let g = ginibre(dim, rng);
        let gram = g.matmul(&g.dagger()).expect("square");
        let trace = gram.trace().re;
        DensityOperator::new(gram.scale(Complex64::new(1.0 / trace, 0.0)))
            .expect("normalized Gram matrix is a state")
    }

    /// Random channel obtained from a Haar unitary on a dilation with an
    /// environment of dimension `dim^2` (enough for any channel on `dim`):
    /// `K_l = (I (x) <l|) U (I (x) |0>)`.
    pub fn random_channel(dim: usize, rng: &mut impl Rng) -> KrausChannel {
        let env = dim * dim;
        let u = random_unitary(dim * env, rng);
        let ops = (0..env)
            .map(|l| {
                ComplexMatrix::from_fn(dim, dim, |i, j| u[(i * env + l, j * env)])
            })
            .collect();
        KrausChannel::new(ops).expect("unitary dilation gives a valid channel")
    }

    /// Random dilated process: random joint initial state, one random joint
    /// channel per step.
    pub fn random_process(
        d_sys: usize,
        d_env: usize,
        n_times: usize,
        rng: &mut impl Rng,
    ) -> Result<DilatedProcess> {
        let joint = d_sys * d_env;
        let initial = random_density(joint, rng);
        let steps = (0..n_times.saturating_sub(1))
            .map(|_| random_channel(joint, rng))
            .collect();
        DilatedProcess::new(d_sys, d_env, initial, steps)
    }

    /// Random memoryless quantum model: random state plus random channels on
    /// the outcome space alone.
    pub fn random_quantum_model(
        d: usize,
        n_times: usize,
        rng: &mut impl Rng,
    ) -> Result<crate::qrf::MemorylessQuantumModel> {
        let rho1 = random_density(d, rng);
        let channels = (0..n_times.saturating_sub(1))
            .map(|_| random_channel(d, rng))
            .collect();
        crate::qrf::MemorylessQuantumModel::new(d, rho1, channels)
    }

    /// Random classical chain with strictly positive initial and transition
    /// probabilities, so that fitting it back from its own statistics is
    /// fully determined.
    pub fn random_classical_model(
        dim: usize,
        n_times: usize,
        rng: &mut impl Rng,
    ) -> Result<crate::classical::ClassicalMemorylessModel> {
        fn weights<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<f64> {
            let raw: Vec<f64> = (0..count).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        }
        let p1 = weights(rng, dim);
        let steps = (0..n_times.saturating_sub(1))
            .map(|_| {
                let mut entries = vec![0.0; dim * dim];
                for cur in 0..dim {
                    let column = weights(rng, dim);
                    for next in 0..dim {
                        entries[next * dim + cur] = column[next];
                    }
                }
                crate::classical::StochasticMatrix::new(dim, entries)
            })
            .collect::<Result<Vec<_>>>()?;
        crate::classical::ClassicalMemorylessModel::new(n_times, p1, steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{all_pattern_statistics, trace_schedule, ProbeSchedule};
    use crate::stats::{times_of_mask, witness_hidden_memory, DEFAULT_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Diagonal 4x4 matrix from real entries; the reference circuits only
    /// produce diagonal or single-block states at the probed points.
    fn diag4(entries: [f64; 4]) -> ComplexMatrix {
        ComplexMatrix::from_diag(
            &entries
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn every_oracle_joint_table_matches_the_simulator() {
        for table in oracle_tables()
            .iter()
            .filter(|t| t.kind == TableKind::Joint)
        {
            let computed = table.computed_f64().unwrap();
            let expected = table.expected_f64();
            assert_eq!(computed.len(), expected.len(), "{}", table.label);
            for (i, (&got, &want)) in computed.iter().zip(&expected).enumerate() {
                assert!(
                    (got - want).abs() < 1e-12,
                    "{} row {i}: got {got}, expected {want} ({})",
                    table.label,
                    table.note,
                );
            }
        }
    }

    #[test]
    fn every_oracle_conditional_table_matches_the_analyzer() {
        for table in oracle_tables() {
            if matches!(table.kind, TableKind::Joint) {
                continue;
            }
            let computed = table.computed_f64().unwrap();
            for (index, (&got, &expected)) in
                computed.iter().zip(&table.expected_f64()).enumerate()
            {
                assert!(
                    (got - expected).abs() < 1e-12,
                    "{} row {index}: got {got}, expected {expected}",
                    table.label,
                );
            }
        }
    }

    #[test]
    fn hidden_memory_family_reaches_the_expected_verdict() {
        let family = all_pattern_statistics(&hidden_memory_circuit()).unwrap();
        let report = witness_hidden_memory(&family, DEFAULT_TOL).unwrap();
        assert!(report.markov_full.markovian);
        assert!(!report.markov_sub.markovian);
        assert_eq!(report.verdict, ReferenceCircuit::HiddenMemory.expected_verdict());
        // The violating pattern is the one skipping t2, at full magnitude.
        assert!((report.markov_sub.worst_violation - 1.0).abs() < 1e-12);
        assert!((report.markov_sub.per_pattern["1011"] - 1.0).abs() < 1e-12);
        let site = report.markov_sub.worst_site.as_deref().unwrap();
        assert!(site.contains("1011"), "site: {site}");
    }

    #[test]
    fn incompatible_family_reaches_the_expected_verdict() {
        let family = all_pattern_statistics(&incompatible_statistics_circuit()).unwrap();
        let report = witness_hidden_memory(&family, DEFAULT_TOL).unwrap();
        assert!(report.markov_full.markovian);
        assert!(report.markov_sub.markovian, "{:?}", report.markov_sub.worst_site);
        assert!(!report.compatibility.compatible);
        assert_eq!(
            report.verdict,
            ReferenceCircuit::IncompatibleStatistics.expected_verdict()
        );
        // P(x4 | x3=0) is 1/2 fully measured and 1 with t2 skipped.
        assert!((report.compatibility.worst_violation - 0.5).abs() < 1e-12);
    }

    #[test]
    fn marginal_inconsistency_shows_up_in_both_families() {
        // Not measuring is not the same as measuring and discarding: the
        // sub-pattern statistics of both circuits disagree with marginals of
        // the fully measured table, by exactly 1/4 at pattern 1011 for the
        // hidden-memory circuit.
        let family = all_pattern_statistics(&hidden_memory_circuit()).unwrap();
        let report = witness_hidden_memory(&family, DEFAULT_TOL).unwrap();
        assert!(!report.kolmogorov.consistent);
        let full = family.get_pattern("1111").unwrap().unwrap();
        let skip2 = family.get_pattern("1011").unwrap().unwrap();
        let marginal = full.marginal(&[0, 2, 3]).unwrap();
        let diff = marginal
            .probs()
            .iter()
            .zip(skip2.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!((diff - 0.25).abs() < 1e-12, "diff {diff}");

        let family = all_pattern_statistics(&incompatible_statistics_circuit()).unwrap();
        let report = witness_hidden_memory(&family, DEFAULT_TOL).unwrap();
        assert!(!report.kolmogorov.consistent);
    }

    #[test]
    fn hidden_memory_intermediate_states_match_hand_propagation() {
        let process = hidden_memory_circuit();
        // Fully measured branch (x1, x2, x3=0, x4): before t3 the state is
        // |0><0| (x) |x2><x2| with weight 1/4; before t4 it is the
        // classically correlated pair with weight 1/8 each.
        for x1 in 0..2 {
            for x2 in 0..2 {
                let schedule = ProbeSchedule::from_pattern("1111").unwrap();
                let trace = trace_schedule(&process, &schedule, &[x1, x2, 0, 0]).unwrap();
                let mut expected = [0.0; 4];
                expected[x2] = 0.25; // system block 0, environment |x2>
                assert!(trace.pre_probe[2].max_abs_diff(&diag4(expected)) < 1e-12);
                assert!(
                    trace.pre_probe[3].max_abs_diff(&diag4([0.125, 0.0, 0.0, 0.125])) < 1e-12
                );
                // Between t3 and t4, after the readout but before the CNOT,
                // the environment is fully mixed.
                let mid = plus_basis_feedforward()
                    .embedded_on_environment(2)
                    .apply(&trace.post_probe[2])
                    .unwrap();
                assert!(mid.max_abs_diff(&diag4([0.125, 0.125, 0.0, 0.0])) < 1e-12);
            }
        }
        // Branch skipping t2 (x1, x3=0, x4): before t4 the readout has
        // decoded x1 back into both factors.
        for x1 in 0..2 {
            let schedule = ProbeSchedule::from_pattern("1011").unwrap();
            let trace = trace_schedule(&process, &schedule, &[x1, 0, x1]).unwrap();
            let mid = plus_basis_feedforward()
                .embedded_on_environment(2)
                .apply(&trace.post_probe[2])
                .unwrap();
            let mut expected = [0.0; 4];
            expected[x1] = 0.5; // |0><0| (x) |x1><x1|
            assert!(mid.max_abs_diff(&diag4(expected)) < 1e-12);
            let mut expected = [0.0; 4];
            expected[3 * x1] = 0.5; // |x1, x1>
            assert!(trace.pre_probe[3].max_abs_diff(&diag4(expected)) < 1e-12);
            assert!((trace.probability - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn incompatible_intermediate_states_match_hand_propagation() {
        let process = incompatible_statistics_circuit();
        for x1 in 0..2 {
            for x2 in 0..2 {
                let schedule = ProbeSchedule::from_pattern("1111").unwrap();
                let trace = trace_schedule(&process, &schedule, &[x1, x2, 0, 0]).unwrap();
                // Before t3: system reset to |0>, environment fully mixed.
                assert!(
                    trace.pre_probe[2].max_abs_diff(&diag4([0.125, 0.125, 0.0, 0.0])) < 1e-12
                );
                // Before t4: correlated by the CNOT.
                assert!(
                    trace.pre_probe[3].max_abs_diff(&diag4([0.125, 0.0, 0.0, 0.125])) < 1e-12
                );
            }
            // Skipping t2 pins the environment to |0>.
            let schedule = ProbeSchedule::from_pattern("1011").unwrap();
            let trace = trace_schedule(&process, &schedule, &[x1, 0, 0]).unwrap();
            assert!(trace.pre_probe[2].max_abs_diff(&diag4([0.5, 0.0, 0.0, 0.0])) < 1e-12);
            assert!(trace.pre_probe[3].max_abs_diff(&diag4([0.5, 0.0, 0.0, 0.0])) < 1e-12);
        }
        // Skipping t1 leaves the environment mixed, like the fully measured
        // case but with twice the weight.
        for x2 in 0..2 {
            let schedule = ProbeSchedule::from_pattern("0110").unwrap();
            let trace = trace_schedule(&process, &schedule, &[x2, 0]).unwrap();
            assert!(trace.pre_probe[2].max_abs_diff(&diag4([0.25, 0.25, 0.0, 0.0])) < 1e-12);
        }
    }

    #[test]
    fn oracle_tables_cover_both_circuits_and_normalize() {
        let tables = oracle_tables();
        assert!(tables.iter().any(|t| t.circuit == ReferenceCircuit::HiddenMemory));
        assert!(tables
            .iter()
            .any(|t| t.circuit == ReferenceCircuit::IncompatibleStatistics));
        for table in &tables {
            let k = table
                .pattern
                .chars()
                .filter(|&c| c == '1')
                .count();
            assert_eq!(table.values.len(), 1 << k, "{}", table.label);
            if table.kind == TableKind::Joint {
                let total: f64 = table.expected_f64().iter().sum();
                assert!((total - 1.0).abs() < 1e-15, "{} sums to {total}", table.label);
            }
        }
    }

    #[test]
    fn oracle_patterns_agree_with_mask_helpers() {
        for table in oracle_tables() {
            let mask = crate::stats::pattern_to_mask(&table.pattern, 4).unwrap();
            let times = times_of_mask(mask, 4);
            if let TableKind::Conditional { target_time } = table.kind {
                assert!(times.contains(&target_time), "{}", table.label);
            }
        }
    }

    #[test]
    fn random_unitaries_are_unitary_and_seeded_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for dim in [2, 3, 4, 8] {
            let u = random::random_unitary(dim, &mut rng);
            let residual = u
                .dagger()
                .matmul(&u)
                .unwrap()
                .max_abs_diff(&ComplexMatrix::identity(dim));
            assert!(residual < 1e-12, "dim {dim}: {residual}");
        }
        let a = random::random_unitary(4, &mut ChaCha8Rng::seed_from_u64(7));
        let b = random::random_unitary(4, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn random_channels_and_states_pass_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            // Constructors validate trace preservation / positivity; reaching
            // here without panicking is the assertion.
            let _ = random::random_channel(2, &mut rng);
            let _ = random::random_density(4, &mut rng);
        }
        let process = random::random_process(2, 2, 3, &mut rng).unwrap();
        assert_eq!(process.n_times(), 3);
    }
}
