//! Structural guarantees of memoryless models: every family they generate
//! passes the analyzer checks, conditionals reduce to single channel
//! applications, and verdicts degrade monotonically as tolerances loosen.

use hqmem::catalog;
use hqmem::classical::{classical_family, classical_predict, fit_classical, ClassicalFitOutcome};
use hqmem::qrf::qrf_family;
use hqmem::quantum::all_pattern_statistics;
use hqmem::stats::{
    conditional, is_compatible, is_markovian_full, is_markovian_sub, kolmogorov_consistent,
    pattern_to_mask, witness_hidden_memory, StatisticsFamily, Verdict,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const QUANTUM_TOL: f64 = 1e-7;
const CLASSICAL_TOL: f64 = 1e-12;

#[test]
fn quantum_memoryless_families_pass_every_witness_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..200 {
        let model = catalog::random::random_quantum_model(2, 4, &mut rng).unwrap();
        let family = qrf_family(&model).unwrap();
        let markov = is_markovian_full(&family, QUANTUM_TOL).unwrap();
        assert!(markov.markovian, "trial {trial}: {:?}", markov.worst_site);
        let sub = is_markovian_sub(&family, QUANTUM_TOL).unwrap();
        assert!(sub.markovian, "trial {trial}: {:?}", sub.worst_site);
        let compat = is_compatible(&family, QUANTUM_TOL).unwrap();
        assert!(compat.compatible, "trial {trial}: {:?}", compat.worst_site);
    }
}

#[test]
fn full_pattern_conditionals_equal_single_channel_applications() {
    // For a memoryless model the conditional at time j depends only on the
    // outcome at time j-1, through one application of the connecting channel.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let model = catalog::random::random_quantum_model(2, 4, &mut rng).unwrap();
        let family = qrf_family(&model).unwrap();
        let full = family.full().unwrap();
        let d = model.d();
        for j in 1..4usize {
            for history_index in 0..d.pow(j as u32) {
                let mut outcomes = Vec::with_capacity(j);
                let mut rest = history_index;
                for _ in 0..j {
                    outcomes.push(rest % d);
                    rest /= d;
                }
                let history: Vec<(usize, usize)> =
                    (0..j).map(|t| (t, outcomes[t])).collect();
                let prev = outcomes[j - 1];
                let mut prev_state = hqmem::numerics::ComplexMatrix::zeros(d, d);
                prev_state[(prev, prev)] = Complex64::new(1.0, 0.0);
                let propagated = model.channels()[j - 1].apply(&prev_state).unwrap();
                for x in 0..d {
                    let lhs = conditional(full, j, x, &history).unwrap();
                    let rhs = propagated[(x, x)].re;
                    assert!(
                        (lhs - rhs).abs() <= QUANTUM_TOL,
                        "time {j}, history {history:?}, outcome {x}: {lhs} vs {rhs}"
                    );
                }
            }
        }
    }
}

#[test]
fn classical_memoryless_families_are_kolmogorov_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for trial in 0..200 {
        let model = catalog::random::random_classical_model(2, 4, &mut rng).unwrap();
        let family = classical_family(&model).unwrap();
        assert!(is_markovian_full(&family, CLASSICAL_TOL).unwrap().markovian);
        assert!(is_markovian_sub(&family, CLASSICAL_TOL).unwrap().markovian);
        assert!(is_compatible(&family, CLASSICAL_TOL).unwrap().compatible);
        let consistency = kolmogorov_consistent(&family, CLASSICAL_TOL).unwrap();
        assert!(
            consistency.consistent,
            "trial {trial}: {:?}",
            consistency.worst_site
        );
    }
}

#[test]
fn a_classical_fit_of_the_full_table_cannot_explain_the_sub_statistics() {
    // The hidden-memory circuit's full-pattern table is Markovian on its own,
    // so the classical fitter builds a memoryless chain from it without
    // complaint. That chain predicts sub-statistics by marginalization — and
    // misses the circuit's actual skip-t2 statistics by a full 1/4, which is
    // precisely why the memory stays hidden in the full pattern.
    let family =
        all_pattern_statistics(&catalog::ReferenceCircuit::HiddenMemory.build()).unwrap();
    let full = family.full().unwrap();
    let ClassicalFitOutcome::Memoryless(fit) = fit_classical(full, 1e-9).unwrap() else {
        panic!("the full table alone is Markovian and must admit a chain");
    };
    let reproduced = classical_predict(&fit.model, full.mask()).unwrap();
    let full_dev = full
        .probs()
        .iter()
        .zip(reproduced.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(full_dev <= 1e-12, "full-pattern round trip drifted {full_dev:.2e}");

    let skip_mask = pattern_to_mask("1011", 4).unwrap();
    let predicted = classical_predict(&fit.model, skip_mask).unwrap();
    let observed = family.get(skip_mask).unwrap();
    let gap = predicted
        .probs()
        .iter()
        .zip(observed.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(
        (gap - 0.25).abs() <= 1e-12,
        "expected a 1/4 gap on the skip-t2 pattern, found {gap}"
    );
}

fn verdict_stays_consistent_when_loosened(family: &StatisticsFamily, label: &str) {
    let tols = [1e-12, 1e-9, 1e-6, 1e-3, 0.1, 0.9, 2.0];
    let verdicts: Vec<Verdict> = tols
        .iter()
        .map(|&tol| witness_hidden_memory(family, tol).unwrap().verdict)
        .collect();
    for (i, v) in verdicts.iter().enumerate() {
        if *v == Verdict::ConsistentWithMemoryless {
            for (j, later) in verdicts.iter().enumerate().skip(i) {
                assert_eq!(
                    *later,
                    Verdict::ConsistentWithMemoryless,
                    "{label}: verdict regressed from consistent at tol {} to {later} at tol {}",
                    tols[i],
                    tols[j]
                );
            }
            break;
        }
    }
}

#[test]
fn loosening_tolerance_never_revokes_a_consistent_verdict() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for trial in 0..5 {
        let model = catalog::random::random_quantum_model(2, 4, &mut rng).unwrap();
        let family = qrf_family(&model).unwrap();
        verdict_stays_consistent_when_loosened(&family, &format!("random model {trial}"));
    }
    for circuit in catalog::ReferenceCircuit::ALL {
        let family = all_pattern_statistics(&circuit.build()).unwrap();
        verdict_stays_consistent_when_loosened(&family, circuit.name());
    }
}
