//! Cross-checks the density-matrix evaluator against the independent
//! trajectory-enumeration evaluator, and verifies that probing a time can
//! never influence the statistics of earlier times.

use hqmem::catalog::{self, ReferenceCircuit};
use hqmem::quantum::trajectory::trajectory_distribution;
use hqmem::quantum::{run_schedule, DilatedProcess, ProbeSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Every probing pattern of `process`, evaluated both ways.
fn check_all_schedules(process: &DilatedProcess, label: &str) {
    let n = process.n_times();
    for mask in 0..(1u32 << n) {
        let schedule = ProbeSchedule::from_mask(n, mask).unwrap();
        let dense = run_schedule(process, &schedule).unwrap();
        let traj = trajectory_distribution(process, &schedule).unwrap();
        let diff = max_abs_diff(dense.probs(), traj.probs());
        assert!(
            diff <= TOL,
            "{label} mask {mask:04b}: evaluators disagree by {diff:.3e}"
        );
    }
}

#[test]
fn reference_circuits_agree_between_evaluators_on_every_schedule() {
    for circuit in ReferenceCircuit::ALL {
        check_all_schedules(&circuit.build(), circuit.name());
    }
}

#[test]
fn random_processes_agree_between_evaluators() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE0_0E);
    for trial in 0..50 {
        let process = catalog::random::random_process(2, 2, 3, &mut rng).unwrap();
        check_all_schedules(&process, &format!("random trial {trial}"));
    }
}

#[test]
fn measuring_later_times_never_signals_to_the_past() {
    // For schedules that agree on some prefix of times and differ only at
    // strictly later times, the statistics of the shared prefix must be
    // identical: marginalizing a longer schedule over its extra (later)
    // outcomes reproduces the shorter schedule exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(0x9A57);
    for _ in 0..20 {
        let process = catalog::random::random_process(2, 2, 3, &mut rng).unwrap();
        let n = process.n_times();
        for short in 1..(1u32 << n) {
            let top = 31 - short.leading_zeros();
            for long in (short + 1)..(1u32 << n) {
                let extra = long & !short;
                if long & short != short || extra == 0 || extra & ((2 << top) - 1) != 0 {
                    continue;
                }
                let short_dist =
                    run_schedule(&process, &ProbeSchedule::from_mask(n, short).unwrap()).unwrap();
                let long_dist =
                    run_schedule(&process, &ProbeSchedule::from_mask(n, long).unwrap()).unwrap();
                let marginal = long_dist.marginal(short_dist.measured_times()).unwrap();
                let diff = max_abs_diff(short_dist.probs(), marginal.probs());
                assert!(
                    diff <= TOL,
                    "prefix {short:03b} vs {long:03b}: later probes changed the past by {diff:.3e}"
                );
            }
        }
    }
}
