//! Independent cross-check for the density-matrix simulator.
//!
//! [`trajectory_distribution`] recomputes schedule statistics without ever
//! forming a density matrix mid-run: the initial state is eigendecomposed
//! into pure components, each component is propagated as an amplitude vector
//! through every Kraus branch of every step, measurements keep the amplitude
//! block of one outcome, and the probability of an outcome tuple is the
//! eigenvalue-weighted sum of squared norms over all surviving branches.
//!
//! It shares only the primitive matrix operations with [`run_schedule`] --
//! none of the channel-application or projection code paths -- so agreement
//! between the two is meaningful evidence of correctness. It is exponentially
//! slower in branch count and exists only for tests and debugging.
//!
//! [`run_schedule`]: crate::quantum::run_schedule

use num_complex::Complex64;

use crate::error::Result;
use crate::numerics::ComplexMatrix;
use crate::quantum::{DilatedProcess, ProbeSchedule};
use crate::stats::JointDistribution;

/// Eigenvalues of the initial state below this weight are dropped; they are
/// either exact zeros or round-off from the eigensolver.
const EIGENVALUE_CUTOFF: f64 = 1e-14;

fn norm_sqr(vec: &[Complex64]) -> f64 {
    vec.iter().map(|z| z.norm_sqr()).sum()
}

fn apply_operator(op: &ComplexMatrix, vec: &[Complex64]) -> Vec<Complex64> {
    let dim = op.rows();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for (r, out_r) in out.iter_mut().enumerate() {
        for (k, v) in vec.iter().enumerate() {
            *out_r += op[(r, k)] * v;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    process: &DilatedProcess,
    schedule: &ProbeSchedule,
    weight: f64,
    vec: Vec<Complex64>,
    time: usize,
    prefix: usize,
    probs: &mut [f64],
) {
    let d = process.d_sys();
    let d_env = process.d_env();
    let n = process.n_times();

    let branches: Vec<(usize, Vec<Complex64>)> = if schedule.is_measured(time) {
        (0..d)
            .map(|x| {
                let mut projected = vec![Complex64::new(0.0, 0.0); vec.len()];
                projected[x * d_env..(x + 1) * d_env]
                    .copy_from_slice(&vec[x * d_env..(x + 1) * d_env]);
                (prefix * d + x, projected)
            })
            .collect()
    } else {
        vec![(prefix, vec)]
    };

    for (new_prefix, branch) in branches {
        if norm_sqr(&branch) == 0.0 {
            continue;
        }
        if time + 1 == n {
            probs[new_prefix] += weight * norm_sqr(&branch);
        } else {
            for kraus in process.steps()[time].kraus_ops() {
                walk(
                    process,
                    schedule,
                    weight,
                    apply_operator(kraus, &branch),
                    time + 1,
                    new_prefix,
                    probs,
                );
            }
        }
    }
}

/// Recomputes [`run_schedule`] statistics by pure-state trajectory
/// enumeration.
///
/// [`run_schedule`]: crate::quantum::run_schedule
pub fn trajectory_distribution(
    process: &DilatedProcess,
    schedule: &ProbeSchedule,
) -> Result<JointDistribution> {
    if schedule.n_times() != process.n_times() {
        return Err(crate::error::Error::ScheduleMismatch {
            schedule_times: schedule.n_times(),
            process_times: process.n_times(),
        });
    }
    let d = process.d_sys();
    let k = schedule.count_measured();
    let mut probs = vec![0.0; d.pow(k as u32)];
    let (weights, vectors) = process.initial_state().matrix().hermitian_eigen()?;
    for (i, &weight) in weights.iter().enumerate() {
        if weight < EIGENVALUE_CUTOFF {
            continue;
        }
        let component: Vec<Complex64> = (0..vectors.rows()).map(|r| vectors[(r, i)]).collect();
        walk(process, schedule, weight, component, 0, 0, &mut probs);
    }
    JointDistribution::new(
        process.n_times(),
        schedule.measured_times(),
        d,
        probs,
    )
}
