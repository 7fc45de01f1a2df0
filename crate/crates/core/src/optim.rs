//! Derivative-free minimization: Nelder-Mead with adaptive coefficients and
//! perturbed restarts.
//!
//! The coefficients scale with dimension (reflection 1, expansion `1 + 2/n`,
//! contraction `0.75 - 1/(2n)`, shrink `1 - 1/n`), which keeps the simplex
//! from collapsing prematurely in the hundreds-of-parameters regime the
//! channel fitter works in. When the simplex flattens out, the search
//! restarts from the incumbent best point with a randomly oriented simplex of
//! shrinking radius; all randomness comes from the caller-supplied generator,
//! so runs are reproducible.

use rand::Rng;

/// Options controlling a single [`nelder_mead`] run.
#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Total iteration budget across all restarts.
    pub max_iters: usize,
    /// Simplex is considered flat when the value spread drops below
    /// `convergence_tol * |best|`. The criterion is relative so that descent
    /// towards a zero minimum is never cut short; a run chasing an exact
    /// zero instead ends via `loss_floor` or the iteration budget.
    pub convergence_tol: f64,
    /// Stop immediately once the best value drops below a tenth of this
    /// floor; the caller treats values below the floor as an exact fit.
    pub loss_floor: f64,
    /// Edge length of the initial simplex around the starting point.
    pub initial_radius: f64,
    /// How many times to restart with a perturbed simplex after the spread
    /// flattens. Restart radii track the square root of the incumbent value
    /// (the expected distance to a zero minimum of unit curvature), so each
    /// round polishes at the scale the previous one reached.
    pub restarts: usize,
    /// Iteration cap per round; 0 means rounds end only on flatness. A
    /// collapsed simplex descends slowly, so cutting rounds short and
    /// restarting at the scale already reached speeds up deep descent
    /// considerably in high dimensions.
    pub round_iters: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            convergence_tol: 1e-10,
            loss_floor: 1e-12,
            initial_radius: 0.5,
            restarts: 40,
            round_iters: 0,
        }
    }
}

/// Result of a [`nelder_mead`] run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Iterations actually used, summed over restarts.
    pub iterations: usize,
    /// Whether the final simplex met the flatness criterion (as opposed to
    /// running out of budget).
    pub converged: bool,
}

struct Vertex {
    point: Vec<f64>,
    value: f64,
}

fn evaluate(f: &mut impl FnMut(&[f64]) -> f64, point: &[f64]) -> f64 {
    let value = f(point);
    if value.is_nan() {
        f64::INFINITY
    } else {
        value
    }
}

/// Builds a simplex of `dim + 1` vertices around `center`. The first vertex
/// is `center` itself; the others step along randomly signed coordinate
/// directions so restarts explore fresh orientations.
fn build_simplex(
    f: &mut impl FnMut(&[f64]) -> f64,
    center: &[f64],
    radius: f64,
    jitter: bool,
    rng: &mut impl Rng,
) -> Vec<Vertex> {
    let dim = center.len();
    let mut simplex = Vec::with_capacity(dim + 1);
    simplex.push(Vertex {
        point: center.to_vec(),
        value: evaluate(f, center),
    });
    for i in 0..dim {
        let mut point = center.to_vec();
        let step = if jitter {
            radius * rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
        } else {
            radius
        };
        point[i] += step;
        simplex.push(Vertex {
            value: evaluate(f, &point),
            point,
        });
    }
    simplex
}

fn sort_simplex(simplex: &mut [Vertex]) {
    // Stable sort keeps ordering deterministic when values tie.
    simplex.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
}

fn spread_is_flat(simplex: &[Vertex], tol: f64) -> bool {
    let best = simplex.first().expect("non-empty simplex").value;
    let worst = simplex.last().expect("non-empty simplex").value;
    best.is_finite() && (worst - best) <= tol * best.abs()
}

/// Minimizes `f` starting from `start`. The generator drives only the
/// simplex orientations used after restarts, so two calls with equal inputs
/// and generator state produce identical output.
pub fn nelder_mead(
    f: &mut impl FnMut(&[f64]) -> f64,
    start: &[f64],
    options: &NelderMeadOptions,
    rng: &mut impl Rng,
) -> Minimum {
    let dim = start.len();
    assert!(dim >= 1, "cannot optimize over zero parameters");
    let n = dim as f64;
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / n;
    let gamma = 0.75 - 1.0 / (2.0 * n);
    let delta = 1.0 - 1.0 / n;
    let early_exit = options.loss_floor * 0.1;

    let mut best_point = start.to_vec();
    let mut best_value = evaluate(f, start);
    let mut iterations = 0;
    let mut converged = false;

    'rounds: for round in 0..=options.restarts {
        let radius = if round == 0 {
            options.initial_radius
        } else if best_value > 0.0 && best_value.is_finite() {
            best_value.sqrt().min(options.initial_radius).max(1e-9)
        } else {
            options.initial_radius * 0.5f64.powi(round as i32)
        };
        let mut simplex = build_simplex(f, &best_point, radius, round > 0, rng);
        sort_simplex(&mut simplex);
        let round_end = if options.round_iters == 0 {
            options.max_iters
        } else {
            (iterations + options.round_iters).min(options.max_iters)
        };

        while iterations < round_end {
            if simplex[0].value < best_value {
                best_value = simplex[0].value;
                best_point.clone_from(&simplex[0].point);
            }
            if best_value < early_exit {
                converged = true;
                break 'rounds;
            }
            if spread_is_flat(&simplex, options.convergence_tol) {
                converged = true;
                continue 'rounds;
            }
            iterations += 1;

            let worst = simplex.len() - 1;
            let mut centroid = vec![0.0; dim];
            for vertex in &simplex[..worst] {
                for (c, &x) in centroid.iter_mut().zip(&vertex.point) {
                    *c += x;
                }
            }
            for c in &mut centroid {
                *c /= worst as f64;
            }
            let towards = |coef: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[worst].point)
                    .map(|(&c, &xh)| c + coef * (c - xh))
                    .collect()
            };

            let reflected = towards(alpha);
            let f_reflected = evaluate(f, &reflected);
            if f_reflected < simplex[0].value {
                let expanded = towards(alpha * beta);
                let f_expanded = evaluate(f, &expanded);
                if f_expanded < f_reflected {
                    simplex[worst] = Vertex {
                        point: expanded,
                        value: f_expanded,
                    };
                } else {
                    simplex[worst] = Vertex {
                        point: reflected,
                        value: f_reflected,
                    };
                }
            } else if f_reflected < simplex[worst - 1].value {
                simplex[worst] = Vertex {
                    point: reflected,
                    value: f_reflected,
                };
            } else if f_reflected < simplex[worst].value {
                let contracted = towards(alpha * gamma);
                let f_contracted = evaluate(f, &contracted);
                if f_contracted <= f_reflected {
                    simplex[worst] = Vertex {
                        point: contracted,
                        value: f_contracted,
                    };
                } else {
                    shrink(f, &mut simplex, delta);
                }
            } else {
                let contracted = towards(-gamma);
                let f_contracted = evaluate(f, &contracted);
                if f_contracted < simplex[worst].value {
                    simplex[worst] = Vertex {
                        point: contracted,
                        value: f_contracted,
                    };
                } else {
                    shrink(f, &mut simplex, delta);
                }
            }
            sort_simplex(&mut simplex);
        }

        if simplex[0].value < best_value {
            best_value = simplex[0].value;
            best_point.clone_from(&simplex[0].point);
        }
        if iterations >= options.max_iters {
            break;
        }
    }

    Minimum {
        point: best_point,
        value: best_value,
        iterations,
        converged,
    }
}

fn shrink(f: &mut impl FnMut(&[f64]) -> f64, simplex: &mut [Vertex], delta: f64) {
    let (first, rest) = simplex.split_first_mut().expect("non-empty simplex");
    for vertex in rest {
        for (x, &b) in vertex.point.iter_mut().zip(&first.point) {
            *x = b + delta * (*x - b);
        }
        vertex.value = evaluate(f, &vertex.point);
    }
}

// ---------------------------------------------------------------------------
// Least-squares polish
// ---------------------------------------------------------------------------

/// Options for [`levenberg_marquardt`].
#[derive(Debug, Clone)]
pub struct LeastSquaresOptions {
    /// Maximum damping adjustments plus accepted steps.
    pub max_steps: usize,
    /// Forward-difference step, scaled by `1 + |x_j|` per coordinate.
    pub fd_step: f64,
    /// Stop once the sum of squared residuals drops below a tenth of this.
    pub loss_floor: f64,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        Self {
            max_steps: 60,
            fd_step: 1e-7,
            loss_floor: 1e-12,
        }
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky
/// factorization. Only the lower triangle of `A` is read, so callers may
/// leave the strictly-upper entries unset. Returns `None` when `A` is not
/// numerically positive definite.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for (lik, ljk) in l[i].iter().zip(&l[j]).take(j) {
                sum -= lik * ljk;
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

/// Levenberg-Marquardt refinement of a least-squares problem
/// `min_x |r(x)|^2`, with the Jacobian taken by forward differences.
///
/// Intended as a polish phase: started inside the basin of a zero-residual
/// minimum it converges quadratically, which a simplex method cannot do.
/// Fully deterministic.
pub fn levenberg_marquardt(
    residuals: &mut impl FnMut(&[f64], &mut Vec<f64>),
    start: &[f64],
    options: &LeastSquaresOptions,
) -> Minimum {
    let n = start.len();
    let mut x = start.to_vec();
    let mut r = Vec::new();
    residuals(&x, &mut r);
    let m = r.len();
    let loss_of = |r: &[f64]| -> f64 { r.iter().map(|v| v * v).sum() };
    let mut loss = loss_of(&r);
    let mut lambda = 1e-3;
    let mut steps = 0;
    let mut converged = loss < options.loss_floor * 0.1;

    let mut jacobian = vec![vec![0.0; n]; m];
    let mut r_probe = Vec::new();
    while steps < options.max_steps && !converged {
        // Forward-difference Jacobian at the current point.
        for j in 0..n {
            let h = options.fd_step * (1.0 + x[j].abs());
            let saved = x[j];
            x[j] = saved + h;
            residuals(&x, &mut r_probe);
            x[j] = saved;
            if r_probe.len() != m {
                // Probe left the feasible region; treat the direction as
                // flat rather than corrupting the Jacobian.
                for row in jacobian.iter_mut() {
                    row[j] = 0.0;
                }
                continue;
            }
            for i in 0..m {
                jacobian[i][j] = (r_probe[i] - r[i]) / h;
            }
        }
        // Normal equations with Marquardt scaling of the damping term. Only
        // the lower triangle of J^T J is accumulated; the Cholesky solver
        // reads nothing above the diagonal.
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for i in 0..m {
            for a in 0..n {
                let ja = jacobian[i][a];
                jtr[a] += ja * r[i];
                for b in 0..=a {
                    jtj[a][b] += ja * jacobian[i][b];
                }
            }
        }
        let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();

        // Inner damping loop: grow lambda until a step is accepted.
        let mut accepted = false;
        while steps < options.max_steps {
            steps += 1;
            let mut damped = jtj.clone();
            for a in 0..n {
                damped[a][a] += lambda * (jtj[a][a] + 1e-12);
            }
            if let Some(delta) = cholesky_solve(&damped, &rhs) {
                let trial: Vec<f64> = x.iter().zip(&delta).map(|(&a, &d)| a + d).collect();
                residuals(&trial, &mut r_probe);
                let trial_loss = if r_probe.len() == m {
                    loss_of(&r_probe)
                } else {
                    f64::INFINITY
                };
                if trial_loss.is_finite() && trial_loss < loss {
                    let improvement = loss - trial_loss;
                    x = trial;
                    std::mem::swap(&mut r, &mut r_probe);
                    loss = trial_loss;
                    lambda = (lambda / 3.0).max(1e-14);
                    accepted = true;
                    // A vanishing relative improvement means the local
                    // residual floor is reached; stop instead of burning the
                    // budget on damping adjustments.
                    if improvement < 1e-9 * loss {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if loss < options.loss_floor * 0.1 {
            converged = true;
        }
        if !accepted || converged {
            break;
        }
    }

    Minimum {
        point: x,
        value: loss,
        iterations: steps,
        converged,
    }
}
