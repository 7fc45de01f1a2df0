//! Memoryless quantum models and the numerical memorylessness certifier.
//!
//! A memoryless model is a system-only initial state plus one channel per
//! step: the special case of a dilated process with a trivial environment.
//! Its statistics factor through the quantum regression structure — the
//! conditional for the next outcome depends on the history only through the
//! latest measured outcome, and skipping a probe changes nothing upstream.
//!
//! [`fit_memoryless`] searches this model class numerically for a best fit
//! to a given statistics family, parameterizing channels through the
//! matrix exponential of an anti-Hermitian dilation generator so that every
//! parameter vector maps to an exactly trace-preserving channel.
//! [`certify`] combines the analytic witnesses with the fit into a single
//! conclusion.

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::optim::{levenberg_marquardt, nelder_mead, LeastSquaresOptions, NelderMeadOptions};
use crate::quantum::{all_pattern_statistics, DensityOperator, DilatedProcess, KrausChannel};
use crate::stats::{witness_hidden_memory, AnalysisReport, StatisticsFamily, Verdict};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Memoryless models
// ---------------------------------------------------------------------------

/// A memoryless quantum model: initial state on the probed space alone, one
/// channel per step, no environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct MemorylessQuantumModel {
    d: usize,
    rho1: DensityOperator,
    channels: Vec<KrausChannel>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    n_times: usize,
    d: usize,
    rho1: DensityOperator,
    channels: Vec<KrausChannel>,
}

impl From<MemorylessQuantumModel> for ModelRepr {
    fn from(m: MemorylessQuantumModel) -> Self {
        ModelRepr {
            n_times: m.n_times(),
            d: m.d,
            rho1: m.rho1,
            channels: m.channels,
        }
    }
}

impl TryFrom<ModelRepr> for MemorylessQuantumModel {
    type Error = Error;

    fn try_from(repr: ModelRepr) -> Result<Self> {
        let model = MemorylessQuantumModel::new(repr.d, repr.rho1, repr.channels)?;
        if model.n_times() != repr.n_times {
            return Err(Error::InvalidModel {
                reason: format!(
                    "declared {} probe times but {} channels",
                    repr.n_times,
                    model.channels.len()
                ),
            });
        }
        Ok(model)
    }
}

impl MemorylessQuantumModel {
    pub fn new(d: usize, rho1: DensityOperator, channels: Vec<KrausChannel>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidModel {
                reason: format!("outcome dimension {d} is too small to measure"),
            });
        }
        if rho1.dim() != d {
            return Err(Error::InvalidModel {
                reason: format!("initial state has dimension {}, expected {d}", rho1.dim()),
            });
        }
        for (i, channel) in channels.iter().enumerate() {
            if channel.dim() != d {
                return Err(Error::InvalidModel {
                    reason: format!("channel {i} has dimension {}, expected {d}", channel.dim()),
                });
            }
        }
        Ok(Self { d, rho1, channels })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_times(&self) -> usize {
        self.channels.len() + 1
    }

    pub fn rho1(&self) -> &DensityOperator {
        &self.rho1
    }

    pub fn channels(&self) -> &[KrausChannel] {
        &self.channels
    }

    /// The same model viewed as a dilated process with a one-dimensional
    /// environment, so the simulator applies unchanged.
    pub fn as_dilated(&self) -> DilatedProcess {
        DilatedProcess::new(self.d, 1, self.rho1.clone(), self.channels.clone())
            .expect("memoryless model is a valid trivially dilated process")
    }
}

/// Statistics of every probing pattern of a memoryless model.
pub fn qrf_family(model: &MemorylessQuantumModel) -> Result<StatisticsFamily> {
    all_pattern_statistics(&model.as_dilated())
}

// ---------------------------------------------------------------------------
// Parameterization
// ---------------------------------------------------------------------------

/// Number of real parameters for a model with outcome dimension `d`,
/// Stinespring ancilla dimension `ancilla`, and `n_steps` channels.
///
/// The state takes `2 d^2` reals (a complex factor `G` with
/// `rho = G G^dag / tr`). Each channel takes `d^2 (2 ancilla - 1)` reals:
/// an anti-Hermitian generator on the `d * ancilla` dilation whose entries
/// outside the first `d` rows and columns are zero. Exponentials of such
/// generators reach every point of the isometry manifold (they are its
/// geodesics through the identity embedding), so the count is exactly the
/// manifold dimension `2 (d * ancilla) d - d^2` — no wasted directions.
pub fn params_len(d: usize, ancilla: usize, n_steps: usize) -> usize {
    2 * d * d + n_steps * d * d * (2 * ancilla - 1)
}

fn state_from_params(d: usize, chunk: &[f64]) -> DensityOperator {
    debug_assert_eq!(chunk.len(), 2 * d * d);
    let g = ComplexMatrix::from_fn(d, d, |r, c| {
        let k = 2 * (r * d + c);
        Complex64::new(chunk[k], chunk[k + 1])
    });
    let gram = g.matmul(&g.dagger()).expect("square");
    let trace = gram.trace().re;
    if trace <= 0.0 {
        return DensityOperator::maximally_mixed(d);
    }
    DensityOperator::new(gram.scale(Complex64::new(1.0 / trace, 0.0)))
        .expect("normalized Gram matrix is a state")
}

fn channel_from_params(d: usize, ancilla: usize, chunk: &[f64]) -> KrausChannel {
    let dim = d * ancilla;
    debug_assert_eq!(chunk.len(), d * d * (2 * ancilla - 1));
    // Anti-Hermitian generator supported on the first d rows and columns:
    // an anti-Hermitian d x d corner plus a free complex (dim - d) x d
    // block mirrored with a sign. The dilation index is ancilla-major
    // (l * d + s), so the first d columns of the exponential are the
    // Stinespring isometry and the Kraus operators are its row blocks.
    let mut a = ComplexMatrix::zeros(dim, dim);
    let mut k = 0;
    for i in 0..d {
        a[(i, i)] = Complex64::new(0.0, chunk[k]);
        k += 1;
    }
    for i in 0..d {
        for j in i + 1..d {
            let (re, im) = (chunk[k], chunk[k + 1]);
            k += 2;
            a[(i, j)] = Complex64::new(re, im);
            a[(j, i)] = Complex64::new(-re, im);
        }
    }
    for i in d..dim {
        for j in 0..d {
            let (re, im) = (chunk[k], chunk[k + 1]);
            k += 2;
            a[(i, j)] = Complex64::new(re, im);
            a[(j, i)] = Complex64::new(-re, im);
        }
    }
    debug_assert_eq!(k, chunk.len());
    let u = a.matrix_exp().expect("square generator exponentiates");
    let ops = (0..ancilla)
        .map(|l| ComplexMatrix::from_fn(d, d, |r, c| u[(l * d + r, c)]))
        .collect();
    KrausChannel::new(ops).expect("exponential of an anti-Hermitian generator is unitary")
}

/// Builds the full model from a flat parameter vector.
pub fn model_from_params(
    d: usize,
    ancilla: usize,
    n_times: usize,
    params: &[f64],
) -> Result<MemorylessQuantumModel> {
    let n_steps = n_times.saturating_sub(1);
    let expected = params_len(d, ancilla, n_steps);
    if params.len() != expected {
        return Err(Error::InvalidConfig {
            reason: format!("expected {expected} parameters, got {}", params.len()),
        });
    }
    let state_len = 2 * d * d;
    let step_len = d * d * (2 * ancilla - 1);
    let rho1 = state_from_params(d, &params[..state_len]);
    let channels = (0..n_steps)
        .map(|k| {
            let lo = state_len + k * step_len;
            channel_from_params(d, ancilla, &params[lo..lo + step_len])
        })
        .collect();
    MemorylessQuantumModel::new(d, rho1, channels)
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Configuration for [`fit_memoryless`] and [`certify`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Independent optimizer starts; the best result wins.
    pub n_starts: usize,
    /// Iteration budget per start.
    pub max_iters: usize,
    /// Seed for the deterministic per-start generators.
    pub seed: u64,
    /// Stinespring ancilla dimension; `None` means `d^2`, which covers every
    /// channel on the outcome space.
    pub ancilla_dim: Option<usize>,
    /// Relative simplex-spread convergence threshold.
    pub convergence_tol: f64,
    /// Losses below this are treated as an exact fit.
    pub loss_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 32,
            max_iters: 5000,
            seed: 0,
            ancilla_dim: None,
            convergence_tol: 1e-10,
            loss_floor: 1e-12,
        }
    }
}

/// Summary statistics of a multistart fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub best_loss: f64,
    /// Index of the winning start (lowest loss; ties go to the lowest index).
    pub best_start: usize,
    /// Final loss of every start, in start order.
    pub per_start_losses: Vec<f64>,
    pub ancilla_dim: usize,
    pub n_params: usize,
}

/// A fitted model with its fit summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MemorylessQuantumModel,
    pub summary: FitSummary,
}

/// Sum of squared differences between the model's family and the target,
/// over every pattern and outcome tuple.
pub fn family_loss(model: &MemorylessQuantumModel, target: &StatisticsFamily) -> Result<f64> {
    let predicted = qrf_family(model)?;
    let mut loss = 0.0;
    for (mask, dist) in target.iter() {
        let Some(pred) = predicted.get(*mask) else {
            return Err(Error::Internal {
                reason: format!("predicted family is missing mask {mask:b}"),
            });
        };
        for (p, q) in pred.probs().iter().zip(dist.probs()) {
            loss += (p - q) * (p - q);
        }
    }
    Ok(loss)
}

/// SplitMix64 step, used to derive independent per-start seeds.
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Writes the flattened residual vector `predicted - target` into `out`, in
/// ascending mask order and row order within each pattern.
fn fill_residuals(
    model: &MemorylessQuantumModel,
    target: &StatisticsFamily,
    out: &mut Vec<f64>,
) -> Result<()> {
    let predicted = qrf_family(model)?;
    out.clear();
    for (mask, dist) in target.iter() {
        let pred = predicted.get(*mask).ok_or_else(|| Error::Internal {
            reason: format!("predicted family is missing mask {mask:b}"),
        })?;
        for (p, q) in pred.probs().iter().zip(dist.probs()) {
            out.push(p - q);
        }
    }
    Ok(())
}

fn run_one_start(
    target: &StatisticsFamily,
    d: usize,
    ancilla: usize,
    n_times: usize,
    config: &FitConfig,
    start_index: usize,
) -> (f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, start_index as u64));
    let n_params = params_len(d, ancilla, n_times - 1);
    let start: Vec<f64> = (0..n_params).map(|_| gaussian(&mut rng)).collect();
    let mut loss = |params: &[f64]| -> f64 {
        match model_from_params(d, ancilla, n_times, params) {
            Ok(model) => family_loss(&model, target).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    // Phase one: simplex descent locates a basin.
    let options = NelderMeadOptions {
        max_iters: config.max_iters,
        convergence_tol: config.convergence_tol,
        loss_floor: config.loss_floor,
        initial_radius: 0.5,
        restarts: 40,
        round_iters: 0,
    };
    let rough = nelder_mead(&mut loss, &start, &options, &mut rng);
    // Phase two: least-squares refinement. The loss is a sum of squares, so
    // inside the basin of an exact model this converges quadratically where
    // the simplex would crawl; on an infeasible target it settles on the
    // local residual floor instead.
    let mut residuals = |params: &[f64], out: &mut Vec<f64>| {
        match model_from_params(d, ancilla, n_times, params) {
            Ok(model) => {
                if fill_residuals(&model, target, out).is_err() {
                    out.clear();
                    out.push(f64::INFINITY);
                }
            }
            Err(_) => {
                out.clear();
                out.push(f64::INFINITY);
            }
        }
    };
    let polish_options = LeastSquaresOptions {
        max_steps: 60,
        fd_step: 1e-7,
        loss_floor: config.loss_floor,
    };
    let polished = levenberg_marquardt(&mut residuals, &rough.point, &polish_options);
    if polished.value <= rough.value {
        (polished.value, polished.point)
    } else {
        (rough.value, rough.point)
    }
}

/// Multistart search for the memoryless model closest to `family`.
///
/// Deterministic for fixed `config`, including across `threads` values: the
/// per-start work depends only on the start index, and the reduction picks
/// the lowest loss with ties broken by the lowest start index.
pub fn fit_memoryless(
    family: &StatisticsFamily,
    config: &FitConfig,
    threads: usize,
) -> Result<FitResult> {
    family.require_complete()?;
    if config.n_starts == 0 {
        return Err(Error::InvalidConfig {
            reason: "need at least one start".into(),
        });
    }
    if threads == 0 {
        return Err(Error::InvalidConfig {
            reason: "need at least one thread".into(),
        });
    }
    let d = family.outcome_dim();
    let n_times = family.n_times();
    let ancilla = config.ancilla_dim.unwrap_or(d * d);
    if ancilla == 0 {
        return Err(Error::InvalidConfig {
            reason: "ancilla dimension must be at least 1".into(),
        });
    }

    let mut outcomes: Vec<(f64, Vec<f64>)> = Vec::with_capacity(config.n_starts);
    if threads == 1 {
        for k in 0..config.n_starts {
            outcomes.push(run_one_start(family, d, ancilla, n_times, config, k));
        }
    } else {
        let mut slots: Vec<Option<(f64, Vec<f64>)>> = vec![None; config.n_starts];
        std::thread::scope(|scope| {
            for (worker, chunk) in slots.chunks_mut(config.n_starts.div_ceil(threads)).enumerate() {
                let base = worker * config.n_starts.div_ceil(threads);
                scope.spawn(move || {
                    for (offset, slot) in chunk.iter_mut().enumerate() {
                        *slot =
                            Some(run_one_start(family, d, ancilla, n_times, config, base + offset));
                    }
                });
            }
        });
        outcomes = slots
            .into_iter()
            .map(|slot| slot.expect("every start ran"))
            .collect();
    }

    let per_start_losses: Vec<f64> = outcomes.iter().map(|(loss, _)| *loss).collect();
    let best_start = per_start_losses
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(k, _)| k)
        .expect("at least one start");
    let model = model_from_params(d, ancilla, n_times, &outcomes[best_start].1)?;
    Ok(FitResult {
        model,
        summary: FitSummary {
            best_loss: per_start_losses[best_start],
            best_start,
            per_start_losses,
            ancilla_dim: ancilla,
            n_params: params_len(d, ancilla, n_times - 1),
        },
    })
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

/// Outcome of [`certify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Conclusion {
    /// The fit reproduces the family below the loss floor: a memoryless
    /// model exists (up to numerical precision).
    ModelFound,
    /// An analytic witness rules out every memoryless model.
    NoModelWitnessed,
    /// No witness fired and the fit did not reach the floor; the search says
    /// nothing conclusive.
    Inconclusive,
}

impl std::fmt::Display for Conclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Conclusion::ModelFound => "MODEL_FOUND",
            Conclusion::NoModelWitnessed => "NO_MODEL_WITNESSED",
            Conclusion::Inconclusive => "INCONCLUSIVE",
        };
        f.write_str(name)
    }
}

/// Full certification record: analytic witnesses plus the numerical fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyReport {
    pub witness: AnalysisReport,
    pub fit: FitSummary,
    pub best_model: MemorylessQuantumModel,
    pub conclusion: Conclusion,
}

/// Runs both the analytic witnesses and the numerical fit on a family.
///
/// Both always run: the fit residual is reported even when a witness already
/// settles the question, because its magnitude is evidence about how far
/// from memoryless the family is.
pub fn certify(
    family: &StatisticsFamily,
    config: &FitConfig,
    threads: usize,
    tol: f64,
) -> Result<CertifyReport> {
    let witness = witness_hidden_memory(family, tol)?;
    let fit = fit_memoryless(family, config, threads)?;
    let conclusion = if witness.verdict != Verdict::ConsistentWithMemoryless {
        Conclusion::NoModelWitnessed
    } else if fit.summary.best_loss < config.loss_floor {
        Conclusion::ModelFound
    } else {
        Conclusion::Inconclusive
    };
    Ok(CertifyReport {
        witness,
        fit: fit.summary,
        best_model: fit.model,
        conclusion,
    })
}
