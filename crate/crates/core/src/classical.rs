//! Classical memoryless models: Markov chains and their probing statistics.
//!
//! A classical memoryless process is an initial distribution plus one
//! transition matrix per step. Classical measurements do not disturb, so the
//! statistics of a probing pattern are simply the marginal of the fully
//! measured joint table — unlike the quantum case, where not measuring is a
//! physically different experiment from measuring and discarding.
//!
//! [`fit_classical`] inverts this: given a fully measured table that passes
//! the Markov check, it recovers the unique chain that reproduces it (unique
//! wherever the chain actually visits; unreachable transition columns are
//! filled uniformly and flagged).

use crate::error::{Error, Result};
use crate::stats::{
    is_markovian_distribution, times_of_mask, JointDistribution, MarkovReport, StatisticsFamily,
    EPS_ZERO,
};
use serde::{Deserialize, Serialize};

/// Validation tolerance for stochastic matrices and classical states.
pub const TOL_STOCHASTIC: f64 = 1e-10;

/// Largest joint table the classical enumerator will build.
const MAX_TABLE: usize = 1 << 24;

// ---------------------------------------------------------------------------
// Column-stochastic matrices
// ---------------------------------------------------------------------------

/// Square column-stochastic matrix: `entries[next * dim + cur]` is the
/// probability of `next` given `cur`, so every column sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StochasticRepr", into = "StochasticRepr")]
pub struct StochasticMatrix {
    dim: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StochasticRepr {
    dim: usize,
    entries: Vec<f64>,
}

impl From<StochasticMatrix> for StochasticRepr {
    fn from(m: StochasticMatrix) -> Self {
        StochasticRepr {
            dim: m.dim,
            entries: m.entries,
        }
    }
}

impl TryFrom<StochasticRepr> for StochasticMatrix {
    type Error = Error;

    fn try_from(repr: StochasticRepr) -> Result<Self> {
        StochasticMatrix::new(repr.dim, repr.entries)
    }
}

impl StochasticMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidStochastic {
                reason: "dimension must be at least 1".into(),
            });
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidStochastic {
                reason: format!("expected {} entries, got {}", dim * dim, entries.len()),
            });
        }
        for (i, &p) in entries.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidStochastic {
                    reason: format!("entry {i} is not finite"),
                });
            }
            if p < 0.0 {
                return Err(Error::InvalidStochastic {
                    reason: format!("entry {i} is negative ({p})"),
                });
            }
        }
        for cur in 0..dim {
            let total: f64 = (0..dim).map(|next| entries[next * dim + cur]).sum();
            if (total - 1.0).abs() > TOL_STOCHASTIC {
                return Err(Error::InvalidStochastic {
                    reason: format!("column {cur} sums to {total}, expected 1"),
                });
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn uniform(dim: usize) -> Self {
        let p = 1.0 / dim as f64;
        Self {
            dim,
            entries: vec![p; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `P(next | cur)`.
    pub fn get(&self, next: usize, cur: usize) -> f64 {
        self.entries[next * self.dim + cur]
    }

    /// Applies the matrix to a distribution: `q[next] = sum_cur P(next|cur) p[cur]`.
    pub fn propagate(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.dim {
            return Err(Error::InvalidStochastic {
                reason: format!("distribution has length {}, matrix dim {}", p.len(), self.dim),
            });
        }
        Ok((0..self.dim)
            .map(|next| (0..self.dim).map(|cur| self.get(next, cur) * p[cur]).sum())
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Memoryless chain models
// ---------------------------------------------------------------------------

/// A classical memoryless model: initial distribution `p1` over the outcome
/// alphabet, plus one transition matrix per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct ClassicalMemorylessModel {
    n_times: usize,
    p1: Vec<f64>,
    steps: Vec<StochasticMatrix>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    n_times: usize,
    p1: Vec<f64>,
    steps: Vec<StochasticMatrix>,
}

impl From<ClassicalMemorylessModel> for ModelRepr {
    fn from(m: ClassicalMemorylessModel) -> Self {
        ModelRepr {
            n_times: m.n_times,
            p1: m.p1,
            steps: m.steps,
        }
    }
}

impl TryFrom<ModelRepr> for ClassicalMemorylessModel {
    type Error = Error;

    fn try_from(repr: ModelRepr) -> Result<Self> {
        ClassicalMemorylessModel::new(repr.n_times, repr.p1, repr.steps)
    }
}

impl ClassicalMemorylessModel {
    pub fn new(n_times: usize, p1: Vec<f64>, steps: Vec<StochasticMatrix>) -> Result<Self> {
        if n_times == 0 {
            return Err(Error::InvalidModel {
                reason: "a model needs at least one probe time".into(),
            });
        }
        let dim = p1.len();
        if dim == 0 {
            return Err(Error::InvalidModel {
                reason: "outcome alphabet must be non-empty".into(),
            });
        }
        for (i, &p) in p1.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidModel {
                    reason: format!("initial probability {i} is invalid ({p})"),
                });
            }
        }
        let total: f64 = p1.iter().sum();
        if (total - 1.0).abs() > TOL_STOCHASTIC {
            return Err(Error::InvalidModel {
                reason: format!("initial distribution sums to {total}, expected 1"),
            });
        }
        if steps.len() != n_times - 1 {
            return Err(Error::InvalidModel {
                reason: format!(
                    "{n_times} probe times need {} transition matrices, got {}",
                    n_times - 1,
                    steps.len()
                ),
            });
        }
        for (k, step) in steps.iter().enumerate() {
            if step.dim() != dim {
                return Err(Error::InvalidModel {
                    reason: format!(
                        "transition matrix {k} has dim {}, alphabet has {dim}",
                        step.dim()
                    ),
                });
            }
        }
        Ok(Self { n_times, p1, steps })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn dim(&self) -> usize {
        self.p1.len()
    }

    pub fn p1(&self) -> &[f64] {
        &self.p1
    }

    pub fn steps(&self) -> &[StochasticMatrix] {
        &self.steps
    }

    /// The fully measured joint table, outcome at `t1` varying slowest.
    pub fn full_joint(&self) -> Result<JointDistribution> {
        let n = self.n_times;
        let d = self.dim();
        let size = d
            .checked_pow(n as u32)
            .filter(|&s| s <= MAX_TABLE)
            .ok_or_else(|| Error::InvalidModel {
                reason: format!("joint table with {d}^{n} entries is too large to enumerate"),
            })?;
        let mut probs = vec![0.0; size];
        for (index, slot) in probs.iter_mut().enumerate() {
            let mut digits = vec![0usize; n];
            let mut rest = index;
            for j in (0..n).rev() {
                digits[j] = rest % d;
                rest /= d;
            }
            let mut p = self.p1[digits[0]];
            for (k, step) in self.steps.iter().enumerate() {
                p *= step.get(digits[k + 1], digits[k]);
            }
            *slot = p;
        }
        JointDistribution::new(n, (0..n).collect(), d, probs)
    }
}

/// Statistics of one probing pattern of a classical model. Unmeasured times
/// are marginalized, because classical probes do not disturb.
pub fn classical_predict(model: &ClassicalMemorylessModel, mask: u32) -> Result<JointDistribution> {
    let full = model.full_joint()?;
    full.marginal(&times_of_mask(mask, model.n_times()))
}

/// The complete family over all probing patterns of a classical model.
pub fn classical_family(model: &ClassicalMemorylessModel) -> Result<StatisticsFamily> {
    let n = model.n_times();
    if n > 31 {
        return Err(Error::TooManyTimes {
            n_times: n,
            max: 31,
        });
    }
    let full = model.full_joint()?;
    let mut family = StatisticsFamily::new(n, model.dim())?;
    for mask in 0..=((1u32 << n) - 1) {
        family.insert(full.marginal(&times_of_mask(mask, n))?)?;
    }
    Ok(family)
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// A fitted chain together with fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalFit {
    pub model: ClassicalMemorylessModel,
    /// `(step, column)` pairs whose conditioning outcome never occurs; those
    /// columns are filled uniformly and are not determined by the data.
    pub uniform_filled: Vec<(usize, usize)>,
    /// The Markov check that licensed the fit.
    pub markov: MarkovReport,
}

/// Outcome of [`fit_classical`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClassicalFitOutcome {
    /// The table is Markovian; here is the chain that reproduces it.
    Memoryless(ClassicalFit),
    /// The table fails the Markov check, so no chain exists; the report
    /// locates the worst violation.
    NonMarkovian(MarkovReport),
}

/// Recovers a memoryless chain from a fully measured joint table.
///
/// A Markovian table is reproduced exactly by the chain built from its
/// single-time and adjacent-pair marginals; a non-Markovian table is
/// reproduced by no chain at all, and the Markov report says where it fails.
pub fn fit_classical(full: &JointDistribution, tol: f64) -> Result<ClassicalFitOutcome> {
    let n = full.n_times();
    if full.measured_times().len() != n {
        return Err(Error::InvalidDistribution {
            reason: format!(
                "classical fitting needs the fully measured pattern, got {}",
                full.pattern()
            ),
        });
    }
    let markov = is_markovian_distribution(full, tol)?;
    if !markov.markovian {
        return Ok(ClassicalFitOutcome::NonMarkovian(markov));
    }
    let d = full.outcome_dim();
    let mut weights = vec![0.0; d];
    for (x, w) in weights.iter_mut().enumerate() {
        *w = full.sum_matching(&[(0, x)])?;
    }
    let total: f64 = weights.iter().sum();
    let p1: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let mut uniform_filled = Vec::new();
    let mut steps = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let mut entries = vec![0.0; d * d];
        for cur in 0..d {
            let seen = full.sum_matching(&[(k, cur)])?;
            if seen < EPS_ZERO {
                for next in 0..d {
                    entries[next * d + cur] = 1.0 / d as f64;
                }
                uniform_filled.push((k, cur));
                continue;
            }
            let mut column = vec![0.0; d];
            for (next, value) in column.iter_mut().enumerate() {
                *value = full.sum_matching(&[(k, cur), (k + 1, next)])?;
            }
            let column_total: f64 = column.iter().sum();
            for next in 0..d {
                entries[next * d + cur] = column[next] / column_total;
            }
        }
        steps.push(StochasticMatrix::new(d, entries)?);
    }
    let model = ClassicalMemorylessModel::new(n, p1, steps)?;
    Ok(ClassicalFitOutcome::Memoryless(ClassicalFit {
        model,
        uniform_filled,
        markov,
    }))
}
