//! Multi-time outcome statistics and the checks that classify them.
//!
//! A [`JointDistribution`] holds the outcome probabilities for one probing
//! pattern (which of the times `t1..tn` were measured); a
//! [`StatisticsFamily`] collects one distribution per pattern. The analyzers
//! in this module decide, from the family alone, whether the statistics could
//! have come from a memoryless model:
//!
//! * [`is_markovian_full`] - the usual Markov property of the pattern where
//!   every time is measured;
//! * [`is_markovian_sub`] - the same property for every pattern, treating
//!   unmeasured times as "nothing happened" rather than marginalizing;
//! * [`is_compatible`] - agreement of the conditional `P(x_j | x_i)` across
//!   all patterns where `t_i` is the last measured time before `t_j`;
//! * [`kolmogorov_consistent`] - whether sub-pattern statistics equal
//!   marginals of the fully measured pattern (classically true, quantum
//!   mechanically not).
//!
//! [`witness_hidden_memory`] combines them into a single verdict. A family
//! whose fully measured statistics are Markovian but whose sub-statistics are
//! non-Markovian or incompatible cannot be realized by any memoryless model,
//! classical or quantum -- that is the hidden-memory signature.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default tolerance for comparing probabilities and conditionals.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Conditioning events with probability below this are treated as impossible:
/// conditionals on them are defined as 0 and comparisons involving them are
/// skipped (and reported as skipped).
pub const EPS_ZERO: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Pattern helpers
// ---------------------------------------------------------------------------

/// Parses a pattern string like `"1011"` (t1 leftmost, `1` = measured) into a
/// bitmask with bit `j` set iff time `j` is measured.
pub fn pattern_to_mask(pattern: &str, n_times: usize) -> Result<u32> {
    if pattern.len() != n_times {
        return Err(Error::InvalidPattern {
            pattern: pattern.to_string(),
            reason: format!("expected {n_times} characters, got {}", pattern.len()),
        });
    }
    let mut mask = 0u32;
    for (j, ch) in pattern.chars().enumerate() {
        match ch {
            '1' => mask |= 1 << j,
            '0' => {}
            _ => {
                return Err(Error::InvalidPattern {
                    pattern: pattern.to_string(),
                    reason: format!("unexpected character {ch:?}; only '0' and '1' are allowed"),
                })
            }
        }
    }
    Ok(mask)
}

/// Inverse of [`pattern_to_mask`].
pub fn mask_to_pattern(mask: u32, n_times: usize) -> String {
    (0..n_times)
        .map(|j| if mask & (1 << j) != 0 { '1' } else { '0' })
        .collect()
}

/// Sorted list of measured time indices for a mask.
pub fn times_of_mask(mask: u32, n_times: usize) -> Vec<usize> {
    (0..n_times).filter(|j| mask & (1 << j) != 0).collect()
}

// ---------------------------------------------------------------------------
// JointDistribution
// ---------------------------------------------------------------------------

/// Joint outcome distribution for one probing pattern.
///
/// Probabilities are stored flat with the outcome at the *earliest* measured
/// time varying slowest: for measured times `(t1, t3)` with outcome dimension
/// 2 the order is `(0,0), (0,1), (1,0), (1,1)` as `(x1, x3)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    n_times: usize,
    measured_times: Vec<usize>,
    outcome_dim: usize,
    probs: Vec<f64>,
}

impl JointDistribution {
    /// Validates and builds a distribution. Entries may be negative by at
    /// most [`EPS_ZERO`] (simulation round-off); such entries are clamped to
    /// zero. The total must be 1 within `1e-9`.
    pub fn new(
        n_times: usize,
        measured_times: Vec<usize>,
        outcome_dim: usize,
        mut probs: Vec<f64>,
    ) -> Result<Self> {
        if n_times == 0 {
            return Err(Error::InvalidDistribution {
                reason: "a process needs at least one probe time".into(),
            });
        }
        if !measured_times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidDistribution {
                reason: "measured times must be strictly increasing".into(),
            });
        }
        if let Some(&last) = measured_times.last() {
            if last >= n_times {
                return Err(Error::InvalidDistribution {
                    reason: format!("measured time index {last} out of range for {n_times} times"),
                });
            }
        }
        let k = measured_times.len();
        if k > 0 && outcome_dim < 1 {
            return Err(Error::InvalidDistribution {
                reason: "outcome dimension must be at least 1".into(),
            });
        }
        let expected_len = outcome_dim.max(1).pow(k as u32);
        let expected_len = if k == 0 { 1 } else { expected_len };
        if probs.len() != expected_len {
            return Err(Error::InvalidDistribution {
                reason: format!(
                    "expected {expected_len} probabilities for {k} measured times, got {}",
                    probs.len()
                ),
            });
        }
        for (index, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if *p < 0.0 {
                if *p < -EPS_ZERO {
                    return Err(Error::NegativeProbability { value: *p, index });
                }
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DEFAULT_TOL {
            return Err(Error::NotNormalized { sum, tol: DEFAULT_TOL });
        }
        Ok(Self {
            n_times,
            measured_times,
            outcome_dim,
            probs,
        })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn measured_times(&self) -> &[usize] {
        &self.measured_times
    }

    pub fn outcome_dim(&self) -> usize {
        self.outcome_dim
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mask(&self) -> u32 {
        self.measured_times.iter().fold(0, |m, &t| m | (1 << t))
    }

    pub fn pattern(&self) -> String {
        mask_to_pattern(self.mask(), self.n_times)
    }

    /// Flat index of an outcome tuple (one outcome per measured time, in time
    /// order).
    pub fn index_of(&self, outcomes: &[usize]) -> Result<usize> {
        let k = self.measured_times.len();
        if outcomes.len() != k {
            return Err(Error::OutcomeCount {
                expected: k,
                got: outcomes.len(),
            });
        }
        let mut index = 0;
        for &x in outcomes {
            if x >= self.outcome_dim {
                return Err(Error::OutcomeOutOfRange {
                    outcome: x,
                    dim: self.outcome_dim,
                });
            }
            index = index * self.outcome_dim + x;
        }
        Ok(index)
    }

    /// Outcome tuple for a flat index (inverse of [`Self::index_of`]).
    pub fn outcomes_of(&self, mut index: usize) -> Vec<usize> {
        let k = self.measured_times.len();
        let mut outcomes = vec![0; k];
        for slot in (0..k).rev() {
            outcomes[slot] = index % self.outcome_dim;
            index /= self.outcome_dim;
        }
        outcomes
    }

    /// Probability of one outcome tuple.
    pub fn prob(&self, outcomes: &[usize]) -> Result<f64> {
        Ok(self.probs[self.index_of(outcomes)?])
    }

    /// Sum of probabilities over all tuples matching the given constraints
    /// (`(time, outcome)` pairs); unconstrained times are summed over.
    pub fn sum_matching(&self, constraints: &[(usize, usize)]) -> Result<f64> {
        // Map each constraint onto its slot in the tuple.
        let mut fixed: Vec<(usize, usize)> = Vec::with_capacity(constraints.len());
        for &(time, outcome) in constraints {
            let slot = self
                .measured_times
                .iter()
                .position(|&t| t == time)
                .ok_or_else(|| Error::TimeNotMeasured {
                    time,
                    pattern: self.pattern(),
                })?;
            if outcome >= self.outcome_dim {
                return Err(Error::OutcomeOutOfRange {
                    outcome,
                    dim: self.outcome_dim,
                });
            }
            fixed.push((slot, outcome));
        }
        let mut total = 0.0;
        for (index, &p) in self.probs.iter().enumerate() {
            let outcomes = self.outcomes_of(index);
            if fixed.iter().all(|&(slot, x)| outcomes[slot] == x) {
                total += p;
            }
        }
        Ok(total)
    }

    /// Marginal distribution onto a subset of the measured times (summing the
    /// others out). `keep` must be sorted measured times.
    pub fn marginal(&self, keep: &[usize]) -> Result<JointDistribution> {
        if !keep.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidDistribution {
                reason: "marginal times must be strictly increasing".into(),
            });
        }
        let mut slots = Vec::with_capacity(keep.len());
        for &time in keep {
            let slot = self
                .measured_times
                .iter()
                .position(|&t| t == time)
                .ok_or_else(|| Error::TimeNotMeasured {
                    time,
                    pattern: self.pattern(),
                })?;
            slots.push(slot);
        }
        let k_out = keep.len();
        let len_out = if k_out == 0 { 1 } else { self.outcome_dim.pow(k_out as u32) };
        let mut probs = vec![0.0; len_out];
        for (index, &p) in self.probs.iter().enumerate() {
            let outcomes = self.outcomes_of(index);
            let mut out_index = 0;
            for &slot in &slots {
                out_index = out_index * self.outcome_dim + outcomes[slot];
            }
            probs[out_index] += p;
        }
        JointDistribution::new(self.n_times, keep.to_vec(), self.outcome_dim, probs)
    }
}

/// Serialized form: `{n_times, pattern, dims, probs}` where `dims` lists the
/// outcome dimension of each measured time in order.
#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    n_times: usize,
    pattern: String,
    dims: Vec<usize>,
    probs: Vec<f64>,
}

impl Serialize for JointDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DistributionRepr {
            n_times: self.n_times,
            pattern: self.pattern(),
            dims: vec![self.outcome_dim; self.measured_times.len()],
            probs: self.probs.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for JointDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = DistributionRepr::deserialize(deserializer)?;
        let mask =
            pattern_to_mask(&repr.pattern, repr.n_times).map_err(serde::de::Error::custom)?;
        let times = times_of_mask(mask, repr.n_times);
        if repr.dims.len() != times.len() {
            return Err(serde::de::Error::custom(format!(
                "pattern {} has {} measured times but dims lists {}",
                repr.pattern,
                times.len(),
                repr.dims.len()
            )));
        }
        let outcome_dim = repr.dims.first().copied().unwrap_or(0);
        if repr.dims.iter().any(|&d| d != outcome_dim) {
            return Err(serde::de::Error::custom(
                "mixed outcome dimensions are not supported",
            ));
        }
        JointDistribution::new(repr.n_times, times, outcome_dim, repr.probs)
            .map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// StatisticsFamily
// ---------------------------------------------------------------------------

/// One joint distribution per probing pattern, keyed by pattern bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticsFamily {
    n_times: usize,
    outcome_dim: usize,
    table: BTreeMap<u32, JointDistribution>,
}

impl StatisticsFamily {
    pub fn new(n_times: usize, outcome_dim: usize) -> Result<Self> {
        if n_times == 0 || n_times > 32 {
            return Err(Error::InvalidDistribution {
                reason: format!("unsupported number of probe times: {n_times}"),
            });
        }
        if outcome_dim < 1 {
            return Err(Error::InvalidDistribution {
                reason: "outcome dimension must be at least 1".into(),
            });
        }
        Ok(Self {
            n_times,
            outcome_dim,
            table: BTreeMap::new(),
        })
    }

    pub fn from_entries(
        n_times: usize,
        outcome_dim: usize,
        entries: Vec<JointDistribution>,
    ) -> Result<Self> {
        let mut family = Self::new(n_times, outcome_dim)?;
        for dist in entries {
            family.insert(dist)?;
        }
        Ok(family)
    }

    pub fn insert(&mut self, dist: JointDistribution) -> Result<()> {
        if dist.n_times() != self.n_times {
            return Err(Error::InvalidDistribution {
                reason: format!(
                    "distribution covers {} times, family covers {}",
                    dist.n_times(),
                    self.n_times
                ),
            });
        }
        if !dist.measured_times().is_empty() && dist.outcome_dim() != self.outcome_dim {
            return Err(Error::InvalidDistribution {
                reason: format!(
                    "distribution outcome dimension {} does not match family dimension {}",
                    dist.outcome_dim(),
                    self.outcome_dim
                ),
            });
        }
        let mask = dist.mask();
        if self.table.contains_key(&mask) {
            return Err(Error::DuplicatePattern {
                pattern: dist.pattern(),
            });
        }
        self.table.insert(mask, dist);
        Ok(())
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn outcome_dim(&self) -> usize {
        self.outcome_dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn full_mask(&self) -> u32 {
        if self.n_times == 32 {
            u32::MAX
        } else {
            (1u32 << self.n_times) - 1
        }
    }

    pub fn get(&self, mask: u32) -> Option<&JointDistribution> {
        self.table.get(&mask)
    }

    pub fn get_pattern(&self, pattern: &str) -> Result<Option<&JointDistribution>> {
        Ok(self.get(pattern_to_mask(pattern, self.n_times)?))
    }

    /// The distribution of the pattern where every time is measured.
    pub fn full(&self) -> Result<&JointDistribution> {
        self.get(self.full_mask()).ok_or_else(|| Error::MissingFullPattern {
            pattern: mask_to_pattern(self.full_mask(), self.n_times),
        })
    }

    /// Patterns a complete family should contain but this one does not.
    pub fn missing_patterns(&self) -> Vec<String> {
        (0..=self.full_mask())
            .filter(|mask| !self.table.contains_key(mask))
            .map(|mask| mask_to_pattern(mask, self.n_times))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.table.len() == (self.full_mask() as usize) + 1
    }

    /// Errors with the list of missing patterns unless every pattern is
    /// present.
    pub fn require_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::IncompleteFamily {
                missing: self.missing_patterns(),
                expected: self.full_mask() as usize + 1,
            })
        }
    }

    /// Entries in ascending bitmask order.
    pub fn iter(&self) -> impl Iterator<Item = (&u32, &JointDistribution)> {
        self.table.iter()
    }
}

#[derive(Serialize, Deserialize)]
struct FamilyEntryRepr {
    pattern: String,
    probs: Vec<f64>,
}

/// Serialized form: `{n_times, outcome_dim, entries: [{pattern, probs}]}`.
#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    n_times: usize,
    outcome_dim: usize,
    entries: Vec<FamilyEntryRepr>,
}

impl Serialize for StatisticsFamily {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        FamilyRepr {
            n_times: self.n_times,
            outcome_dim: self.outcome_dim,
            entries: self
                .table
                .values()
                .map(|dist| FamilyEntryRepr {
                    pattern: dist.pattern(),
                    probs: dist.probs().to_vec(),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StatisticsFamily {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = FamilyRepr::deserialize(deserializer)?;
        let mut family =
            StatisticsFamily::new(repr.n_times, repr.outcome_dim).map_err(serde::de::Error::custom)?;
        for entry in repr.entries {
            let mask = pattern_to_mask(&entry.pattern, repr.n_times)
                .map_err(serde::de::Error::custom)?;
            let times = times_of_mask(mask, repr.n_times);
            let dist = JointDistribution::new(repr.n_times, times, repr.outcome_dim, entry.probs)
                .map_err(serde::de::Error::custom)?;
            family.insert(dist).map_err(serde::de::Error::custom)?;
        }
        Ok(family)
    }
}

// ---------------------------------------------------------------------------
// Conditionals
// ---------------------------------------------------------------------------

/// Conditional probability `P(target = x | history)` within one distribution.
///
/// `history` fixes outcomes at a subset of the measured times earlier than
/// `target_time`; all other measured times (earlier unlisted ones and later
/// ones) are summed over. If the history itself has probability below
/// [`EPS_ZERO`] the conditional is defined to be 0.
pub fn conditional(
    dist: &JointDistribution,
    target_time: usize,
    target_outcome: usize,
    history: &[(usize, usize)],
) -> Result<f64> {
    if !dist.measured_times().contains(&target_time) {
        return Err(Error::TimeNotMeasured {
            time: target_time,
            pattern: dist.pattern(),
        });
    }
    if target_outcome >= dist.outcome_dim() {
        return Err(Error::OutcomeOutOfRange {
            outcome: target_outcome,
            dim: dist.outcome_dim(),
        });
    }
    for &(time, _) in history {
        if time >= target_time {
            return Err(Error::HistoryNotEarlier { target: target_time });
        }
    }
    let denominator = dist.sum_matching(history)?;
    if denominator < EPS_ZERO {
        return Ok(0.0);
    }
    let mut constraints = history.to_vec();
    constraints.push((target_time, target_outcome));
    Ok(dist.sum_matching(&constraints)? / denominator)
}

// ---------------------------------------------------------------------------
// Check reports
// ---------------------------------------------------------------------------

/// Which analyzer a skipped comparison belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    MarkovFull,
    MarkovSub,
    Compatibility,
}

/// A comparison that was not performed because its conditioning event has
/// probability below [`EPS_ZERO`]. Skipped comparisons are vacuously
/// satisfied but reported so that downstream consumers can see them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedComparison {
    pub check: CheckKind,
    pub pattern: String,
    pub description: String,
}

/// Result of a Markov check on the fully measured pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub markovian: bool,
    /// Largest absolute difference between two conditionals that the Markov
    /// property requires to be equal.
    pub worst_violation: f64,
    /// Human-readable location of the worst violation, if any comparison was
    /// performed.
    pub worst_site: Option<String>,
    pub tol: f64,
    pub skipped: Vec<SkippedComparison>,
}

/// Result of running the Markov check on every pattern of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubMarkovReport {
    pub markovian: bool,
    pub worst_violation: f64,
    pub worst_site: Option<String>,
    /// Worst violation per pattern, for every pattern where at least one
    /// comparison was performed.
    pub per_pattern: BTreeMap<String, f64>,
    pub tol: f64,
    pub skipped: Vec<SkippedComparison>,
}

/// Result of the cross-pattern conditional compatibility check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub compatible: bool,
    pub worst_violation: f64,
    pub worst_site: Option<String>,
    pub tol: f64,
    pub skipped: Vec<SkippedComparison>,
}

/// Result of the marginal-consistency check against the fully measured
/// pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub worst_violation: f64,
    pub worst_site: Option<String>,
    pub tol: f64,
}

/// Overall classification of a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    /// Even the fully measured statistics are non-Markovian; memory is
    /// visible directly.
    NonMarkovian,
    /// Fully measured statistics are Markovian, but some sub-pattern is
    /// non-Markovian: no memoryless model exists.
    HiddenMemoryNonmarkovianSub,
    /// Every pattern is Markovian in isolation, but conditionals disagree
    /// across patterns: no memoryless model exists.
    HiddenMemoryIncompatible,
    /// No witness fired; the family passes every necessary condition these
    /// checks cover.
    ConsistentWithMemoryless,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Verdict::NonMarkovian => "NON_MARKOVIAN",
            Verdict::HiddenMemoryNonmarkovianSub => "HIDDEN_MEMORY_NONMARKOVIAN_SUB",
            Verdict::HiddenMemoryIncompatible => "HIDDEN_MEMORY_INCOMPATIBLE",
            Verdict::ConsistentWithMemoryless => "CONSISTENT_WITH_MEMORYLESS",
        };
        f.write_str(name)
    }
}

/// Combined output of all checks on one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub markov_full: MarkovReport,
    pub markov_sub: SubMarkovReport,
    pub compatibility: CompatibilityReport,
    pub kolmogorov: ConsistencyReport,
    pub verdict: Verdict,
}

impl AnalysisReport {
    /// All skipped comparisons across the individual checks.
    pub fn skipped_comparisons(&self) -> Vec<&SkippedComparison> {
        self.markov_full
            .skipped
            .iter()
            .chain(&self.markov_sub.skipped)
            .chain(&self.compatibility.skipped)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Markov checks
// ---------------------------------------------------------------------------

fn describe_history(times: &[usize], outcomes: &[usize]) -> String {
    times
        .iter()
        .zip(outcomes)
        .rev() // most recent first, matching conditional notation
        .map(|(&t, &x)| format!("t{}={}", t + 1, x))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Worst violation of the Markov property within a single distribution.
///
/// For each measured target with at least two earlier measured times, the
/// conditional on the most recent earlier outcome must not depend on the
/// older outcomes. We compare the conditional distributions pairwise across
/// older histories; the reported magnitude is the largest absolute difference
/// between two such conditionals.
fn markov_check_one(
    dist: &JointDistribution,
    check: CheckKind,
) -> Result<(f64, Option<String>, Vec<SkippedComparison>, bool)> {
    let times = dist.measured_times();
    let d = dist.outcome_dim();
    let k = times.len();
    let mut worst = 0.0f64;
    let mut worst_site = None;
    let mut skipped = Vec::new();
    let mut any_comparison = false;

    for p in 2..k {
        let target = times[p];
        let recent = times[p - 1];
        let older = &times[..p - 1];
        let n_old = d.pow(older.len() as u32);

        // Marginalize once onto the times up to and including the target.
        let prefix = dist.marginal(&times[..=p])?;

        for x_recent in 0..d {
            // Conditional distribution over the target outcome for each older
            // history, or None if the conditioning event is (numerically)
            // impossible.
            let mut conds: Vec<Option<Vec<f64>>> = Vec::with_capacity(n_old);
            for old_index in 0..n_old {
                let mut old_outcomes = vec![0; older.len()];
                let mut rest = old_index;
                for slot in (0..older.len()).rev() {
                    old_outcomes[slot] = rest % d;
                    rest /= d;
                }
                let mut constraints: Vec<(usize, usize)> = older
                    .iter()
                    .zip(&old_outcomes)
                    .map(|(&t, &x)| (t, x))
                    .collect();
                constraints.push((recent, x_recent));
                let denom = prefix.sum_matching(&constraints)?;
                if denom < EPS_ZERO {
                    skipped.push(SkippedComparison {
                        check,
                        pattern: dist.pattern(),
                        description: format!(
                            "conditioning event {} has probability below {EPS_ZERO:e}",
                            describe_history(
                                &[older, &[recent]].concat(),
                                &[old_outcomes.as_slice(), &[x_recent]].concat()
                            )
                        ),
                    });
                    conds.push(None);
                    continue;
                }
                let mut cond = Vec::with_capacity(d);
                for x_t in 0..d {
                    let mut with_target = constraints.clone();
                    with_target.push((target, x_t));
                    cond.push(prefix.sum_matching(&with_target)? / denom);
                }
                conds.push(Some(cond));
            }

            for a in 0..n_old {
                let Some(cond_a) = &conds[a] else { continue };
                for (b, entry) in conds.iter().enumerate().skip(a + 1) {
                    let Some(cond_b) = entry else { continue };
                    any_comparison = true;
                    let diff = cond_a
                        .iter()
                        .zip(cond_b)
                        .map(|(pa, pb)| (pa - pb).abs())
                        .fold(0.0, f64::max);
                    if diff > worst {
                        worst = diff;
                        let describe = |idx: usize| {
                            let mut outcomes = vec![0; older.len()];
                            let mut rest = idx;
                            for slot in (0..older.len()).rev() {
                                outcomes[slot] = rest % d;
                                rest /= d;
                            }
                            describe_history(older, &outcomes)
                        };
                        worst_site = Some(format!(
                            "pattern {}: P(t{} | t{}={}; {}) vs P(t{} | t{}={}; {})",
                            dist.pattern(),
                            target + 1,
                            recent + 1,
                            x_recent,
                            describe(a),
                            target + 1,
                            recent + 1,
                            x_recent,
                            describe(b),
                        ));
                    }
                }
            }
        }
    }
    Ok((worst, worst_site, skipped, any_comparison))
}

/// Markov property of a single distribution, regardless of which pattern it
/// covers.
pub fn is_markovian_distribution(dist: &JointDistribution, tol: f64) -> Result<MarkovReport> {
    let (worst, site, skipped, _) = markov_check_one(dist, CheckKind::MarkovFull)?;
    Ok(MarkovReport {
        markovian: worst <= tol,
        worst_violation: worst,
        worst_site: site,
        tol,
        skipped,
    })
}

/// Markov property of the fully measured pattern.
///
/// Errors if the family does not contain the pattern where every time is
/// measured.
pub fn is_markovian_full(family: &StatisticsFamily, tol: f64) -> Result<MarkovReport> {
    is_markovian_distribution(family.full()?, tol)
}

/// Markov property of *every* pattern in a complete family.
///
/// A memoryless model keeps every sub-pattern Markovian, because skipping a
/// measurement leaves the intermediate dynamics untouched. A family that is
/// Markovian when fully measured but non-Markovian in some sub-pattern
/// therefore has memory that full probing hides.
pub fn is_markovian_sub(family: &StatisticsFamily, tol: f64) -> Result<SubMarkovReport> {
    family.require_complete()?;
    let mut worst = 0.0f64;
    let mut worst_site = None;
    let mut per_pattern = BTreeMap::new();
    let mut skipped = Vec::new();
    for (_, dist) in family.iter() {
        let (w, site, mut sk, compared) = markov_check_one(dist, CheckKind::MarkovSub)?;
        skipped.append(&mut sk);
        if compared {
            per_pattern.insert(dist.pattern(), w);
        }
        if w > worst {
            worst = w;
            worst_site = site;
        }
    }
    Ok(SubMarkovReport {
        markovian: worst <= tol,
        worst_violation: worst,
        worst_site,
        per_pattern,
        tol,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Compatibility
// ---------------------------------------------------------------------------

/// Agreement of two-point conditionals across patterns.
///
/// For every pair of times `t_i < t_j`, every pattern that measures both and
/// measures nothing strictly between them induces a conditional
/// `P(x_j | x_i)` (marginalizing all its other measured times). Memoryless
/// models give the same conditional regardless of what happens outside the
/// `(t_i, t_j)` window; this check compares the conditionals pairwise across
/// such patterns.
pub fn is_compatible(family: &StatisticsFamily, tol: f64) -> Result<CompatibilityReport> {
    family.require_complete()?;
    let n = family.n_times();
    let d = family.outcome_dim();
    let mut worst = 0.0f64;
    let mut worst_site = None;
    let mut skipped = Vec::new();

    for ti in 0..n {
        for tj in (ti + 1)..n {
            let between: u32 = ((ti + 1)..tj).fold(0, |m, t| m | (1 << t));
            let required = (1u32 << ti) | (1 << tj);
            // Patterns measuring t_i and t_j and nothing in between, in
            // ascending mask order.
            let mut entries: Vec<(&JointDistribution, Vec<Option<Vec<f64>>>)> = Vec::new();
            for (&mask, dist) in family.iter() {
                if mask & required != required || mask & between != 0 {
                    continue;
                }
                let mut conds: Vec<Option<Vec<f64>>> = Vec::with_capacity(d);
                for x_i in 0..d {
                    let denom = dist.sum_matching(&[(ti, x_i)])?;
                    if denom < EPS_ZERO {
                        skipped.push(SkippedComparison {
                            check: CheckKind::Compatibility,
                            pattern: dist.pattern(),
                            description: format!(
                                "conditioning outcome t{}={} has probability below {EPS_ZERO:e}",
                                ti + 1,
                                x_i
                            ),
                        });
                        conds.push(None);
                        continue;
                    }
                    let mut cond = Vec::with_capacity(d);
                    for x_j in 0..d {
                        cond.push(dist.sum_matching(&[(ti, x_i), (tj, x_j)])? / denom);
                    }
                    conds.push(Some(cond));
                }
                entries.push((dist, conds));
            }

            for a in 0..entries.len() {
                for b in (a + 1)..entries.len() {
                    for x_i in 0..d {
                        let (Some(cond_a), Some(cond_b)) =
                            (&entries[a].1[x_i], &entries[b].1[x_i])
                        else {
                            continue;
                        };
                        let diff = cond_a
                            .iter()
                            .zip(cond_b)
                            .map(|(pa, pb)| (pa - pb).abs())
                            .fold(0.0, f64::max);
                        if diff > worst {
                            worst = diff;
                            worst_site = Some(format!(
                                "P(t{} | t{}={}) differs between patterns {} and {}",
                                tj + 1,
                                ti + 1,
                                x_i,
                                entries[a].0.pattern(),
                                entries[b].0.pattern(),
                            ));
                        }
                    }
                }
            }
        }
    }

    Ok(CompatibilityReport {
        compatible: worst <= tol,
        worst_violation: worst,
        worst_site,
        tol,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Kolmogorov consistency
// ---------------------------------------------------------------------------

/// Classical marginal consistency: every sub-pattern distribution equals the
/// corresponding marginal of the fully measured distribution.
///
/// Classical processes satisfy this identically; invasive measurements break
/// it, so failure here distinguishes "not measuring" from "measuring and
/// discarding" and is expected for genuinely quantum processes. It is *not*
/// a memory witness.
pub fn kolmogorov_consistent(family: &StatisticsFamily, tol: f64) -> Result<ConsistencyReport> {
    family.require_complete()?;
    let full = family.full()?;
    let mut worst = 0.0f64;
    let mut worst_site = None;
    for (&mask, dist) in family.iter() {
        if mask == family.full_mask() {
            continue;
        }
        let expected = full.marginal(dist.measured_times())?;
        let diff = expected
            .probs()
            .iter()
            .zip(dist.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff > worst {
            worst = diff;
            worst_site = Some(format!(
                "pattern {} vs the same marginal of pattern {}",
                dist.pattern(),
                mask_to_pattern(family.full_mask(), family.n_times()),
            ));
        }
    }
    Ok(ConsistencyReport {
        consistent: worst <= tol,
        worst_violation: worst,
        worst_site,
        tol,
    })
}

// ---------------------------------------------------------------------------
// Combined witness
// ---------------------------------------------------------------------------

pub(crate) fn decide_verdict(
    markov_full: bool,
    markov_sub: bool,
    compatible: bool,
) -> Verdict {
    if !markov_full {
        Verdict::NonMarkovian
    } else if !markov_sub {
        Verdict::HiddenMemoryNonmarkovianSub
    } else if !compatible {
        Verdict::HiddenMemoryIncompatible
    } else {
        Verdict::ConsistentWithMemoryless
    }
}

/// Runs every check on a complete family and classifies it.
///
/// The verdict is decided in witness order: visible non-Markovianity first,
/// then non-Markovian sub-statistics, then incompatible conditionals. The
/// Kolmogorov check is reported but does not influence the verdict, since
/// marginal inconsistency only signals measurement invasiveness.
pub fn witness_hidden_memory(family: &StatisticsFamily, tol: f64) -> Result<AnalysisReport> {
    family.require_complete()?;
    let markov_full = is_markovian_full(family, tol)?;
    let markov_sub = is_markovian_sub(family, tol)?;
    let compatibility = is_compatible(family, tol)?;
    let kolmogorov = kolmogorov_consistent(family, tol)?;
    let verdict = decide_verdict(
        markov_full.markovian,
        markov_sub.markovian,
        compatibility.compatible,
    );
    Ok(AnalysisReport {
        markov_full,
        markov_sub,
        compatibility,
        kolmogorov,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Distribution over every time of a 3-time, binary-outcome process with
    /// `P(x3, x2, x1)` given flat in `(x1, x2, x3)` order.
    fn full3(probs: Vec<f64>) -> JointDistribution {
        JointDistribution::new(3, vec![0, 1, 2], 2, probs).unwrap()
    }

    #[test]
    fn index_layout_puts_earliest_time_slowest() {
        let dist = JointDistribution::new(
            4,
            vec![0, 2],
            2,
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        assert_eq!(dist.pattern(), "1010");
        assert_eq!(dist.index_of(&[0, 0]).unwrap(), 0);
        assert_eq!(dist.index_of(&[0, 1]).unwrap(), 1);
        assert_eq!(dist.index_of(&[1, 0]).unwrap(), 2);
        assert_eq!(dist.outcomes_of(2), vec![1, 0]);
        assert_eq!(dist.prob(&[1, 1]).unwrap(), 0.4);
    }

    #[test]
    fn empty_pattern_is_the_trivial_distribution() {
        let dist = JointDistribution::new(3, vec![], 2, vec![1.0]).unwrap();
        assert_eq!(dist.pattern(), "000");
        assert_eq!(dist.probs(), &[1.0]);
    }

    #[test]
    fn tiny_negative_entries_are_clamped() {
        let dist = JointDistribution::new(1, vec![0], 2, vec![1.0, -1e-15]).unwrap();
        assert_eq!(dist.probs()[1], 0.0);
    }

    #[test]
    fn larger_negative_entries_are_rejected() {
        let err = JointDistribution::new(1, vec![0], 2, vec![1.0, -1e-6]).unwrap_err();
        assert!(matches!(err, Error::NegativeProbability { index: 1, .. }));
    }

    #[test]
    fn unnormalized_distributions_are_rejected() {
        let err = JointDistribution::new(1, vec![0], 2, vec![0.7, 0.2]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }

    #[test]
    fn marginal_sums_out_unlisted_times() {
        // P(x1, x2) with correlation: P(0,0)=0.5, P(1,1)=0.3, P(1,0)=0.2.
        let dist = JointDistribution::new(2, vec![0, 1], 2, vec![0.5, 0.0, 0.2, 0.3]).unwrap();
        let m = dist.marginal(&[1]).unwrap();
        assert_eq!(m.measured_times(), &[1]);
        assert!((m.probs()[0] - 0.7).abs() < 1e-15);
        assert!((m.probs()[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn conditional_matches_hand_computation() {
        let dist = JointDistribution::new(2, vec![0, 1], 2, vec![0.5, 0.0, 0.2, 0.3]).unwrap();
        // P(x2=1 | x1=1) = 0.3 / 0.5 = 0.6.
        let c = conditional(&dist, 1, 1, &[(0, 1)]).unwrap();
        assert!((c - 0.6).abs() < 1e-15);
    }

    #[test]
    fn conditional_on_impossible_history_is_zero() {
        let dist = JointDistribution::new(2, vec![0, 1], 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(conditional(&dist, 1, 0, &[(0, 1)]).unwrap(), 0.0);
    }

    #[test]
    fn conditional_validates_arguments() {
        let dist = JointDistribution::new(3, vec![0, 2], 2, vec![0.25; 4]).unwrap();
        assert!(matches!(
            conditional(&dist, 1, 0, &[]),
            Err(Error::TimeNotMeasured { time: 1, .. })
        ));
        assert!(matches!(
            conditional(&dist, 0, 0, &[(2, 0)]),
            Err(Error::HistoryNotEarlier { target: 0 })
        ));
        assert!(matches!(
            conditional(&dist, 2, 5, &[]),
            Err(Error::OutcomeOutOfRange { outcome: 5, .. })
        ));
    }

    /// Brute-force Markov check used as an oracle: compares full-history
    /// conditionals pairwise with independent loops over the raw table.
    fn brute_force_markov_violation(probs: &[f64]) -> f64 {
        // 3 binary times, flat (x1, x2, x3).
        let p = |x1: usize, x2: usize, x3: usize| probs[4 * x1 + 2 * x2 + x3];
        let mut worst = 0.0f64;
        for x2 in 0..2 {
            let denom: Vec<f64> = (0..2)
                .map(|x1| p(x1, x2, 0) + p(x1, x2, 1))
                .collect();
            if denom[0] < EPS_ZERO || denom[1] < EPS_ZERO {
                continue;
            }
            for x3 in 0..2 {
                let c0 = p(0, x2, x3) / denom[0];
                let c1 = p(1, x2, x3) / denom[1];
                worst = worst.max((c0 - c1).abs());
            }
        }
        worst
    }

    #[test]
    fn markov_check_agrees_with_brute_force_on_product_statistics() {
        // Independent fair coins at all three times: Markovian.
        let probs = vec![0.125; 8];
        let dist = full3(probs.clone());
        let (worst, _, skipped, compared) = markov_check_one(&dist, CheckKind::MarkovFull).unwrap();
        assert!(compared);
        assert!(skipped.is_empty());
        assert!(worst < 1e-15);
        assert_eq!(brute_force_markov_violation(&probs), 0.0);
    }

    #[test]
    fn markov_check_detects_memory_of_the_first_outcome() {
        // x1 fair, x2 fair and independent, x3 = x1: maximal memory.
        let mut probs = vec![0.0; 8];
        for x1 in 0..2 {
            for x2 in 0..2 {
                probs[4 * x1 + 2 * x2 + x1] = 0.25;
            }
        }
        let dist = full3(probs.clone());
        let (worst, site, _, _) = markov_check_one(&dist, CheckKind::MarkovFull).unwrap();
        assert!((worst - 1.0).abs() < 1e-15);
        assert!((brute_force_markov_violation(&probs) - 1.0).abs() < 1e-15);
        let site = site.unwrap();
        assert!(site.contains("P(t3"), "site: {site}");
    }

    #[test]
    fn markov_check_reports_partial_violations_exactly() {
        // x3 copies x1 with probability 3/4, flips with 1/4:
        // P(x3 | x2, x1) differs across x1 by 1/2.
        let mut probs = vec![0.0; 8];
        for x1 in 0..2 {
            for x2 in 0..2 {
                probs[4 * x1 + 2 * x2 + x1] += 0.25 * 0.75;
                probs[4 * x1 + 2 * x2 + (1 - x1)] += 0.25 * 0.25;
            }
        }
        let dist = full3(probs.clone());
        let (worst, _, _, _) = markov_check_one(&dist, CheckKind::MarkovFull).unwrap();
        let oracle = brute_force_markov_violation(&probs);
        assert!((worst - 0.5).abs() < 1e-12);
        assert!((worst - oracle).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_histories_are_skipped_and_reported() {
        // x1 deterministic 0, x2 fair, x3 fair: histories with x1=1 never
        // occur, so only same-history pairs survive and none differ.
        let mut probs = vec![0.0; 8];
        for x2 in 0..2 {
            for x3 in 0..2 {
                probs[2 * x2 + x3] = 0.25;
            }
        }
        let dist = full3(probs);
        let (worst, _, skipped, _) = markov_check_one(&dist, CheckKind::MarkovFull).unwrap();
        assert_eq!(worst, 0.0);
        assert_eq!(skipped.len(), 2); // (x1=1, x2=0) and (x1=1, x2=1)
        assert!(skipped[0].description.contains("probability below"));
    }

    fn family_from_full(full: &JointDistribution) -> StatisticsFamily {
        // Classical completion: every sub-pattern is the marginal of the full
        // pattern. This has hidden-memory checks pass/fail in lockstep with
        // the full pattern, which is what a noninvasive family looks like.
        let n = full.n_times();
        let mut family = StatisticsFamily::new(n, full.outcome_dim()).unwrap();
        for mask in 0..=((1u32 << n) - 1) {
            let times = times_of_mask(mask, n);
            family.insert(full.marginal(&times).unwrap()).unwrap();
        }
        family
    }

    #[test]
    fn classical_completion_is_consistent_and_compatible() {
        let mut probs = vec![0.0; 8];
        // A genuinely Markovian chain: x1 fair; flip probability 1/4 each
        // step.
        for x1 in 0..2 {
            for x2 in 0..2 {
                for x3 in 0..2 {
                    let p12: f64 = if x1 == x2 { 0.75 } else { 0.25 };
                    let p23: f64 = if x2 == x3 { 0.75 } else { 0.25 };
                    probs[4 * x1 + 2 * x2 + x3] = 0.5 * p12 * p23;
                }
            }
        }
        let family = family_from_full(&full3(probs));
        let report = witness_hidden_memory(&family, DEFAULT_TOL).unwrap();
        assert!(report.markov_full.markovian);
        assert!(report.markov_sub.markovian);
        assert!(report.compatibility.compatible);
        assert!(report.kolmogorov.consistent);
        assert_eq!(report.verdict, Verdict::ConsistentWithMemoryless);
    }

    #[test]
    fn visible_memory_yields_the_non_markovian_verdict() {
        let mut probs = vec![0.0; 8];
        for x1 in 0..2 {
            for x2 in 0..2 {
                probs[4 * x1 + 2 * x2 + x1] = 0.25;
            }
        }
        let family = family_from_full(&full3(probs));
        let report = witness_hidden_memory(&family, DEFAULT_TOL).unwrap();
        assert_eq!(report.verdict, Verdict::NonMarkovian);
        assert!((report.markov_full.worst_violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn verdict_priority_follows_the_witness_order() {
        assert_eq!(decide_verdict(false, false, false), Verdict::NonMarkovian);
        assert_eq!(
            decide_verdict(true, false, false),
            Verdict::HiddenMemoryNonmarkovianSub
        );
        assert_eq!(
            decide_verdict(true, true, false),
            Verdict::HiddenMemoryIncompatible
        );
        assert_eq!(
            decide_verdict(true, true, true),
            Verdict::ConsistentWithMemoryless
        );
    }

    #[test]
    fn incomplete_family_errors_list_missing_patterns() {
        let mut family = StatisticsFamily::new(2, 2).unwrap();
        family
            .insert(JointDistribution::new(2, vec![0, 1], 2, vec![0.25; 4]).unwrap())
            .unwrap();
        let err = is_markovian_sub(&family, DEFAULT_TOL).unwrap_err();
        match err {
            Error::IncompleteFamily { missing, expected } => {
                assert_eq!(expected, 4);
                assert_eq!(missing, vec!["00", "10", "01"]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_full_pattern_is_its_own_error() {
        let family = StatisticsFamily::new(2, 2).unwrap();
        assert!(matches!(
            is_markovian_full(&family, DEFAULT_TOL),
            Err(Error::MissingFullPattern { .. })
        ));
    }

    #[test]
    fn single_time_family_is_trivially_consistent() {
        let mut family = StatisticsFamily::new(1, 2).unwrap();
        family
            .insert(JointDistribution::new(1, vec![], 2, vec![1.0]).unwrap())
            .unwrap();
        family
            .insert(JointDistribution::new(1, vec![0], 2, vec![0.5, 0.5]).unwrap())
            .unwrap();
        let report = witness_hidden_memory(&family, DEFAULT_TOL).unwrap();
        assert_eq!(report.verdict, Verdict::ConsistentWithMemoryless);
        assert!(report.skipped_comparisons().is_empty());
    }

    #[test]
    fn family_json_roundtrip() {
        let mut probs = vec![0.125; 8];
        probs[0] = 0.12500000001;
        probs[7] = 0.12499999999;
        let family = family_from_full(&full3(probs));
        let json = serde_json::to_string(&family).unwrap();
        let back: StatisticsFamily = serde_json::from_str(&json).unwrap();
        assert_eq!(family, back);
    }

    #[test]
    fn family_json_rejects_duplicate_patterns() {
        let json = r#"{
            "n_times": 1, "outcome_dim": 2,
            "entries": [
                {"pattern": "1", "probs": [0.5, 0.5]},
                {"pattern": "1", "probs": [0.5, 0.5]}
            ]
        }"#;
        assert!(serde_json::from_str::<StatisticsFamily>(json).is_err());
    }

    #[test]
    fn distribution_json_shape_is_stable() {
        let dist = JointDistribution::new(4, vec![0, 2], 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let value = serde_json::to_value(&dist).unwrap();
        assert_eq!(value["pattern"], "1010");
        assert_eq!(value["n_times"], 4);
        assert_eq!(value["dims"], serde_json::json!([2, 2]));
        let back: JointDistribution = serde_json::from_value(value).unwrap();
        assert_eq!(back, dist);
    }

    #[test]
    fn verdict_serializes_to_screaming_snake_case() {
        let json = serde_json::to_string(&Verdict::HiddenMemoryNonmarkovianSub).unwrap();
        assert_eq!(json, "\"HIDDEN_MEMORY_NONMARKOVIAN_SUB\"");
        assert_eq!(Verdict::NonMarkovian.to_string(), "NON_MARKOVIAN");
    }
}
