//! P-value adjustment and FDR-controlled membership decisions.
//!
//! Raw non-member p-values are ranked ascending and adjusted by
//!
//! ```text
//! p_adj^(t) = min(1, min_{m in t..=n} (n / m) * p^(m))
//! ```
//!
//! then every sample with an adjusted value `<= alpha` is declared a member.
//! Thresholding the adjusted values is equivalent to the classic
//! Benjamini-Hochberg step-up rule ([`classic_bh_oracle`], kept as an
//! independent check), and controls the false discovery rate at
//! `alpha * pi0 <= alpha`, where `pi0` is the true non-member proportion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FdrError {
    #[error("empty p-value vector")]
    Empty,

    #[error("p-value {0} outside (0,1]")]
    InvalidPValue(f64),

    #[error("significance level {0} outside (0,1)")]
    InvalidAlpha(f64),

    #[error("pi0 {0} outside [0,1]")]
    InvalidPi0(f64),

    #[error("truth has {truth} entries, decisions cover {tests}")]
    LengthMismatch { truth: usize, tests: usize },
}

/// Ground-truth membership of one test sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Member,
    NonMember,
}

impl Membership {
    pub fn as_str(self) -> &'static str {
        match self {
            Membership::Member => "member",
            Membership::NonMember => "non_member",
        }
    }
}

impl std::str::FromStr for Membership {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "member" => Ok(Membership::Member),
            "non_member" => Ok(Membership::NonMember),
            other => Err(format!("unknown membership {other:?}")),
        }
    }
}

/// Significance level in (0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SignificanceLevel(f64);

impl SignificanceLevel {
    pub fn new(alpha: f64) -> Result<Self, FdrError> {
        if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
            return Err(FdrError::InvalidAlpha(alpha));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SignificanceLevel {
    type Error = FdrError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<SignificanceLevel> for f64 {
    fn from(a: SignificanceLevel) -> f64 {
        a.0
    }
}

/// Per-test-sample p-values in original sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueVector {
    values: Vec<f64>,
}

impl PValueVector {
    /// Validating constructor: every value must lie in (0,1].
    pub fn new(values: Vec<f64>) -> Result<Self, FdrError> {
        if values.is_empty() {
            return Err(FdrError::Empty);
        }
        for &v in &values {
            if !(v.is_finite() && 0.0 < v && v <= 1.0) {
                return Err(FdrError::InvalidPValue(v));
            }
        }
        Ok(Self { values })
    }

    /// For producers whose construction already guarantees the invariant
    /// (conformal p-values are k/(1+|C|) by formula).
    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|&v| 0.0 < v && v <= 1.0));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Adjusted p-values aligned to the original sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedPValues {
    adjusted: Vec<f64>,
}

impl AdjustedPValues {
    pub fn values(&self) -> &[f64] {
        &self.adjusted
    }

    pub fn len(&self) -> usize {
        self.adjusted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjusted.is_empty()
    }
}

/// Membership decisions for one test batch.
///
/// `rejected` holds the original indices declared members, ascending;
/// `verdicts[i]` is true iff sample `i` was declared a member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionSet {
    rejected: Vec<usize>,
    verdicts: Vec<bool>,
}

impl DecisionSet {
    fn from_verdicts(verdicts: Vec<bool>) -> Self {
        let rejected = verdicts
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        Self { rejected, verdicts }
    }

    pub fn rejected(&self) -> &[usize] {
        &self.rejected
    }

    pub fn verdicts(&self) -> &[bool] {
        &self.verdicts
    }

    pub fn is_member(&self, i: usize) -> bool {
        self.verdicts[i]
    }

    pub fn n_rejected(&self) -> usize {
        self.rejected.len()
    }

    pub fn n_tests(&self) -> usize {
        self.verdicts.len()
    }
}

/// Realized error accounting for one decided batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrReport {
    pub n_fp: usize,
    pub n_tp: usize,
    pub fdr: f64,
    pub pi0: f64,
    pub bound: f64,
    pub alpha: f64,
    pub n_rejected: usize,
    pub n_tests: usize,
}

/// Step-up adjustment of raw p-values.
///
/// Ties are ordered by (value, original index) with a stable sort, so tied
/// values receive identical adjusted values and the result does not depend
/// on input order beyond the tie rule. Suffix minima are computed in one
/// reverse pass.
pub fn bh_adjust(p: &PValueVector) -> AdjustedPValues {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        p.values[a]
            .total_cmp(&p.values[b])
            .then_with(|| a.cmp(&b))
    });

    let nf = n as f64;
    let mut adjusted = vec![0.0; n];
    let mut running_min = 1.0f64;
    for rank in (0..n).rev() {
        let idx = order[rank];
        let candidate = nf / (rank + 1) as f64 * p.values[idx];
        running_min = running_min.min(candidate);
        adjusted[idx] = running_min;
    }
    AdjustedPValues { adjusted }
}

/// Declare members: every sample whose adjusted p-value is `<= alpha`
/// (rejection at exact equality).
pub fn decide(adj: &AdjustedPValues, alpha: SignificanceLevel) -> DecisionSet {
    let verdicts = adj.adjusted.iter().map(|&v| v <= alpha.value()).collect();
    DecisionSet::from_verdicts(verdicts)
}

/// Realized FDR of a decision set against ground truth:
/// `fdr = |fp| / max(1, |rejected|)` with `fp` the rejected true
/// non-members.
pub fn compute_fdr(
    d: &DecisionSet,
    truth: &[Membership],
    alpha: SignificanceLevel,
) -> Result<FdrReport, FdrError> {
    if truth.len() != d.n_tests() {
        return Err(FdrError::LengthMismatch {
            truth: truth.len(),
            tests: d.n_tests(),
        });
    }
    let mut n_fp = 0;
    let mut n_tp = 0;
    for &i in d.rejected() {
        match truth[i] {
            Membership::NonMember => n_fp += 1,
            Membership::Member => n_tp += 1,
        }
    }
    let n_tests = truth.len();
    let n_nulls = truth.iter().filter(|&&t| t == Membership::NonMember).count();
    let pi0 = n_nulls as f64 / n_tests as f64;
    Ok(FdrReport {
        n_fp,
        n_tp,
        fdr: n_fp as f64 / 1usize.max(n_fp + n_tp) as f64,
        pi0,
        bound: fdr_bound(alpha, pi0)?,
        alpha: alpha.value(),
        n_rejected: d.n_rejected(),
        n_tests,
    })
}

/// Classic Benjamini-Hochberg step-up: reject the `t*` smallest p-values
/// where `t* = max{t : p^(t) <= (t/n) * alpha}`.
///
/// Independent of [`bh_adjust`] by construction; used to cross-check the
/// adjusted-threshold route.
pub fn classic_bh_oracle(p: &PValueVector, alpha: SignificanceLevel) -> DecisionSet {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        p.values[a]
            .total_cmp(&p.values[b])
            .then_with(|| a.cmp(&b))
    });

    let nf = n as f64;
    let mut t_star = 0;
    for (rank, &idx) in order.iter().enumerate() {
        if p.values[idx] <= (rank + 1) as f64 / nf * alpha.value() {
            t_star = rank + 1;
        }
    }
    let mut verdicts = vec![false; n];
    for &idx in &order[..t_star] {
        verdicts[idx] = true;
    }
    DecisionSet::from_verdicts(verdicts)
}

/// Theorem-level FDR bound `alpha * pi0` (always `<= alpha`).
pub fn fdr_bound(alpha: SignificanceLevel, pi0: f64) -> Result<f64, FdrError> {
    if !(pi0.is_finite() && (0.0..=1.0).contains(&pi0)) {
        return Err(FdrError::InvalidPi0(pi0));
    }
    Ok(alpha.value() * pi0)
}
