//! Non-member conformity scores and split-conformal p-values.
//!
//! A test sample's membership-classifier output `f_bc` in [0,1] is mapped to
//! a conformity score
//!
//! ```text
//! S(f_bc) = lambda * log(f~ / (1 - f~)) + (1 - lambda) * f~
//! ```
//!
//! with `f~ = clamp(f_bc, eps, 1 - eps)`, blending the logit-transformed and
//! raw probability. Larger scores mean more non-member-like. The score is
//! then ranked against a frozen calibration set `C` of non-member scores:
//!
//! ```text
//! p = (1 + #{c in C : c <= s}) / (1 + |C|)
//! ```
//!
//! When the calibration scores and the test score are exchangeable, `p` is
//! super-uniform: P(p <= alpha) <= alpha for any alpha in (0,1). Ties count
//! toward the numerator (`<=`), which keeps the guarantee conservative.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fdr::PValueVector;

/// Clamp half-width keeping the logit term finite at `f_bc` in {0, 1}.
pub const LOGIT_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("lambda must be in [0,1], got {0}")]
    InvalidLambda(f64),

    #[error("classifier output must be in [0,1], got {0}")]
    InvalidProbability(f64),

    #[error("non-finite score {0}")]
    NonFiniteScore(f64),

    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("calibration set already frozen")]
    AlreadyFrozen,

    #[error("calibration set must be frozen before p-value queries")]
    NotFrozen,

    #[error("calibration io: {0}")]
    Io(#[from] std::io::Error),

    #[error("calibration file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Weight between the logit-transformed and raw probability in the
/// conformity score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LambdaWeight(f64);

impl LambdaWeight {
    pub fn new(lambda: f64) -> Result<Self, ConformalError> {
        if !(lambda.is_finite() && (0.0..=1.0).contains(&lambda)) {
            return Err(ConformalError::InvalidLambda(lambda));
        }
        Ok(Self(lambda))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for LambdaWeight {
    fn default() -> Self {
        Self(0.5)
    }
}

impl TryFrom<f64> for LambdaWeight {
    type Error = ConformalError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LambdaWeight> for f64 {
    fn from(l: LambdaWeight) -> f64 {
        l.0
    }
}

/// A finite non-member conformity score.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ConformityScore(f64);

impl ConformityScore {
    pub fn new(value: f64) -> Result<Self, ConformalError> {
        if !value.is_finite() {
            return Err(ConformalError::NonFiniteScore(value));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A conformal p-value: one of `k / (1 + |C|)` for `k = 1 ..= 1 + |C|`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PValue(f64);

impl PValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Map a membership-classifier output to its conformity score.
///
/// Strictly increasing in `f_bc` for `lambda > 0`, non-strictly for
/// `lambda = 0`; always finite thanks to the logit clamp.
pub fn conformity_score(f_bc: f64, lambda: LambdaWeight) -> Result<ConformityScore, ConformalError> {
    if !(f_bc.is_finite() && (0.0..=1.0).contains(&f_bc)) {
        return Err(ConformalError::InvalidProbability(f_bc));
    }
    let f = f_bc.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
    let l = lambda.value();
    ConformityScore::new(l * (f / (1.0 - f)).ln() + (1.0 - l) * f)
}

/// Sorted multiset of non-member conformity scores.
///
/// Scores accumulate while unfrozen; `freeze` sorts them once, after which
/// the set is immutable and any number of concurrent p-value queries is
/// safe.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationScores {
    scores: Vec<f64>,
    frozen: bool,
}

impl CalibrationScores {
    pub fn new() -> Self {
        Self {
            scores: Vec::new(),
            frozen: false,
        }
    }

    /// Add one raw score. Duplicates are preserved.
    pub fn push(&mut self, score: f64) -> Result<(), ConformalError> {
        if self.frozen {
            return Err(ConformalError::AlreadyFrozen);
        }
        if !score.is_finite() {
            return Err(ConformalError::NonFiniteScore(score));
        }
        self.scores.push(score);
        Ok(())
    }

    /// Sort and seal the set. One-time, single-threaded step.
    pub fn freeze(&mut self) -> Result<(), ConformalError> {
        if self.frozen {
            return Err(ConformalError::AlreadyFrozen);
        }
        if self.scores.is_empty() {
            return Err(ConformalError::EmptyCalibration);
        }
        self.scores.sort_unstable_by(|a, b| a.total_cmp(b));
        self.frozen = true;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// The stored scores (sorted once frozen).
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Number of calibration scores `<= s`, via binary search for the
    /// rightmost element not exceeding `s`.
    fn count_le(&self, s: f64) -> usize {
        self.scores.partition_point(|&c| c <= s)
    }

    /// One-score-per-line text format with a header recording lambda and
    /// the logit clamp. Bit-exact round trip.
    pub fn save(&self, lambda: LambdaWeight, path: &Path) -> Result<(), ConformalError> {
        if !self.frozen {
            return Err(ConformalError::NotFrozen);
        }
        let mut text = format!("# lambda={} eps={:e}\n", lambda.value(), LOGIT_EPS);
        for s in &self.scores {
            let _ = writeln!(text, "{s}");
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Load a frozen calibration set and the lambda it was built with.
    pub fn load(path: &Path) -> Result<(Self, LambdaWeight), ConformalError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(ConformalError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let lambda = parse_header_lambda(header)?;
        let mut raw = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| ConformalError::Parse {
                line: idx + 1,
                msg: format!("bad score {line:?}"),
            })?;
            raw.push(v);
        }
        let calib = build_calibration(&raw)?;
        Ok((calib, lambda))
    }
}

impl Default for CalibrationScores {
    fn default() -> Self {
        Self::new()
    }
}

fn parse_header_lambda(header: &str) -> Result<LambdaWeight, ConformalError> {
    let err = |msg: String| ConformalError::Parse { line: 1, msg };
    let rest = header
        .strip_prefix('#')
        .ok_or_else(|| err("missing '#' header".into()))?;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("lambda=") {
            let lambda: f64 = v
                .parse()
                .map_err(|_| err(format!("bad lambda {v:?}")))?;
            return LambdaWeight::new(lambda);
        }
    }
    Err(err("header does not record lambda".into()))
}

/// Build a frozen calibration set from raw scores (duplicates preserved).
pub fn build_calibration(raw_scores: &[f64]) -> Result<CalibrationScores, ConformalError> {
    let mut calib = CalibrationScores::new();
    if raw_scores.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    for &s in raw_scores {
        calib.push(s)?;
    }
    calib.freeze()?;
    Ok(calib)
}

/// Non-member p-value of a test score against a frozen calibration set.
///
/// The `+1` in the numerator is the test score itself, which is always
/// `<= s` in the union of calibration scores and `{s}`.
pub fn conformal_pvalue(
    calib: &CalibrationScores,
    s: ConformityScore,
) -> Result<PValue, ConformalError> {
    if !calib.is_frozen() {
        return Err(ConformalError::NotFrozen);
    }
    let k = 1 + calib.count_le(s.value());
    Ok(PValue(k as f64 / (1 + calib.len()) as f64))
}

/// Element-wise [`conformal_pvalue`] over a batch, order preserved.
pub fn batch_pvalues(
    calib: &CalibrationScores,
    scores: &[ConformityScore],
) -> Result<PValueVector, ConformalError> {
    let mut values = Vec::with_capacity(scores.len());
    for &s in scores {
        values.push(conformal_pvalue(calib, s)?.value());
    }
    Ok(PValueVector::from_values_unchecked(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn score_lambda_zero_is_raw_probability() {
        let s = conformity_score(0.8, LambdaWeight::new(0.0).unwrap()).unwrap();
        assert!((s.value() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn score_lambda_one_at_half_is_zero() {
        let s = conformity_score(0.5, LambdaWeight::new(1.0).unwrap()).unwrap();
        assert!(s.value().abs() < 1e-15);
    }

    #[test]
    fn score_blend_worked_example() {
        // 0.5 * ln(4) + 0.5 * 0.8
        let s = conformity_score(0.8, LambdaWeight::new(0.5).unwrap()).unwrap();
        let expected = 0.5 * 4.0f64.ln() + 0.5 * 0.8;
        assert!((s.value() - expected).abs() < 1e-12);
        assert!((s.value() - 1.093147).abs() < 1e-6);
    }

    #[test]
    fn score_finite_at_endpoints() {
        for f in [0.0, 1.0] {
            let s = conformity_score(f, LambdaWeight::default()).unwrap();
            assert!(s.value().is_finite());
        }
    }

    #[test]
    fn score_rejects_out_of_range() {
        assert!(conformity_score(-0.1, LambdaWeight::default()).is_err());
        assert!(conformity_score(1.1, LambdaWeight::default()).is_err());
        assert!(conformity_score(f64::NAN, LambdaWeight::default()).is_err());
    }

    #[test]
    fn build_sorts_and_freezes() {
        let calib = build_calibration(&[0.7, 0.1, 0.4]).unwrap();
        assert!(calib.is_frozen());
        assert_eq!(calib.scores(), &[0.1, 0.4, 0.7]);
    }

    #[test]
    fn duplicates_preserved() {
        let calib = build_calibration(&[0.5, 0.5]).unwrap();
        assert_eq!(calib.len(), 2);
        assert_eq!(calib.scores(), &[0.5, 0.5]);
    }

    #[test]
    fn empty_and_non_finite_rejected() {
        assert!(matches!(
            build_calibration(&[]),
            Err(ConformalError::EmptyCalibration)
        ));
        assert!(build_calibration(&[0.1, f64::INFINITY]).is_err());
    }

    #[test]
    fn pvalue_worked_example() {
        let calib = build_calibration(&[0.1, 0.4, 0.7, 0.9]).unwrap();
        let p = conformal_pvalue(&calib, ConformityScore::new(0.5).unwrap()).unwrap();
        assert_eq!(p.value(), 3.0 / 5.0);
    }

    #[test]
    fn pvalue_extremes() {
        let calib = build_calibration(&[0.1, 0.4, 0.7, 0.9]).unwrap();
        let low = conformal_pvalue(&calib, ConformityScore::new(-5.0).unwrap()).unwrap();
        assert_eq!(low.value(), 1.0 / 5.0);
        let high = conformal_pvalue(&calib, ConformityScore::new(0.9).unwrap()).unwrap();
        assert_eq!(high.value(), 1.0);
    }

    #[test]
    fn unfrozen_queries_rejected() {
        let mut calib = CalibrationScores::new();
        calib.push(0.3).unwrap();
        let err = conformal_pvalue(&calib, ConformityScore::new(0.5).unwrap());
        assert!(matches!(err, Err(ConformalError::NotFrozen)));
        calib.freeze().unwrap();
        assert!(calib.push(0.4).is_err());
        assert!(calib.freeze().is_err());
    }

    #[test]
    fn batch_matches_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let raw: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let calib = build_calibration(&raw).unwrap();
        let scores: Vec<ConformityScore> = (0..100)
            .map(|_| ConformityScore::new(rng.random_range(-3.0..3.0)).unwrap())
            .collect();
        let batch = batch_pvalues(&calib, &scores).unwrap();
        for (i, &s) in scores.iter().enumerate() {
            assert_eq!(batch.values()[i], conformal_pvalue(&calib, s).unwrap().value());
        }
        let empty = batch_pvalues(&calib, &[]).unwrap();
        assert!(empty.values().is_empty());
    }

    #[test]
    fn extremes_match_direct_scan() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let raw: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();
        let calib = build_calibration(&raw).unwrap();
        let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(calib.scores()[0], min);
        assert_eq!(calib.scores()[calib.len() - 1], max);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calib.txt");
        let calib = build_calibration(&[0.25, -1.5, 3.75e-3, 0.25]).unwrap();
        let lambda = LambdaWeight::new(0.3).unwrap();
        calib.save(lambda, &path).unwrap();
        let (loaded, loaded_lambda) = CalibrationScores::load(&path).unwrap();
        assert_eq!(loaded.scores(), calib.scores());
        assert_eq!(loaded_lambda.value(), lambda.value());
    }

    #[test]
    fn load_reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calib.txt");
        std::fs::write(&path, "# lambda=0.5 eps=1e-7\n0.5\nnot-a-number\n").unwrap();
        match CalibrationScores::load(&path) {
            Err(ConformalError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        /// Monotone in the test score for a fixed calibration set.
        #[test]
        fn pvalue_monotone(mut raw in proptest::collection::vec(-100.0f64..100.0, 1..60),
                           a in -150.0f64..150.0, b in -150.0f64..150.0) {
            raw.iter_mut().for_each(|v| *v = (*v * 8.0).round() / 8.0);
            let calib = build_calibration(&raw).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = conformal_pvalue(&calib, ConformityScore::new(lo).unwrap()).unwrap();
            let p_hi = conformal_pvalue(&calib, ConformityScore::new(hi).unwrap()).unwrap();
            prop_assert!(p_lo.value() <= p_hi.value());
        }

        /// Every p-value sits on the grid k/(1+|C|), k in 1..=1+|C|.
        #[test]
        fn pvalue_granularity(raw in proptest::collection::vec(-10.0f64..10.0, 1..40),
                              s in -20.0f64..20.0) {
            let calib = build_calibration(&raw).unwrap();
            let p = conformal_pvalue(&calib, ConformityScore::new(s).unwrap()).unwrap();
            let denom = (1 + calib.len()) as f64;
            let k = (p.value() * denom).round();
            prop_assert!(k >= 1.0 && k <= denom);
            prop_assert_eq!(p.value(), k / denom);
        }

        /// Appending s to the calibration set and counting `<=` reproduces
        /// the union formulation's numerator.
        #[test]
        fn insertion_consistency(raw in proptest::collection::vec(-10.0f64..10.0, 1..40),
                                 s in -20.0f64..20.0) {
            let calib = build_calibration(&raw).unwrap();
            let p = conformal_pvalue(&calib, ConformityScore::new(s).unwrap()).unwrap();
            let mut augmented = raw.clone();
            augmented.push(s);
            let union_count = augmented.iter().filter(|&&c| c <= s).count();
            let k = (p.value() * (1 + calib.len()) as f64).round() as usize;
            prop_assert_eq!(k, union_count);
        }

        /// Strictly increasing in f_bc for lambda > 0.
        #[test]
        fn score_strictly_increasing(f1 in 0.0f64..1.0, f2 in 0.0f64..1.0,
                                     lambda in 0.01f64..=1.0) {
            prop_assume!((f1 - f2).abs() > 1e-9);
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            let l = LambdaWeight::new(lambda).unwrap();
            let s_lo = conformity_score(lo, l).unwrap();
            let s_hi = conformity_score(hi, l).unwrap();
            prop_assert!(s_lo.value() < s_hi.value());
        }
    }
}
