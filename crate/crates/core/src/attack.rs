//! End-to-end grey-box / black-box membership inference.
//!
//! The attacker never touches the victim's training data: it holds an
//! auxiliary dataset from the same distribution, splits it into a surrogate
//! pool and two held-out parts, trains K surrogate models on subsamples,
//! and labels each surrogate's outputs on its own training rows as
//! "member" (0) and its outputs on held-out rows as "non-member" (1). A
//! binary classifier trained on that membership dataset scores victim
//! outputs; calibration rows (never used for any training) supply the
//! frozen non-member conformity scores that turn test scores into p-values.
//!
//! Victim access goes through [`VictimOracle`] in both settings, so the
//! pipeline structurally cannot read victim parameters. Grey-box vs
//! black-box differs only in whether the surrogate architecture matches the
//! victim's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{
    batch_pvalues, conformity_score, CalibrationScores, ConformalError, LambdaWeight,
};
use crate::fdr::{
    bh_adjust, compute_fdr, decide, AdjustedPValues, DecisionSet, FdrError, FdrReport, Membership,
    PValueVector, SignificanceLevel,
};
use crate::nn::{
    predict_softmax, train_classifier, Activation, LabeledDataset, MlpModel, NnError, ScoreVector,
    TrainConfig,
};
use crate::seed::derive_seed;

// Seed streams for the stages of one attack run.
const STREAM_SPLIT: u64 = 0;
const STREAM_SUBSET_BASE: u64 = 1 << 32;
const STREAM_SURROGATE_BASE: u64 = 2 << 32;
const STREAM_BINARY: u64 = 3 << 32;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),

    #[error("auxiliary split produced an empty part ({0})")]
    EmptySplitPart(&'static str),

    #[error("eta {eta} yields empty subsets from a pool of {pool}")]
    EmptySubsets { eta: f64, pool: usize },

    #[error("empty test set")]
    EmptyTestSet,

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Conformal(#[from] ConformalError),

    #[error(transparent)]
    Fdr(#[from] FdrError),
}

/// Where the K surrogate training subsets are drawn from.
///
/// `Au1` is the primary construction (subsets of the dedicated surrogate
/// pool). `Au2` reproduces the variant that samples them from the held-out
/// part instead; it is provided for comparison runs only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetSource {
    Au1,
    Au2,
}

/// Full configuration of one attack run.
///
/// `surrogate_hidden` / `binary_hidden` are hidden-layer widths; input and
/// output widths come from the data. The `seed` fields inside the two train
/// configs are ignored — per-model seeds are derived from `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub k: usize,
    pub eta: f64,
    pub lambda: LambdaWeight,
    pub alpha: SignificanceLevel,
    pub split_au1_fraction: f64,
    pub split_ca_fraction: f64,
    pub subset_source: SubsetSource,
    pub surrogate_hidden: Vec<usize>,
    pub surrogate_activation: Activation,
    pub binary_hidden: Vec<usize>,
    pub binary_activation: Activation,
    pub blackbox: bool,
    pub seed: u64,
    pub surrogate_train: TrainConfig,
    pub binary_train: TrainConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            k: 8,
            eta: 0.5,
            lambda: LambdaWeight::default(),
            alpha: SignificanceLevel::new(0.1).expect("valid default alpha"),
            split_au1_fraction: 0.3,
            split_ca_fraction: 0.4,
            subset_source: SubsetSource::Au1,
            surrogate_hidden: vec![32],
            surrogate_activation: Activation::Relu,
            binary_hidden: vec![16],
            binary_activation: Activation::Relu,
            blackbox: false,
            seed: 0,
            surrogate_train: TrainConfig::new(0.2, 400, 32, 0),
            binary_train: TrainConfig::new(0.2, 150, 64, 0),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.k == 0 {
            return Err(AttackError::InvalidConfig("K must be >= 1".into()));
        }
        if !(self.eta.is_finite() && 0.0 < self.eta && self.eta <= 1.0) {
            return Err(AttackError::InvalidConfig(format!(
                "eta must be in (0,1], got {}",
                self.eta
            )));
        }
        for (name, f) in [
            ("split_au1_fraction", self.split_au1_fraction),
            ("split_ca_fraction", self.split_ca_fraction),
        ] {
            if !(f.is_finite() && 0.0 < f && f < 1.0) {
                return Err(AttackError::InvalidConfig(format!(
                    "{name} must be in (0,1), got {f}"
                )));
            }
        }
        self.surrogate_train.validate().map_err(AttackError::Nn)?;
        self.binary_train.validate().map_err(AttackError::Nn)?;
        Ok(())
    }

    fn surrogate_arch(&self, dim: usize, n_classes: usize) -> Vec<usize> {
        let mut arch = vec![dim];
        arch.extend_from_slice(&self.surrogate_hidden);
        arch.push(n_classes);
        arch
    }

    fn binary_arch(&self, score_dim: usize) -> Vec<usize> {
        let mut arch = vec![score_dim];
        arch.extend_from_slice(&self.binary_hidden);
        arch.push(2);
        arch
    }
}

/// Three-way partition of the auxiliary data, with the originating row ids
/// kept for audit.
#[derive(Debug, Clone)]
pub struct AuxSplit {
    pub d_au1: LabeledDataset,
    pub d_au2_tr: LabeledDataset,
    pub d_au2_ca: LabeledDataset,
    pub au1_ids: Vec<usize>,
    pub tr_ids: Vec<usize>,
    pub ca_ids: Vec<usize>,
}

impl AuxSplit {
    /// Dataset the surrogate subsets index into for the given source.
    pub fn subset_pool(&self, source: SubsetSource) -> Result<LabeledDataset, AttackError> {
        match source {
            SubsetSource::Au1 => Ok(self.d_au1.clone()),
            SubsetSource::Au2 => {
                let mut rows = Vec::with_capacity(self.d_au2_tr.len() + self.d_au2_ca.len());
                let mut labels = Vec::with_capacity(rows.capacity());
                for ds in [&self.d_au2_tr, &self.d_au2_ca] {
                    for i in 0..ds.len() {
                        rows.push(ds.row(i).to_vec());
                        labels.push(ds.label(i));
                    }
                }
                LabeledDataset::from_rows(&rows, &labels, self.d_au1.n_classes())
                    .map_err(AttackError::Nn)
            }
        }
    }
}

/// K surrogate models plus the pool row ids each one trained on.
#[derive(Debug, Clone)]
pub struct SurrogateEnsemble {
    pub models: Vec<MlpModel>,
    pub subset_ids: Vec<Vec<usize>>,
}

/// Surrogate softmax outputs labeled member (0) / non-member (1).
#[derive(Debug, Clone)]
pub struct MembershipDataset {
    inputs: Vec<ScoreVector>,
    labels: Vec<usize>,
}

impl MembershipDataset {
    pub const MEMBER: usize = 0;
    pub const NON_MEMBER: usize = 1;

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &ScoreVector {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn n_members(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Self::MEMBER).count()
    }

    pub fn n_non_members(&self) -> usize {
        self.len() - self.n_members()
    }

    /// View as a trainable two-class dataset (features = softmax vectors).
    pub fn to_dataset(&self) -> Result<LabeledDataset, NnError> {
        let rows: Vec<Vec<f64>> = self.inputs.iter().map(|sv| sv.probs().to_vec()).collect();
        LabeledDataset::from_rows(&rows, &self.labels, 2)
    }
}

/// Query-only access to the victim model.
pub trait VictimOracle {
    fn query(&self, x: &[f64]) -> Result<ScoreVector, NnError>;
}

impl VictimOracle for MlpModel {
    fn query(&self, x: &[f64]) -> Result<ScoreVector, NnError> {
        predict_softmax(self, x)
    }
}

/// Shuffle-and-cut partition of the auxiliary dataset.
///
/// `split_au1_fraction` of the rows go to the surrogate pool; of the rest,
/// `split_ca_fraction` go to calibration and the remainder to the
/// membership-dataset side. Sizes are rounded; identical seeds give
/// identical splits.
pub fn split_auxiliary(d_au: &LabeledDataset, cfg: &AttackConfig) -> Result<AuxSplit, AttackError> {
    cfg.validate()?;
    let n = d_au.len();
    let n1 = (n as f64 * cfg.split_au1_fraction).round() as usize;
    let n_rest = n.saturating_sub(n1);
    let n_ca = (n_rest as f64 * cfg.split_ca_fraction).round() as usize;
    let n_tr = n_rest.saturating_sub(n_ca);
    if n1 == 0 {
        return Err(AttackError::EmptySplitPart("d_au1"));
    }
    if n_ca == 0 {
        return Err(AttackError::EmptySplitPart("d_au2_ca"));
    }
    if n_tr == 0 {
        return Err(AttackError::EmptySplitPart("d_au2_tr"));
    }

    let mut ids: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SPLIT)));

    let au1_ids = ids[..n1].to_vec();
    let tr_ids = ids[n1..n1 + n_tr].to_vec();
    let ca_ids = ids[n1 + n_tr..].to_vec();

    Ok(AuxSplit {
        d_au1: d_au.subset(&au1_ids)?,
        d_au2_tr: d_au.subset(&tr_ids)?,
        d_au2_ca: d_au.subset(&ca_ids)?,
        au1_ids,
        tr_ids,
        ca_ids,
    })
}

/// Draw K subsets of `floor(eta * |pool|)` distinct row ids, independently
/// across k (a row may appear in several subsets, never twice in one).
pub fn sample_subsets(
    pool: &LabeledDataset,
    k: usize,
    eta: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>, AttackError> {
    let m = (eta * pool.len() as f64).floor() as usize;
    if m == 0 {
        return Err(AttackError::EmptySubsets {
            eta,
            pool: pool.len(),
        });
    }
    let mut subsets = Vec::with_capacity(k);
    for i in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SUBSET_BASE + i as u64));
        let ids = rand::seq::index::sample(&mut rng, pool.len(), m).into_vec();
        subsets.push(ids);
    }
    Ok(subsets)
}

/// Train one surrogate per subset with per-model derived seeds.
pub fn train_surrogates(
    pool: &LabeledDataset,
    subset_ids: &[Vec<usize>],
    cfg: &AttackConfig,
) -> Result<SurrogateEnsemble, AttackError> {
    let arch = cfg.surrogate_arch(pool.dim(), pool.n_classes());
    let mut models = Vec::with_capacity(subset_ids.len());
    for (i, ids) in subset_ids.iter().enumerate() {
        let data = pool.subset(ids)?;
        let train_cfg = cfg
            .surrogate_train
            .with_seed(derive_seed(cfg.seed, STREAM_SURROGATE_BASE + i as u64));
        models.push(train_classifier(
            &data,
            &arch,
            cfg.surrogate_activation,
            &train_cfg,
        )?);
    }
    Ok(SurrogateEnsemble {
        models,
        subset_ids: subset_ids.to_vec(),
    })
}

/// Label surrogate outputs: each model's softmax on its own training rows
/// is a member row (0); every model's softmax on each held-out row of
/// `d_au2_tr` is a non-member row (1).
pub fn build_membership_dataset(
    ensemble: &SurrogateEnsemble,
    pool: &LabeledDataset,
    d_au2_tr: &LabeledDataset,
) -> Result<MembershipDataset, AttackError> {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (model, ids) in ensemble.models.iter().zip(&ensemble.subset_ids) {
        for &i in ids {
            inputs.push(predict_softmax(model, pool.row(i))?);
            labels.push(MembershipDataset::MEMBER);
        }
    }
    for i in 0..d_au2_tr.len() {
        for model in &ensemble.models {
            inputs.push(predict_softmax(model, d_au2_tr.row(i))?);
            labels.push(MembershipDataset::NON_MEMBER);
        }
    }
    Ok(MembershipDataset { inputs, labels })
}

/// Train the member/non-member classifier on the membership dataset.
pub fn train_membership_classifier(
    me: &MembershipDataset,
    cfg: &AttackConfig,
) -> Result<MlpModel, AttackError> {
    let data = me.to_dataset()?;
    let arch = cfg.binary_arch(data.dim());
    let train_cfg = cfg
        .binary_train
        .with_seed(derive_seed(cfg.seed, STREAM_BINARY));
    Ok(train_classifier(
        &data,
        &arch,
        cfg.binary_activation,
        &train_cfg,
    )?)
}

/// Probability the binary classifier assigns to "non-member" for one model
/// output.
fn non_member_probability(binary: &MlpModel, output: &ScoreVector) -> Result<f64, NnError> {
    let sv = predict_softmax(binary, output.probs())?;
    Ok(sv.probs()[MembershipDataset::NON_MEMBER])
}

/// Conformity scores of every surrogate's output on every calibration row,
/// frozen: `K * |d_au2_ca|` scores in total.
pub fn build_calibration_scores(
    ensemble: &SurrogateEnsemble,
    binary: &MlpModel,
    split: &AuxSplit,
    lambda: LambdaWeight,
) -> Result<CalibrationScores, AttackError> {
    let ca = &split.d_au2_ca;
    let mut calib = CalibrationScores::new();
    for i in 0..ca.len() {
        for model in &ensemble.models {
            let output = predict_softmax(model, ca.row(i))?;
            let f_bc = non_member_probability(binary, &output)?;
            calib.push(conformity_score(f_bc, lambda)?.value())?;
        }
    }
    calib.freeze()?;
    Ok(calib)
}

/// Everything needed to score test batches: the single-threaded barrier
/// (ensemble + binary classifier + frozen calibration) has already run.
#[derive(Debug, Clone)]
pub struct PreparedAttack {
    pub ensemble: SurrogateEnsemble,
    pub binary: MlpModel,
    pub calibration: CalibrationScores,
    pub lambda: LambdaWeight,
    pub alpha: SignificanceLevel,
    pub manifest: AttackManifest,
}

/// Run provenance: enough to reproduce or audit a prepared attack.
#[derive(Debug, Clone, Serialize)]
pub struct AttackManifest {
    pub seed: u64,
    pub k: usize,
    pub eta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub blackbox: bool,
    pub subset_source: SubsetSource,
    pub n_au: usize,
    pub n_au1: usize,
    pub n_au2_tr: usize,
    pub n_au2_ca: usize,
    pub subset_size: usize,
    pub n_membership_rows: usize,
    pub n_calibration_scores: usize,
    pub surrogate_arch: Vec<usize>,
    pub binary_arch: Vec<usize>,
}

/// Result of scoring one test batch.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    /// Per-sample conformity scores, test order.
    pub conformity: Vec<f64>,
    pub pvalues: PValueVector,
    pub adjusted: AdjustedPValues,
    pub decisions: DecisionSet,
    /// Present iff ground truth was supplied.
    pub report: Option<FdrReport>,
}

/// Split, subsample, train surrogates, build the membership dataset, train
/// the binary classifier, and freeze calibration.
pub fn prepare_attack(
    d_au: &LabeledDataset,
    cfg: &AttackConfig,
) -> Result<PreparedAttack, AttackError> {
    let split = split_auxiliary(d_au, cfg)?;
    let pool = split.subset_pool(cfg.subset_source)?;
    let subset_ids = sample_subsets(&pool, cfg.k, cfg.eta, cfg.seed)?;
    let ensemble = train_surrogates(&pool, &subset_ids, cfg)?;
    let me = build_membership_dataset(&ensemble, &pool, &split.d_au2_tr)?;
    let binary = train_membership_classifier(&me, cfg)?;
    let calibration = build_calibration_scores(&ensemble, &binary, &split, cfg.lambda)?;

    let manifest = AttackManifest {
        seed: cfg.seed,
        k: cfg.k,
        eta: cfg.eta,
        lambda: cfg.lambda.value(),
        alpha: cfg.alpha.value(),
        blackbox: cfg.blackbox,
        subset_source: cfg.subset_source,
        n_au: d_au.len(),
        n_au1: split.d_au1.len(),
        n_au2_tr: split.d_au2_tr.len(),
        n_au2_ca: split.d_au2_ca.len(),
        subset_size: subset_ids.first().map_or(0, Vec::len),
        n_membership_rows: me.len(),
        n_calibration_scores: calibration.len(),
        surrogate_arch: cfg.surrogate_arch(pool.dim(), pool.n_classes()),
        binary_arch: cfg.binary_arch(pool.n_classes()),
    };

    Ok(PreparedAttack {
        ensemble,
        binary,
        calibration,
        lambda: cfg.lambda,
        alpha: cfg.alpha,
        manifest,
    })
}

/// Score a test batch end to end: victim query, conformity score, conformal
/// p-value, step-up adjustment, decisions, and (with truth) the realized
/// FDR report.
pub fn run_attack(
    victim: &dyn VictimOracle,
    test_features: &[Vec<f64>],
    truth: Option<&[Membership]>,
    prepared: &PreparedAttack,
) -> Result<AttackOutcome, AttackError> {
    if test_features.is_empty() {
        return Err(AttackError::EmptyTestSet);
    }
    let mut scores = Vec::with_capacity(test_features.len());
    for x in test_features {
        let y = victim.query(x)?;
        let f_bc = non_member_probability(&prepared.binary, &y)?;
        scores.push(conformity_score(f_bc, prepared.lambda)?);
    }
    let pvalues = batch_pvalues(&prepared.calibration, &scores)?;
    let adjusted = bh_adjust(&pvalues);
    let decisions = decide(&adjusted, prepared.alpha);
    let report = truth
        .map(|t| compute_fdr(&decisions, t, prepared.alpha))
        .transpose()?;
    Ok(AttackOutcome {
        conformity: scores.iter().map(|s| s.value()).collect(),
        pvalues,
        adjusted,
        decisions,
        report,
    })
}

impl PreparedAttack {
    pub fn run(
        &self,
        victim: &dyn VictimOracle,
        test_features: &[Vec<f64>],
        truth: Option<&[Membership]>,
    ) -> Result<AttackOutcome, AttackError> {
        run_attack(victim, test_features, truth, self)
    }
}
