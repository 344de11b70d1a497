//! Membership-inference auditing with statistical guarantees.
//!
//! The crate is organized around a pipeline: small feed-forward classifiers
//! ([`nn`]) provide victim, surrogate, and membership models; [`conformal`]
//! turns a membership classifier's output into rank-based non-member
//! p-values against a frozen calibration set; [`fdr`] adjusts those p-values
//! and emits membership decisions whose false discovery rate is controlled
//! at a chosen significance level; [`attack`] orchestrates the full
//! grey-box / black-box attack; and [`scoreio`] applies the conformal + FDR
//! layers post-hoc to scores produced by any external membership inference
//! method.
//!
//! All randomness is seeded through [`seed::derive_seed`], so every pipeline
//! run is bit-reproducible from its configuration.

pub mod attack;
pub mod conformal;
pub mod fdr;
pub mod nn;
pub mod scoreio;
pub mod seed;

pub use attack::{
    build_calibration_scores, build_membership_dataset, prepare_attack, sample_subsets,
    split_auxiliary, train_surrogates, AttackConfig, AttackError, AttackOutcome, AuxSplit,
    MembershipDataset, PreparedAttack, SubsetSource, SurrogateEnsemble, VictimOracle,
};
pub use conformal::{
    batch_pvalues, build_calibration, conformal_pvalue, conformity_score, CalibrationScores,
    ConformalError, ConformityScore, LambdaWeight, PValue, LOGIT_EPS,
};
pub use fdr::{
    bh_adjust, classic_bh_oracle, compute_fdr, decide, fdr_bound, AdjustedPValues, DecisionSet,
    FdrError, FdrReport, Membership, PValueVector, SignificanceLevel,
};
pub use nn::{
    predict_label, predict_softmax, train_classifier, Activation, LabeledDataset, MlpModel,
    NnError, ScoreVector, TrainConfig,
};
pub use scoreio::{
    export_report, import_scores, wrap_external, Orientation, Role, ScoreFile, ScoreFormat,
    ScoreIoError, ScoreRecord, WrapOutcome,
};
