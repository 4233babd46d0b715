//! Fusion back-ends combining speaker-verification and countermeasure
//! outputs into one decision score per trial.
//!
//! Three baselines are provided:
//! - `b1`: parameter-free score sum of the cosine similarity and the raw
//!   bona fide countermeasure logit ([`score_b1`]);
//! - `b1v2`: the same sum with the countermeasure logits squashed to
//!   (0, 1) by a softmax first ([`score_b1v2`]) — the raw logit is
//!   unbounded and can drown the bounded cosine term;
//! - `b2`: a trainable MLP over the enrollment/test speaker embeddings
//!   and the test countermeasure embedding ([`MlpFusionModel`]).

mod mlp;
mod train;

pub use mlp::{DenseLayer, FusionError, MlpFusionModel, MlpOutput, MODEL_MAGIC};
pub use train::{
    mlp_train, MlpArchitecture, MlpTrainNet, TrainConfig, TrainExample, TrainReport,
};

/// Per-trial sub-system outputs: bounded cosine similarity plus the two
/// countermeasure logits (bona fide first).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsystemScores {
    pub asv: f64,
    pub cm_logits: [f64; 2],
}

/// Score-sum fusion on the raw bona fide logit.
pub fn score_b1(s: &SubsystemScores) -> f64 {
    s.asv + s.cm_logits[0]
}

/// Probability of the bona fide class under a two-way softmax, computed
/// in the shifted form so large logits cannot overflow.
pub fn softmax_bonafide(logits: [f64; 2]) -> f64 {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    e0 / (e0 + e1)
}

/// Score-sum fusion with the softmax-normalised countermeasure score;
/// the result lies in the open interval (-1, 2).
pub fn score_b1v2(s: &SubsystemScores) -> f64 {
    s.asv + softmax_bonafide(s.cm_logits)
}
