//! Protocol scoring with a chosen fusion back-end, plus the plain-text
//! score file format.
//!
//! Score files carry one line per trial in protocol order:
//!
//! ```text
//! <enroll_id> <test_id> <label> <score>
//! ```
//!
//! with the score printed at 9 significant digits. Labels ride along so
//! downstream metric computation needs no protocol rejoin.
//!
//! Scoring fans out across worker threads when the protocol is large;
//! stores are shared read-only and the output order always matches the
//! protocol order.

use std::io::{self, Write};

use thiserror::Error;

use crate::embedding::{cosine, CmOutputs, EmbeddingError, EmbeddingStore};
use crate::fusion::{score_b1, score_b1v2, FusionError, MlpFusionModel, SubsystemScores, TrainExample};
use crate::metrics::ScoredTrial;
use crate::protocol::{Protocol, ProtocolError, Trial, TrialClass};
use crate::sigfig::format_sig;

/// The available scoring back-ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Cosine similarity only, no countermeasure.
    AsvOnly,
    /// Cosine plus the raw bona fide countermeasure logit.
    B1,
    /// Cosine plus the softmax-normalised countermeasure score.
    B1V2,
    /// Trained MLP over the embeddings.
    B2,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::AsvOnly, Backend::B1, Backend::B1V2, Backend::B2];

    pub fn name(self) -> &'static str {
        match self {
            Backend::AsvOnly => "asv-only",
            Backend::B1 => "b1",
            Backend::B1V2 => "b1v2",
            Backend::B2 => "b2",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, ScoreError> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| ScoreError::UnknownBackend { name: s.to_string() })
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("unknown backend `{name}` (expected asv-only, b1, b1v2 or b2)")]
    UnknownBackend { name: String },
    #[error("backend {backend} requires {what}")]
    MissingInput {
        backend: Backend,
        what: &'static str,
    },
    #[error("no speaker embedding for id `{id}`")]
    MissingSpeakerEmbedding { id: String },
    #[error("no countermeasure output for id `{id}`")]
    MissingCmOutput { id: String },
    #[error("no countermeasure embedding for id `{id}`")]
    MissingCmEmbedding { id: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("score line {line}: expected 4 space-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("score line {line}: unknown trial label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("score line {line}: `{token}` is not a number")]
    BadScore { line: usize, token: String },
    #[error("score line {line}: score is not finite")]
    NonFiniteScore { line: usize },
    #[error("score line {line}: {source}")]
    InvalidTrial {
        line: usize,
        source: ProtocolError,
    },
    #[error("score file contains no trials")]
    EmptyScoreFile,
    #[error("score file line {line}: not valid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Everything a back-end may need; unused inputs can stay `None`.
#[derive(Clone, Copy)]
pub struct ScoringInputs<'a> {
    pub spk: &'a EmbeddingStore,
    pub cm_outputs: Option<&'a CmOutputs>,
    pub cm_emb: Option<&'a EmbeddingStore>,
    pub model: Option<&'a MlpFusionModel>,
}

impl<'a> ScoringInputs<'a> {
    pub fn asv_only(spk: &'a EmbeddingStore) -> Self {
        Self {
            spk,
            cm_outputs: None,
            cm_emb: None,
            model: None,
        }
    }

    fn validate(&self, backend: Backend) -> Result<(), ScoreError> {
        match backend {
            Backend::AsvOnly => Ok(()),
            Backend::B1 | Backend::B1V2 => {
                if self.cm_outputs.is_none() {
                    return Err(ScoreError::MissingInput {
                        backend,
                        what: "countermeasure logits",
                    });
                }
                Ok(())
            }
            Backend::B2 => {
                if self.cm_emb.is_none() {
                    return Err(ScoreError::MissingInput {
                        backend,
                        what: "countermeasure embeddings",
                    });
                }
                if self.model.is_none() {
                    return Err(ScoreError::MissingInput {
                        backend,
                        what: "a fusion model",
                    });
                }
                Ok(())
            }
        }
    }
}

fn score_trial(trial: &Trial, backend: Backend, inputs: &ScoringInputs) -> Result<f64, ScoreError> {
    let enroll = inputs
        .spk
        .get(trial.enroll_id())
        .ok_or_else(|| ScoreError::MissingSpeakerEmbedding {
            id: trial.enroll_id().to_string(),
        })?;
    let test = inputs
        .spk
        .get(trial.test_id())
        .ok_or_else(|| ScoreError::MissingSpeakerEmbedding {
            id: trial.test_id().to_string(),
        })?;

    match backend {
        Backend::AsvOnly => Ok(cosine(enroll, test)?),
        Backend::B1 | Backend::B1V2 => {
            let asv = cosine(enroll, test)?;
            let cm = inputs
                .cm_outputs
                .expect("validated")
                .get(trial.test_id())
                .ok_or_else(|| ScoreError::MissingCmOutput {
                    id: trial.test_id().to_string(),
                })?;
            let scores = SubsystemScores {
                asv,
                cm_logits: [
                    f64::from(cm.bona_fide_logit()),
                    f64::from(cm.spoof_logit()),
                ],
            };
            Ok(match backend {
                Backend::B1 => score_b1(&scores),
                _ => score_b1v2(&scores),
            })
        }
        Backend::B2 => {
            let cm = inputs
                .cm_emb
                .expect("validated")
                .get(trial.test_id())
                .ok_or_else(|| ScoreError::MissingCmEmbedding {
                    id: trial.test_id().to_string(),
                })?;
            let model = inputs.model.expect("validated");
            Ok(model
                .forward(enroll.values(), test.values(), cm.values())?
                .score)
        }
    }
}

/// Score every trial, preserving protocol order. Worker threads split
/// the protocol into contiguous chunks; the first error in trial order
/// wins.
pub fn score_protocol(
    protocol: &Protocol,
    backend: Backend,
    inputs: &ScoringInputs,
) -> Result<Vec<ScoredTrial>, ScoreError> {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(protocol.len().div_ceil(2048))
        .max(1);
    score_protocol_threads(protocol, backend, inputs, threads)
}

/// [`score_protocol`] with an explicit worker count (1 = sequential).
pub fn score_protocol_threads(
    protocol: &Protocol,
    backend: Backend,
    inputs: &ScoringInputs,
    threads: usize,
) -> Result<Vec<ScoredTrial>, ScoreError> {
    inputs.validate(backend)?;
    let trials = protocol.trials();

    let results: Vec<Result<f64, ScoreError>> = if threads <= 1 {
        trials
            .iter()
            .map(|t| score_trial(t, backend, inputs))
            .collect()
    } else {
        let chunk_len = trials.len().div_ceil(threads);
        let mut results: Vec<Result<f64, ScoreError>> = Vec::with_capacity(trials.len());
        for _ in 0..trials.len() {
            results.push(Ok(0.0));
        }
        std::thread::scope(|scope| {
            let mut rest: &mut [Result<f64, ScoreError>] = &mut results;
            for chunk in trials.chunks(chunk_len) {
                let (head, tail) = rest.split_at_mut(chunk.len());
                rest = tail;
                scope.spawn(move || {
                    for (slot, trial) in head.iter_mut().zip(chunk) {
                        *slot = score_trial(trial, backend, inputs);
                    }
                });
            }
        });
        results
    };

    let mut scored = Vec::with_capacity(trials.len());
    for (trial, result) in trials.iter().zip(results) {
        scored.push(ScoredTrial::new(trial.clone(), result?));
    }
    Ok(scored)
}

/// Training tuples for the embedding-fusion MLP, one per trial; the
/// target class is positive, both non-target classes are negative.
pub fn assemble_training_data(
    protocol: &Protocol,
    spk: &EmbeddingStore,
    cm_emb: &EmbeddingStore,
) -> Result<Vec<TrainExample>, ScoreError> {
    protocol
        .trials()
        .iter()
        .map(|t| {
            let enroll = spk
                .get(t.enroll_id())
                .ok_or_else(|| ScoreError::MissingSpeakerEmbedding {
                    id: t.enroll_id().to_string(),
                })?;
            let test = spk
                .get(t.test_id())
                .ok_or_else(|| ScoreError::MissingSpeakerEmbedding {
                    id: t.test_id().to_string(),
                })?;
            let cm = cm_emb
                .get(t.test_id())
                .ok_or_else(|| ScoreError::MissingCmEmbedding {
                    id: t.test_id().to_string(),
                })?;
            Ok(TrainExample {
                enroll: enroll.values().to_vec(),
                test_spk: test.values().to_vec(),
                test_cm: cm.values().to_vec(),
                is_target: t.class() == TrialClass::Target,
            })
        })
        .collect()
}

/// Serialize scored trials to the 4-column text format.
pub fn write_scores<W: Write>(writer: &mut W, scored: &[ScoredTrial]) -> io::Result<()> {
    for st in scored {
        writeln!(
            writer,
            "{} {} {} {}",
            st.trial.enroll_id(),
            st.trial.test_id(),
            st.trial.class().label(),
            format_sig(st.score, 9)
        )?;
    }
    Ok(())
}

pub fn scores_to_string(scored: &[ScoredTrial]) -> String {
    let mut out = Vec::new();
    write_scores(&mut out, scored).expect("writing to Vec cannot fail");
    String::from_utf8(out).expect("score lines are ASCII")
}

/// Parse a score file; blank lines are ignored, anything else must be a
/// well-formed score line.
pub fn parse_scores(bytes: &[u8]) -> Result<Vec<ScoredTrial>, ScoreError> {
    let mut scored = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let line =
            std::str::from_utf8(raw).map_err(|_| ScoreError::InvalidUtf8 { line: line_no })?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 4 {
            return Err(ScoreError::FieldCount {
                line: line_no,
                found: fields.len(),
            });
        }
        let class = TrialClass::from_label(fields[2]).ok_or_else(|| ScoreError::UnknownLabel {
            line: line_no,
            label: fields[2].to_string(),
        })?;
        let trial = Trial::new(fields[0], fields[1], class)
            .map_err(|source| ScoreError::InvalidTrial { line: line_no, source })?;
        let score: f64 = fields[3].parse().map_err(|_| ScoreError::BadScore {
            line: line_no,
            token: fields[3].to_string(),
        })?;
        if !score.is_finite() {
            return Err(ScoreError::NonFiniteScore { line: line_no });
        }
        scored.push(ScoredTrial::new(trial, score));
    }
    if scored.is_empty() {
        return Err(ScoreError::EmptyScoreFile);
    }
    Ok(scored)
}

/// Round scores to the 9-significant-digit wire precision, i.e. to the
/// exact values a score file written from them would read back.
pub fn round_to_wire_precision(scored: &mut [ScoredTrial]) {
    for st in scored.iter_mut() {
        st.score = format_sig(st.score, 9)
            .parse()
            .expect("formatted numbers parse back");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::softmax_bonafide;
    use crate::synthgen::{generate, CohortSpec};

    fn small_cohort() -> crate::synthgen::Cohort {
        generate(&CohortSpec {
            seed: 11,
            n_speakers: 3,
            utterances_per_speaker: 3,
            spoofs_per_speaker: 2,
            d_spk: 8,
            d_cm: 4,
            sigma_between: 1.0,
            sigma_within: 0.05,
            artifact_strength: 3.0,
            cm_logit_margin: 4.0,
        })
        .unwrap()
    }

    #[test]
    fn backend_names_round_trip() {
        for b in Backend::ALL {
            assert_eq!(b.name().parse::<Backend>().unwrap(), b);
        }
        assert!(matches!(
            "b3".parse::<Backend>().unwrap_err(),
            ScoreError::UnknownBackend { .. }
        ));
    }

    #[test]
    fn backend_input_requirements() {
        let cohort = small_cohort();
        let inputs = ScoringInputs::asv_only(&cohort.spk_store);
        assert!(score_protocol(&cohort.protocol, Backend::AsvOnly, &inputs).is_ok());
        assert!(matches!(
            score_protocol(&cohort.protocol, Backend::B1, &inputs).unwrap_err(),
            ScoreError::MissingInput { what: "countermeasure logits", .. }
        ));
        assert!(matches!(
            score_protocol(&cohort.protocol, Backend::B2, &inputs).unwrap_err(),
            ScoreError::MissingInput { .. }
        ));
    }

    #[test]
    fn b1_and_b1v2_differ_exactly_by_the_cm_term() {
        let cohort = small_cohort();
        let inputs = ScoringInputs {
            spk: &cohort.spk_store,
            cm_outputs: Some(&cohort.cm_outputs),
            cm_emb: None,
            model: None,
        };
        let b1 = score_protocol(&cohort.protocol, Backend::B1, &inputs).unwrap();
        let b1v2 = score_protocol(&cohort.protocol, Backend::B1V2, &inputs).unwrap();
        for (a, b) in b1.iter().zip(&b1v2) {
            assert_eq!(a.trial, b.trial);
            let cm = cohort.cm_outputs.get(a.trial.test_id()).unwrap();
            let raw = f64::from(cm.bona_fide_logit());
            let soft = softmax_bonafide([raw, f64::from(cm.spoof_logit())]);
            assert!((a.score - b.score - (raw - soft)).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_embedding_errors_name_the_id() {
        let cohort = small_cohort();
        let mut trials = cohort.protocol.trials().to_vec();
        trials.push(Trial::new("spk0000", "ghost-utt", TrialClass::Target).unwrap());
        let protocol = Protocol::new(trials).unwrap();
        let err = score_protocol(
            &protocol,
            Backend::AsvOnly,
            &ScoringInputs::asv_only(&cohort.spk_store),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ScoreError::MissingSpeakerEmbedding { id } if id == "ghost-utt"
        ));
    }

    #[test]
    fn parallel_and_sequential_scoring_agree() {
        let cohort = small_cohort();
        let inputs = ScoringInputs {
            spk: &cohort.spk_store,
            cm_outputs: Some(&cohort.cm_outputs),
            cm_emb: None,
            model: None,
        };
        let seq = score_protocol_threads(&cohort.protocol, Backend::B1V2, &inputs, 1).unwrap();
        let par = score_protocol_threads(&cohort.protocol, Backend::B1V2, &inputs, 4).unwrap();
        assert_eq!(seq.len(), par.len());
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.trial, b.trial);
            assert_eq!(a.score.to_bits(), b.score.to_bits());
        }
    }

    #[test]
    fn score_file_round_trip_at_wire_precision() {
        let cohort = small_cohort();
        let inputs = ScoringInputs::asv_only(&cohort.spk_store);
        let mut scored = score_protocol(&cohort.protocol, Backend::AsvOnly, &inputs).unwrap();
        round_to_wire_precision(&mut scored);
        let text = scores_to_string(&scored);
        let back = parse_scores(text.as_bytes()).unwrap();
        assert_eq!(back.len(), scored.len());
        for (a, b) in scored.iter().zip(&back) {
            assert_eq!(a.trial, b.trial);
            assert_eq!(a.score.to_bits(), b.score.to_bits());
        }
        // and the serialization is stable
        assert_eq!(scores_to_string(&back), text);
    }

    #[test]
    fn score_file_errors_are_located() {
        assert!(matches!(
            parse_scores(b"").unwrap_err(),
            ScoreError::EmptyScoreFile
        ));
        assert!(matches!(
            parse_scores(b"a u1 target 0.5\nb u2 target\n").unwrap_err(),
            ScoreError::FieldCount { line: 2, found: 3 }
        ));
        assert!(matches!(
            parse_scores(b"a u1 bonafide 0.5\n").unwrap_err(),
            ScoreError::UnknownLabel { line: 1, .. }
        ));
        assert!(matches!(
            parse_scores(b"a u1 target zero\n").unwrap_err(),
            ScoreError::BadScore { line: 1, .. }
        ));
        assert!(matches!(
            parse_scores(b"a u1 target inf\n").unwrap_err(),
            ScoreError::NonFiniteScore { line: 1 }
        ));
    }
}
