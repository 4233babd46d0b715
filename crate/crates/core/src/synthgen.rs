//! Deterministic synthetic cohorts for end-to-end testing without audio
//! or pretrained models.
//!
//! A cohort consists of speaker embeddings, countermeasure embeddings,
//! countermeasure logits and a three-class protocol. Speakers are
//! isotropic Gaussian centroids; utterances add within-speaker noise.
//! Spoofed test utterances reuse the *target speaker's centroid* — so the
//! speaker sub-system alone cannot reject them — but carry an offset
//! along a fixed artifact direction in countermeasure space and logits
//! whose margin favours the spoof class.
//!
//! Everything is a pure function of the seed. The draw order is part of
//! the contract; see [`generate`].

use thiserror::Error;

use crate::embedding::{CmOutput, CmOutputs, Embedding, EmbeddingStore};
use crate::protocol::{ClassCounts, Protocol, Trial, TrialClass};
use crate::rng::XorShift64Star;

/// Parameters of a synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub seed: u64,
    pub n_speakers: usize,
    /// Bona fide test utterances per speaker.
    pub utterances_per_speaker: usize,
    /// Spoofed test utterances per speaker.
    pub spoofs_per_speaker: usize,
    pub d_spk: usize,
    pub d_cm: usize,
    /// Scale of the speaker centroids.
    pub sigma_between: f64,
    /// Scale of per-utterance noise (speaker space, countermeasure space
    /// and logits alike).
    pub sigma_within: f64,
    /// Length of the countermeasure-space offset carried by spoofed
    /// utterances, along the first coordinate axis.
    pub artifact_strength: f64,
    /// Logit separation: bona fide utterances get logits near
    /// `(+margin/2, -margin/2)`, spoofed ones near `(-margin/2, +margin/2)`.
    pub cm_logit_margin: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            n_speakers: 10,
            utterances_per_speaker: 10,
            spoofs_per_speaker: 10,
            d_spk: 192,
            d_cm: 160,
            sigma_between: 1.0,
            sigma_within: 0.05,
            artifact_strength: 4.0,
            cm_logit_margin: 4.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CohortSpecError {
    #[error("{field} must be at least 1")]
    ZeroCount { field: &'static str },
    #[error("{field} must be at least 2")]
    DimensionTooSmall { field: &'static str },
    #[error("{field} must be finite and non-negative")]
    BadStrength { field: &'static str },
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), CohortSpecError> {
        for (field, value) in [
            ("n_speakers", self.n_speakers),
            ("utterances_per_speaker", self.utterances_per_speaker),
            ("spoofs_per_speaker", self.spoofs_per_speaker),
        ] {
            if value == 0 {
                return Err(CohortSpecError::ZeroCount { field });
            }
        }
        for (field, value) in [("d_spk", self.d_spk), ("d_cm", self.d_cm)] {
            if value < 2 {
                return Err(CohortSpecError::DimensionTooSmall { field });
            }
        }
        for (field, value) in [
            ("sigma_between", self.sigma_between),
            ("sigma_within", self.sigma_within),
            ("artifact_strength", self.artifact_strength),
            ("cm_logit_margin", self.cm_logit_margin),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(CohortSpecError::BadStrength { field });
            }
        }
        Ok(())
    }

    /// Protocol class counts implied by these parameters.
    pub fn implied_counts(&self) -> ClassCounts {
        let n = self.n_speakers;
        let u = self.utterances_per_speaker;
        ClassCounts {
            target: n * u,
            nontarget: n * (n - 1) * u,
            spoof: n * self.spoofs_per_speaker,
        }
    }

    pub fn speaker_id(&self, s: usize) -> String {
        format!("spk{s:04}")
    }

    pub fn utterance_id(&self, s: usize, u: usize) -> String {
        format!("spk{s:04}-utt{u:03}")
    }

    pub fn spoof_id(&self, s: usize, v: usize) -> String {
        format!("spk{s:04}-spf{v:03}")
    }
}

/// A generated cohort: the three stores plus the protocol.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub spk_store: EmbeddingStore,
    pub cm_store: EmbeddingStore,
    pub cm_outputs: CmOutputs,
    pub protocol: Protocol,
}

/// Generate a cohort from a spec.
///
/// Gaussian draws come from one [`XorShift64Star`] stream seeded with
/// `spec.seed`, consumed in this exact order per speaker `s`:
/// 1. `d_spk` draws: the centroid (scaled by `sigma_between`);
/// 2. `d_spk` draws: enrollment noise (`sigma_within`), the enrollment
///    embedding being centroid + noise under the speaker id;
/// 3. per bona fide utterance: `d_spk` speaker-noise draws, `d_cm`
///    countermeasure draws (scaled by `sigma_within`), 2 logit-noise
///    draws;
/// 4. per spoofed utterance: the same pattern, with the speaker vector
///    anchored at the *same speaker's* centroid and the countermeasure
///    vector offset by `artifact_strength` along coordinate 0.
///
/// Noise draws happen even when `sigma_within` is zero, so varying the
/// scales never shifts the stream.
///
/// The protocol lists all target trials, then all non-target trials
/// (every enrolled speaker against every other speaker's bona fide
/// utterances), then all spoof trials, each block in (speaker, other
/// speaker, utterance) order.
pub fn generate(spec: &CohortSpec) -> Result<Cohort, CohortSpecError> {
    spec.validate()?;
    let mut rng = XorShift64Star::new(spec.seed);

    let mut spk_store = EmbeddingStore::new(spec.d_spk).expect("d_spk >= 2");
    let mut cm_store = EmbeddingStore::new(spec.d_cm).expect("d_cm >= 2");
    let mut cm_outputs = CmOutputs::new();

    let gaussian_vec = |rng: &mut XorShift64Star, dim: usize, scale: f64| -> Vec<f64> {
        (0..dim).map(|_| scale * rng.next_gaussian()).collect()
    };
    let narrow = |values: Vec<f64>| -> Vec<f32> { values.iter().map(|&v| v as f32).collect() };
    let add = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };

    for s in 0..spec.n_speakers {
        let centroid = gaussian_vec(&mut rng, spec.d_spk, spec.sigma_between);

        let enroll_noise = gaussian_vec(&mut rng, spec.d_spk, spec.sigma_within);
        spk_store
            .insert(
                Embedding::new(spec.speaker_id(s), narrow(add(&centroid, &enroll_noise)))
                    .expect("finite values"),
            )
            .expect("ids are unique by construction");

        for u in 0..spec.utterances_per_speaker {
            let id = spec.utterance_id(s, u);
            let spk_noise = gaussian_vec(&mut rng, spec.d_spk, spec.sigma_within);
            spk_store
                .insert(Embedding::new(id.clone(), narrow(add(&centroid, &spk_noise))).unwrap())
                .unwrap();
            let cm_vec = gaussian_vec(&mut rng, spec.d_cm, spec.sigma_within);
            cm_store
                .insert(Embedding::new(id.clone(), narrow(cm_vec)).unwrap())
                .unwrap();
            let half = spec.cm_logit_margin / 2.0;
            let l0 = half + spec.sigma_within * rng.next_gaussian();
            let l1 = -half + spec.sigma_within * rng.next_gaussian();
            cm_outputs
                .insert(CmOutput::new(id, [l0 as f32, l1 as f32]).unwrap())
                .unwrap();
        }

        for v in 0..spec.spoofs_per_speaker {
            let id = spec.spoof_id(s, v);
            // spoofed speech resembles the target speaker's voice, so the
            // speaker vector reuses the same centroid
            let spk_noise = gaussian_vec(&mut rng, spec.d_spk, spec.sigma_within);
            spk_store
                .insert(Embedding::new(id.clone(), narrow(add(&centroid, &spk_noise))).unwrap())
                .unwrap();
            let mut cm_vec = gaussian_vec(&mut rng, spec.d_cm, spec.sigma_within);
            cm_vec[0] += spec.artifact_strength;
            cm_store
                .insert(Embedding::new(id.clone(), narrow(cm_vec)).unwrap())
                .unwrap();
            let half = spec.cm_logit_margin / 2.0;
            let l0 = -half + spec.sigma_within * rng.next_gaussian();
            let l1 = half + spec.sigma_within * rng.next_gaussian();
            cm_outputs
                .insert(CmOutput::new(id, [l0 as f32, l1 as f32]).unwrap())
                .unwrap();
        }
    }

    let mut trials = Vec::with_capacity(spec.implied_counts().total());
    for s in 0..spec.n_speakers {
        for u in 0..spec.utterances_per_speaker {
            trials.push(
                Trial::new(spec.speaker_id(s), spec.utterance_id(s, u), TrialClass::Target)
                    .unwrap(),
            );
        }
    }
    for s in 0..spec.n_speakers {
        for o in 0..spec.n_speakers {
            if o == s {
                continue;
            }
            for u in 0..spec.utterances_per_speaker {
                trials.push(
                    Trial::new(
                        spec.speaker_id(s),
                        spec.utterance_id(o, u),
                        TrialClass::NonTarget,
                    )
                    .unwrap(),
                );
            }
        }
    }
    for s in 0..spec.n_speakers {
        for v in 0..spec.spoofs_per_speaker {
            trials.push(
                Trial::new(spec.speaker_id(s), spec.spoof_id(s, v), TrialClass::Spoof).unwrap(),
            );
        }
    }
    let protocol = Protocol::new(trials).expect("counts >= 1 imply trials");

    Ok(Cohort {
        spk_store,
        cm_store,
        cm_outputs,
        protocol,
    })
}
