//! Evaluation and score-fusion toolkit for spoofing-aware speaker
//! verification (SASV).
//!
//! The library covers the full desk pipeline for the task: parsing trial
//! protocols with three trial classes (target, bona fide non-target,
//! spoofed non-target), scoring trials from precomputed speaker and
//! countermeasure embeddings, the baseline fusion back-ends (score-sum,
//! score-sum with softmax-normalised countermeasure scores, and a trainable
//! MLP over embeddings), and the SV / SPF / SASV equal error rates together
//! with DET curves.
//!
//! Real systems plug in by exporting their embeddings and countermeasure
//! outputs to the binary stores defined in [`embedding`]; [`synthgen`]
//! produces deterministic synthetic cohorts so the whole pipeline can be
//! exercised without audio or pretrained models.

pub mod det;
pub mod embedding;
pub mod fusion;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod scoring;
pub mod sigfig;
pub mod synthgen;
