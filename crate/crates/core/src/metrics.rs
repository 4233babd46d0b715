//! FAR/FRR threshold sweeps and the SV / SPF / SASV equal error rates.
//!
//! Target trials are the positive class throughout. A trial is accepted
//! when `score >= threshold` (ties accepted). The sweep evaluates one
//! operating point per candidate threshold, the candidate set being the
//! unique scores plus `+inf`, in ascending order; along that sweep the
//! false-acceptance rate is non-increasing and the false-rejection rate
//! non-decreasing.
//!
//! The equal error rate estimator is pinned so that results are
//! bit-reproducible: walk the sweep until `FAR - FRR` changes sign. If a
//! point with `FAR == FRR` exists, return it; otherwise interpolate
//! linearly between the two adjacent points with
//! `lambda = d_a / (d_a - d_b)` (where `d = FAR - FRR`) and report
//! `EER = FAR_a + lambda * (FAR_b - FAR_a)`. The crossing threshold is
//! interpolated the same way, except that when the upper point is the
//! `+inf` sentinel the lower threshold is reported.

use thiserror::Error;

use crate::protocol::{MetricKind, Trial, TrialClass};

/// A trial joined with a scalar score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub score: f64,
}

impl ScoredTrial {
    pub fn new(trial: Trial, score: f64) -> Self {
        Self { trial, score }
    }
}

/// One operating point of a DET curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// An equal error rate with the threshold it was attained at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    pub metric: MetricKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{metric} subset has no {class} trials")]
    EmptyClass {
        metric: MetricKind,
        class: &'static str,
    },
    #[error("non-finite score for trial `{enroll_id} {test_id}`")]
    NonFiniteScore { enroll_id: String, test_id: String },
}

fn split_classes(
    scored: &[ScoredTrial],
    metric: MetricKind,
) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for st in scored {
        if !st.score.is_finite() {
            return Err(MetricsError::NonFiniteScore {
                enroll_id: st.trial.enroll_id().to_string(),
                test_id: st.trial.test_id().to_string(),
            });
        }
        let class = st.trial.class();
        if !metric.includes(class) {
            continue;
        }
        if class == TrialClass::Target {
            positives.push(st.score);
        } else {
            negatives.push(st.score);
        }
    }
    if positives.is_empty() {
        return Err(MetricsError::EmptyClass {
            metric,
            class: "target",
        });
    }
    if negatives.is_empty() {
        return Err(MetricsError::EmptyClass {
            metric,
            class: "negative",
        });
    }
    Ok((positives, negatives))
}

/// FAR/FRR at every candidate threshold for the given metric subset.
pub fn sweep(scored: &[ScoredTrial], metric: MetricKind) -> Result<Vec<DetPoint>, MetricsError> {
    let (mut positives, mut negatives) = split_classes(scored, metric)?;
    positives.sort_by(f64::total_cmp);
    negatives.sort_by(f64::total_cmp);

    let mut thresholds: Vec<f64> = positives.iter().chain(negatives.iter()).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let n_pos = positives.len() as f64;
    let n_neg = negatives.len() as f64;
    let points = thresholds
        .into_iter()
        .map(|t| {
            // accepted negatives: score >= t; rejected positives: score < t
            let neg_below = negatives.partition_point(|&s| s < t);
            let pos_below = positives.partition_point(|&s| s < t);
            DetPoint {
                threshold: t,
                far: (negatives.len() - neg_below) as f64 / n_neg,
                frr: pos_below as f64 / n_pos,
            }
        })
        .collect();
    Ok(points)
}

/// The equal error rate for one metric, by the pinned estimator above.
pub fn eer(scored: &[ScoredTrial], metric: MetricKind) -> Result<EerResult, MetricsError> {
    let points = sweep(scored, metric)?;
    Ok(eer_from_sweep(&points, metric))
}

fn eer_from_sweep(points: &[DetPoint], metric: MetricKind) -> EerResult {
    // d = far - frr starts at +1 (lowest threshold accepts everything)
    // and ends at -1 (the +inf sentinel rejects everything), and is
    // non-increasing, so a crossing always exists.
    for (i, p) in points.iter().enumerate() {
        let d = p.far - p.frr;
        if d == 0.0 {
            return EerResult {
                eer: p.far,
                threshold: p.threshold,
                metric,
            };
        }
        if d < 0.0 {
            let a = points[i - 1];
            let d_a = a.far - a.frr;
            let lambda = d_a / (d_a - d);
            let eer = a.far + lambda * (p.far - a.far);
            let threshold = if p.threshold.is_finite() {
                a.threshold + lambda * (p.threshold - a.threshold)
            } else {
                a.threshold
            };
            return EerResult {
                eer,
                threshold,
                metric,
            };
        }
    }
    unreachable!("FAR - FRR reaches -1 at the +inf sentinel");
}

/// The three equal error rates of one scored protocol.
///
/// A metric whose subset lacks targets or negatives is reported as
/// `None`; the others are still computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerReport {
    pub sv: Option<EerResult>,
    pub spf: Option<EerResult>,
    pub sasv: Option<EerResult>,
}

impl EerReport {
    pub fn get(&self, metric: MetricKind) -> Option<EerResult> {
        match metric {
            MetricKind::Sv => self.sv,
            MetricKind::Spf => self.spf,
            MetricKind::Sasv => self.sasv,
        }
    }

    /// Plain-text report, EERs in percent with two decimals.
    pub fn to_line(&self) -> String {
        fn cell(r: Option<EerResult>) -> String {
            match r {
                Some(r) => format!("{:.2}%", r.eer * 100.0),
                None => "n/a".to_string(),
            }
        }
        format!(
            "SV-EER: {}  SPF-EER: {}  SASV-EER: {}",
            cell(self.sv),
            cell(self.spf),
            cell(self.sasv)
        )
    }
}

impl std::fmt::Display for EerReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Compute all three EERs. Errors only on non-finite scores; empty
/// subsets degrade to `None` fields.
pub fn all_eers(scored: &[ScoredTrial]) -> Result<EerReport, MetricsError> {
    let mut results = [None, None, None];
    for (slot, metric) in results.iter_mut().zip(MetricKind::ALL) {
        *slot = match eer(scored, metric) {
            Ok(r) => Some(r),
            Err(MetricsError::EmptyClass { .. }) => None,
            Err(e) => return Err(e),
        };
    }
    let [sv, spf, sasv] = results;
    Ok(EerReport { sv, spf, sasv })
}
