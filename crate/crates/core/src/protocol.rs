//! Trial protocols for spoofing-aware speaker verification.
//!
//! A protocol is an ordered list of trials, each pairing an enrolled
//! speaker model with a test utterance and carrying one of three classes:
//! target (same speaker, bona fide speech), bona fide non-target
//! (different speaker), or spoofed non-target (synthesised or converted
//! speech imitating the enrolled speaker).
//!
//! The text format is one trial per line, three fields separated by
//! single spaces: `<enroll_id> <test_id> <label>` with label one of
//! `target`, `nontarget`, `spoof`. Blank lines are ignored, newline is
//! LF, a trailing newline is optional. Unknown labels are rejected, not
//! remapped.

use std::fmt;

use thiserror::Error;

/// The three trial classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialClass {
    /// Bona fide speech from the enrolled speaker.
    Target,
    /// Bona fide speech from a different speaker.
    NonTarget,
    /// Spoofed speech imitating the enrolled speaker.
    Spoof,
}

impl TrialClass {
    pub const ALL: [TrialClass; 3] = [TrialClass::Target, TrialClass::NonTarget, TrialClass::Spoof];

    pub fn label(self) -> &'static str {
        match self {
            TrialClass::Target => "target",
            TrialClass::NonTarget => "nontarget",
            TrialClass::Spoof => "spoof",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "target" => Some(TrialClass::Target),
            "nontarget" => Some(TrialClass::NonTarget),
            "spoof" => Some(TrialClass::Spoof),
            _ => None,
        }
    }
}

impl fmt::Display for TrialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which equal error rate a subset feeds.
///
/// Target trials are the positive class for every metric; the metrics
/// differ in which negative classes they admit: `Sv` uses bona fide
/// non-targets, `Spf` uses spoofed non-targets, `Sasv` uses both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Sv,
    Spf,
    Sasv,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Sv, MetricKind::Spf, MetricKind::Sasv];

    /// Whether trials of `class` participate in this metric.
    pub fn includes(self, class: TrialClass) -> bool {
        matches!(
            (self, class),
            (_, TrialClass::Target)
                | (MetricKind::Sv, TrialClass::NonTarget)
                | (MetricKind::Spf, TrialClass::Spoof)
                | (MetricKind::Sasv, _)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Sv => "SV",
            MetricKind::Spf => "SPF",
            MetricKind::Sasv => "SASV",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One evaluation item: enrolled model, test utterance, trial class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    enroll_id: String,
    test_id: String,
    class: TrialClass,
}

impl Trial {
    /// Ids must be non-empty and free of whitespace (the text format is
    /// space-delimited).
    pub fn new(
        enroll_id: impl Into<String>,
        test_id: impl Into<String>,
        class: TrialClass,
    ) -> Result<Self, ProtocolError> {
        let enroll_id = enroll_id.into();
        let test_id = test_id.into();
        check_id(&enroll_id, IdField::Enroll)?;
        check_id(&test_id, IdField::Test)?;
        Ok(Self {
            enroll_id,
            test_id,
            class,
        })
    }

    pub fn enroll_id(&self) -> &str {
        &self.enroll_id
    }

    pub fn test_id(&self) -> &str {
        &self.test_id
    }

    pub fn class(&self) -> TrialClass {
        self.class
    }
}

fn check_id(id: &str, field: IdField) -> Result<(), ProtocolError> {
    if id.is_empty() {
        return Err(ProtocolError::EmptyId { line: 0, field });
    }
    if id.chars().any(char::is_whitespace) {
        return Err(ProtocolError::IdWithWhitespace { line: 0, field });
    }
    Ok(())
}

/// Which of the two id columns an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdField {
    Enroll,
    Test,
}

impl fmt::Display for IdField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdField::Enroll => "enrollment",
            IdField::Test => "test",
        })
    }
}

/// Per-class trial counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub target: usize,
    pub nontarget: usize,
    pub spoof: usize,
}

impl ClassCounts {
    pub fn of(&self, class: TrialClass) -> usize {
        match class {
            TrialClass::Target => self.target,
            TrialClass::NonTarget => self.nontarget,
            TrialClass::Spoof => self.spoof,
        }
    }

    pub fn total(&self) -> usize {
        self.target + self.nontarget + self.spoof
    }
}

/// An ordered, immutable list of trials with per-class counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    trials: Vec<Trial>,
    counts: ClassCounts,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("line {line}: expected 3 space-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: unknown trial label `{label}` (expected target, nontarget or spoof)")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: {field} id is empty")]
    EmptyId { line: usize, field: IdField },
    #[error("line {line}: {field} id contains whitespace")]
    IdWithWhitespace { line: usize, field: IdField },
    #[error("line {line}: not valid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("protocol contains no trials")]
    Empty,
    #[error("{metric} subset has no {class} trials")]
    EmptySubset {
        metric: MetricKind,
        class: &'static str,
    },
}

impl ProtocolError {
    fn at_line(self, line: usize) -> Self {
        match self {
            ProtocolError::EmptyId { field, .. } => ProtocolError::EmptyId { line, field },
            ProtocolError::IdWithWhitespace { field, .. } => {
                ProtocolError::IdWithWhitespace { line, field }
            }
            other => other,
        }
    }
}

impl Protocol {
    /// A protocol must hold at least one trial.
    pub fn new(trials: Vec<Trial>) -> Result<Self, ProtocolError> {
        if trials.is_empty() {
            return Err(ProtocolError::Empty);
        }
        let mut counts = ClassCounts::default();
        for t in &trials {
            match t.class {
                TrialClass::Target => counts.target += 1,
                TrialClass::NonTarget => counts.nontarget += 1,
                TrialClass::Spoof => counts.spoof += 1,
            }
        }
        Ok(Self { trials, counts })
    }

    /// Parse the text format. Every input either yields a protocol or a
    /// located error; only blank lines are skipped.
    pub fn parse(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut trials = Vec::new();
        for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
            let line_no = idx + 1;
            let line =
                std::str::from_utf8(raw).map_err(|_| ProtocolError::InvalidUtf8 { line: line_no })?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 3 {
                return Err(ProtocolError::FieldCount {
                    line: line_no,
                    found: fields.len(),
                });
            }
            let class = TrialClass::from_label(fields[2]).ok_or_else(|| {
                ProtocolError::UnknownLabel {
                    line: line_no,
                    label: fields[2].to_string(),
                }
            })?;
            let trial =
                Trial::new(fields[0], fields[1], class).map_err(|e| e.at_line(line_no))?;
            trials.push(trial);
        }
        Self::new(trials)
    }

    /// Serialize back to the text format (LF line endings, trailing
    /// newline included). `parse(to_text(p)) == p`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&t.enroll_id);
            out.push(' ');
            out.push_str(&t.test_id);
            out.push(' ');
            out.push_str(t.class.label());
            out.push('\n');
        }
        out
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn counts(&self) -> ClassCounts {
        self.counts
    }

    /// The sub-protocol feeding `metric`, in the original order.
    ///
    /// Errors if the subset would lack target trials or lack negative
    /// trials, since neither a false-rejection nor a false-acceptance
    /// rate would be defined.
    pub fn subset(&self, metric: MetricKind) -> Result<Protocol, ProtocolError> {
        let trials: Vec<Trial> = self
            .trials
            .iter()
            .filter(|t| metric.includes(t.class))
            .cloned()
            .collect();
        let mut counts = ClassCounts::default();
        for t in &trials {
            match t.class {
                TrialClass::Target => counts.target += 1,
                TrialClass::NonTarget => counts.nontarget += 1,
                TrialClass::Spoof => counts.spoof += 1,
            }
        }
        if counts.target == 0 {
            return Err(ProtocolError::EmptySubset {
                metric,
                class: "target",
            });
        }
        if counts.nontarget + counts.spoof == 0 {
            return Err(ProtocolError::EmptySubset {
                metric,
                class: "negative",
            });
        }
        Ok(Protocol { trials, counts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn protocol(text: &str) -> Result<Protocol, ProtocolError> {
        Protocol::parse(text.as_bytes())
    }

    #[test]
    fn parses_single_line() {
        let p = protocol("spk1 utt9 target\n").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.trials()[0].enroll_id(), "spk1");
        assert_eq!(p.trials()[0].test_id(), "utt9");
        assert_eq!(p.trials()[0].class(), TrialClass::Target);
    }

    #[test]
    fn unknown_label_is_rejected_with_line_number() {
        let err = protocol("spk1 utt9 bonafide\n").unwrap_err();
        assert_eq!(
            err,
            ProtocolError::UnknownLabel {
                line: 1,
                label: "bonafide".into()
            }
        );
    }

    #[test]
    fn counts_one_per_class() {
        let p = protocol("a u1 target\na u2 nontarget\na u3 spoof\n").unwrap();
        assert_eq!(
            p.counts(),
            ClassCounts {
                target: 1,
                nontarget: 1,
                spoof: 1
            }
        );
    }

    #[test]
    fn blank_lines_are_ignored_and_trailing_newline_optional() {
        let p = protocol("\na u1 target\n\nb u2 spoof").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.counts().spoof, 1);
    }

    #[test]
    fn duplicate_trial_pairs_are_permitted() {
        // scoring is per line, so repeated pairs are legal
        let p = protocol("a u1 target\na u1 target\na u1 spoof\n").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.counts().target, 2);
        assert_eq!(Protocol::parse(p.to_text().as_bytes()).unwrap(), p);
    }

    #[test]
    fn field_count_errors_carry_line_numbers() {
        let err = protocol("a u1 target\na u2\n").unwrap_err();
        assert_eq!(err, ProtocolError::FieldCount { line: 2, found: 2 });
        // double space yields an empty middle field, i.e. 4 fields
        let err = protocol("a  u1 target\n").unwrap_err();
        assert_eq!(err, ProtocolError::FieldCount { line: 1, found: 4 });
    }

    #[test]
    fn ids_with_embedded_whitespace_are_rejected() {
        let err = protocol("a\tb u1 target\n").unwrap_err();
        assert_eq!(
            err,
            ProtocolError::IdWithWhitespace {
                line: 1,
                field: IdField::Enroll
            }
        );
    }

    #[test]
    fn crlf_input_fails_on_the_label() {
        let err = protocol("a u1 target\r\n").unwrap_err();
        assert_eq!(
            err,
            ProtocolError::UnknownLabel {
                line: 1,
                label: "target\r".into()
            }
        );
    }

    #[test]
    fn empty_protocol_is_an_error() {
        assert_eq!(protocol("").unwrap_err(), ProtocolError::Empty);
        assert_eq!(protocol("\n\n").unwrap_err(), ProtocolError::Empty);
    }

    #[test]
    fn invalid_utf8_is_a_located_error() {
        let err = Protocol::parse(b"a u1 target\n\xff\xfe u2 spoof\n").unwrap_err();
        assert_eq!(err, ProtocolError::InvalidUtf8 { line: 2 });
    }

    fn counts_protocol(target: usize, nontarget: usize, spoof: usize) -> Protocol {
        let mut trials = Vec::new();
        for i in 0..target {
            trials.push(Trial::new("e", format!("t{i}"), TrialClass::Target).unwrap());
        }
        for i in 0..nontarget {
            trials.push(Trial::new("e", format!("n{i}"), TrialClass::NonTarget).unwrap());
        }
        for i in 0..spoof {
            trials.push(Trial::new("e", format!("s{i}"), TrialClass::Spoof).unwrap());
        }
        Protocol::new(trials).unwrap()
    }

    #[test]
    fn subsets_follow_the_metric_classes() {
        let p = counts_protocol(2, 3, 4);
        let sv = p.subset(MetricKind::Sv).unwrap();
        assert_eq!(
            sv.counts(),
            ClassCounts {
                target: 2,
                nontarget: 3,
                spoof: 0
            }
        );
        let spf = p.subset(MetricKind::Spf).unwrap();
        assert_eq!(
            spf.counts(),
            ClassCounts {
                target: 2,
                nontarget: 0,
                spoof: 4
            }
        );
        let sasv = p.subset(MetricKind::Sasv).unwrap();
        assert_eq!(sasv.counts(), p.counts());
        assert_eq!(sasv, p);
    }

    #[test]
    fn subset_preserves_order() {
        let p = protocol("a u1 spoof\na u2 target\na u3 nontarget\na u4 target\n").unwrap();
        let spf = p.subset(MetricKind::Spf).unwrap();
        let ids: Vec<&str> = spf.trials().iter().map(|t| t.test_id()).collect();
        assert_eq!(ids, ["u1", "u2", "u4"]);
    }

    #[test]
    fn empty_subsets_error() {
        let p = counts_protocol(2, 0, 4);
        let err = p.subset(MetricKind::Sv).unwrap_err();
        assert_eq!(
            err,
            ProtocolError::EmptySubset {
                metric: MetricKind::Sv,
                class: "negative"
            }
        );
        let p = counts_protocol(0, 1, 1);
        let err = p.subset(MetricKind::Sasv).unwrap_err();
        assert_eq!(
            err,
            ProtocolError::EmptySubset {
                metric: MetricKind::Sasv,
                class: "target"
            }
        );
    }

    #[test]
    fn sv_and_spf_cover_everything_with_targets_twice() {
        let p = protocol("a u1 spoof\nb u2 target\nc u3 nontarget\nd u4 target\n").unwrap();
        let sv = p.subset(MetricKind::Sv).unwrap();
        let spf = p.subset(MetricKind::Spf).unwrap();
        assert_eq!(sv.len() + spf.len(), p.len() + p.counts().target);
        let mut union: Vec<&Trial> = sv.trials().iter().chain(spf.trials()).collect();
        // every trial of p appears; targets twice, others once
        for t in p.trials() {
            let expected = if t.class() == TrialClass::Target { 2 } else { 1 };
            let found = union.iter().filter(|u| ***u == *t).count();
            assert_eq!(found, expected, "trial {t:?}");
        }
        union.dedup();
    }

    proptest! {
        #[test]
        fn parse_round_trip(trials in proptest::collection::vec(
            ("[a-zA-Z0-9_.-]{1,12}", "[a-zA-Z0-9_.-]{1,12}", 0usize..3), 1..60)
        ) {
            let trials: Vec<Trial> = trials
                .into_iter()
                .map(|(e, t, c)| Trial::new(e, t, TrialClass::ALL[c]).unwrap())
                .collect();
            let p = Protocol::new(trials).unwrap();
            let text = p.to_text();
            let back = Protocol::parse(text.as_bytes()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn parse_is_total(input in proptest::collection::vec(any::<u8>(), 0..400)) {
            // must never panic; any input is either a protocol or an error
            let _ = Protocol::parse(&input);
        }

        #[test]
        fn subset_counts_are_consistent(t in 0usize..5, n in 0usize..5, s in 0usize..5) {
            prop_assume!(t + n + s > 0);
            let p = counts_protocol(t, n, s);
            for metric in MetricKind::ALL {
                match p.subset(metric) {
                    Ok(sub) => {
                        prop_assert_eq!(sub.counts().total(), sub.len());
                        prop_assert!(sub.counts().target >= 1);
                        prop_assert!(sub.counts().nontarget + sub.counts().spoof >= 1);
                    }
                    Err(ProtocolError::EmptySubset { .. }) => {}
                    Err(other) => prop_assert!(false, "unexpected error {other:?}"),
                }
            }
        }
    }
}
