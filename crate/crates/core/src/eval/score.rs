//! Trial lists and score records, with their text file formats.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialLabel {
    Target,
    NonTarget,
}

impl TrialLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialLabel::Target => "target",
            TrialLabel::NonTarget => "nontarget",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(TrialLabel::Target),
            "nontarget" => Ok(TrialLabel::NonTarget),
            other => Err(Error::Data(format!("unknown trial label '{other}'"))),
        }
    }

    pub fn is_target(&self) -> bool {
        matches!(self, TrialLabel::Target)
    }
}

/// One (enrollment speaker, test utterance) comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub enroll_id: String,
    pub test_id: String,
    pub label: TrialLabel,
}

/// The trials of one evaluation condition.
#[derive(Debug, Clone, Default)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.trials {
            if !seen.insert((t.enroll_id.as_str(), t.test_id.as_str())) {
                return Err(Error::Data(format!(
                    "duplicate trial ({}, {})",
                    t.enroll_id, t.test_id
                )));
            }
        }
        let targets = self.trials.iter().filter(|t| t.label.is_target()).count();
        if targets == 0 || targets == self.trials.len() {
            return Err(Error::Data("trial list needs at least one target and one non-target".into()));
        }
        Ok(())
    }

    /// `enroll_id<TAB>test_id<TAB>target|nontarget` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            writeln!(out, "{}\t{}\t{}", t.enroll_id, t.test_id, t.label.as_str()).unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut trials = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut it = line.split('\t');
            let (enroll, test, label) = (it.next(), it.next(), it.next());
            match (enroll, test, label, it.next()) {
                (Some(e), Some(t), Some(l), None) => trials.push(Trial {
                    enroll_id: e.to_string(),
                    test_id: t.to_string(),
                    label: TrialLabel::parse(l)?,
                }),
                _ => {
                    return Err(Error::Data(format!("trial line {} is malformed: '{line}'", ln + 1)))
                }
            }
        }
        Ok(Self { trials })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// One scored trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub enroll_id: String,
    pub test_id: String,
    pub raw_score: f64,
    pub calibrated_llr: Option<f64>,
    pub label: TrialLabel,
}

/// Scored trials; the input to every metric.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    pub records: Vec<ScoreRecord>,
}

impl ScoreSet {
    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            if !r.raw_score.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite score for ({}, {})",
                    r.enroll_id, r.test_id
                )));
            }
        }
        Ok(())
    }

    /// (score, is_target) pairs over the raw scores.
    pub fn labeled_raw(&self) -> Vec<(f64, bool)> {
        self.records.iter().map(|r| (r.raw_score, r.label.is_target())).collect()
    }

    /// (llr, is_target) pairs over the calibrated scores, when present.
    pub fn labeled_calibrated(&self) -> Option<Vec<(f64, bool)>> {
        self.records
            .iter()
            .map(|r| r.calibrated_llr.map(|l| (l, r.label.is_target())))
            .collect()
    }

    /// `enroll_id<TAB>test_id<TAB>score` with 6-decimal fixed formatting.
    pub fn scores_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            writeln!(out, "{}\t{}\t{:.6}", r.enroll_id, r.test_id, r.raw_score).unwrap();
        }
        out
    }

    pub fn write_scores(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.scores_text())?;
        Ok(())
    }

    /// Joins a score file against its trial list.
    pub fn from_files(scores_path: &Path, trials: &TrialList) -> Result<Self> {
        let text = std::fs::read_to_string(scores_path)?;
        let mut scores = std::collections::BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::Format {
                    path: scores_path.display().to_string(),
                    reason: format!("line {} is malformed", ln + 1),
                });
            }
            let score: f64 = parts[2].parse().map_err(|_| Error::Format {
                path: scores_path.display().to_string(),
                reason: format!("bad score on line {}", ln + 1),
            })?;
            scores.insert((parts[0].to_string(), parts[1].to_string()), score);
        }
        let mut records = Vec::with_capacity(trials.trials.len());
        for t in &trials.trials {
            let key = (t.enroll_id.clone(), t.test_id.clone());
            let raw = scores.get(&key).copied().ok_or_else(|| {
                Error::Data(format!("no score for trial ({}, {})", t.enroll_id, t.test_id))
            })?;
            records.push(ScoreRecord {
                enroll_id: t.enroll_id.clone(),
                test_id: t.test_id.clone(),
                raw_score: raw,
                calibrated_llr: None,
                label: t.label,
            });
        }
        Ok(Self { records })
    }
}
