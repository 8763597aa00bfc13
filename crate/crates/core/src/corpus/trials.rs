//! Open-set trial construction: per domain, the first utterances of each
//! evaluation speaker enroll a model and the rest are tests; trials are
//! the full cross of enrollment models and test utterances.

use std::collections::BTreeMap;

use crate::corpus::store::Utterance;
use crate::error::{Error, Result};
use crate::eval::score::{Trial, TrialLabel, TrialList};

#[derive(Debug, Clone, Copy)]
pub struct TrialProtocol {
    pub enroll_per_speaker: usize,
}

impl Default for TrialProtocol {
    fn default() -> Self {
        Self { enroll_per_speaker: 6 }
    }
}

pub fn speaker_label(speaker_id: usize) -> String {
    format!("s{speaker_id:03}")
}

/// Utterance ids enrolling each speaker in one domain, keyed by speaker.
pub fn enrollment_map(
    eval: &[Utterance],
    domain: usize,
    protocol: &TrialProtocol,
) -> Result<BTreeMap<usize, Vec<String>>> {
    let mut per_speaker: BTreeMap<usize, Vec<&Utterance>> = BTreeMap::new();
    for u in eval.iter().filter(|u| u.domain_id == domain) {
        per_speaker.entry(u.speaker_id).or_default().push(u);
    }
    let mut out = BTreeMap::new();
    for (spk, utts) in per_speaker {
        if utts.len() < protocol.enroll_per_speaker + 1 {
            return Err(Error::Data(format!(
                "speaker {spk} has {} utterances in domain {domain}, needs at least {}",
                utts.len(),
                protocol.enroll_per_speaker + 1
            )));
        }
        out.insert(
            spk,
            utts[..protocol.enroll_per_speaker].iter().map(|u| u.utt_id.clone()).collect(),
        );
    }
    Ok(out)
}

/// The per-domain trial lists. Enrollment utterances never appear as
/// tests; every (enrollment speaker, test utterance) pair within the
/// domain becomes one trial, labeled target iff the speakers match.
pub fn make_trials(
    eval: &[Utterance],
    n_domains: usize,
    protocol: &TrialProtocol,
) -> Result<Vec<TrialList>> {
    let mut lists = Vec::with_capacity(n_domains);
    for domain in 0..n_domains {
        let mut per_speaker: BTreeMap<usize, Vec<&Utterance>> = BTreeMap::new();
        for u in eval.iter().filter(|u| u.domain_id == domain) {
            per_speaker.entry(u.speaker_id).or_default().push(u);
        }
        if per_speaker.len() < 2 {
            return Err(Error::Data(format!(
                "domain {domain} has {} evaluation speakers, needs at least 2",
                per_speaker.len()
            )));
        }
        let mut tests: Vec<&Utterance> = Vec::new();
        for (spk, utts) in &per_speaker {
            if utts.len() < protocol.enroll_per_speaker + 1 {
                return Err(Error::Data(format!(
                    "speaker {spk} has {} utterances in domain {domain}, needs at least {}",
                    utts.len(),
                    protocol.enroll_per_speaker + 1
                )));
            }
            tests.extend(&utts[protocol.enroll_per_speaker..]);
        }
        let mut trials = Vec::with_capacity(per_speaker.len() * tests.len());
        for &enroll_spk in per_speaker.keys() {
            for test in &tests {
                trials.push(Trial {
                    enroll_id: speaker_label(enroll_spk),
                    test_id: test.utt_id.clone(),
                    label: if test.speaker_id == enroll_spk {
                        TrialLabel::Target
                    } else {
                        TrialLabel::NonTarget
                    },
                });
            }
        }
        let list = TrialList { trials };
        list.validate()?;
        lists.push(list);
    }
    Ok(lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn utt(s: usize, d: usize, k: usize) -> Utterance {
        Utterance {
            utt_id: format!("s{s:03}_d{d}_u{k:02}"),
            speaker_id: s,
            domain_id: d,
            frames: Array2::zeros((10, 2)),
        }
    }

    fn eval_set(speakers: usize, domains: usize, utts: usize) -> Vec<Utterance> {
        let mut out = Vec::new();
        for s in 0..speakers {
            for d in 0..domains {
                for k in 0..utts {
                    out.push(utt(s, d, k));
                }
            }
        }
        out
    }

    #[test]
    fn counting_example_two_speakers() {
        // 2 speakers × (6 enroll + 2 test) → 2×(2×2) = 8 trials, 4/4
        let eval = eval_set(2, 1, 8);
        let lists = make_trials(&eval, 1, &TrialProtocol::default()).unwrap();
        assert_eq!(lists[0].trials.len(), 8);
        let targets = lists[0].trials.iter().filter(|t| t.label.is_target()).count();
        assert_eq!(targets, 4);
    }

    #[test]
    fn no_duplicate_pairs_and_no_enrollment_leak() {
        let eval = eval_set(3, 2, 9);
        let protocol = TrialProtocol::default();
        let lists = make_trials(&eval, 2, &protocol).unwrap();
        for (d, list) in lists.iter().enumerate() {
            let mut seen = std::collections::BTreeSet::new();
            for t in &list.trials {
                assert!(seen.insert((t.enroll_id.clone(), t.test_id.clone())));
            }
            let enrolled = enrollment_map(&eval, d, &protocol).unwrap();
            let enrolled_ids: std::collections::BTreeSet<_> =
                enrolled.values().flatten().collect();
            for t in &list.trials {
                assert!(!enrolled_ids.contains(&t.test_id));
            }
        }
    }

    #[test]
    fn trial_count_matches_protocol_arithmetic() {
        // 16 speakers × 10 test utts → 16 × 160 = 2560 trials per domain
        let eval = eval_set(16, 1, 16);
        let lists = make_trials(&eval, 1, &TrialProtocol::default()).unwrap();
        assert_eq!(lists[0].trials.len(), 16 * 160);
    }

    #[test]
    fn insufficient_utterances_is_a_protocol_error() {
        let eval = eval_set(2, 1, 6);
        assert!(make_trials(&eval, 1, &TrialProtocol::default()).is_err());
    }
}
