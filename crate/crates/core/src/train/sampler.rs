//! Mini-batch sampling: domain-stratified segments of fixed length.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::corpus::store::Utterance;
use crate::error::{Error, Result};

/// One fixed-length training segment with its labels. `domain` is the
/// bucket index within the sampled view.
#[derive(Debug, Clone)]
pub struct Segment {
    pub frames: Array2<f64>,
    pub speaker: usize,
    pub domain: usize,
    pub utt_id: String,
}

/// A per-domain mini-batch of fixed-length segments.
#[derive(Debug, Clone)]
pub struct DomainBatch {
    pub domains: Vec<Vec<Segment>>,
}

impl DomainBatch {
    pub fn n_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn n_segments(&self) -> usize {
        self.domains.iter().map(Vec::len).sum()
    }

    /// Segments flattened in bucket order; bucket boundaries preserved by
    /// the per-segment domain index.
    pub fn flat(&self) -> Vec<&Segment> {
        self.domains.iter().flatten().collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (d, bucket) in self.domains.iter().enumerate() {
            if bucket.is_empty() {
                return Err(Error::Data(format!("domain bucket {d} is empty")));
            }
            if bucket.iter().any(|s| s.domain != d) {
                return Err(Error::Data(format!("segment label does not match bucket {d}")));
            }
        }
        Ok(())
    }
}

/// The utterances a trainer draws from, grouped by domain bucket.
#[derive(Debug, Clone)]
pub struct TrainView<'a> {
    pub utts_by_domain: Vec<Vec<&'a Utterance>>,
    /// Corpus domain id per bucket.
    pub domain_ids: Vec<usize>,
    /// Size of the speaker label space.
    pub n_speakers: usize,
}

impl<'a> TrainView<'a> {
    /// Groups `utts` by domain, keeping only `domains` (all present
    /// domains when `None`). Bucket order follows ascending domain id.
    pub fn new(utts: &'a [Utterance], domains: Option<&[usize]>, n_speakers: usize) -> Result<Self> {
        let mut ids: Vec<usize> = match domains {
            Some(ds) => ds.to_vec(),
            None => {
                let mut ds: Vec<usize> = utts.iter().map(|u| u.domain_id).collect();
                ds.sort_unstable();
                ds.dedup();
                ds
            }
        };
        ids.sort_unstable();
        ids.dedup();
        let mut utts_by_domain: Vec<Vec<&Utterance>> = vec![Vec::new(); ids.len()];
        for u in utts {
            if let Some(b) = ids.iter().position(|&d| d == u.domain_id) {
                utts_by_domain[b].push(u);
            }
        }
        for (b, bucket) in utts_by_domain.iter().enumerate() {
            if bucket.is_empty() {
                return Err(Error::Data(format!("no utterances for domain {}", ids[b])));
            }
        }
        Ok(Self { utts_by_domain, domain_ids: ids, n_speakers })
    }

    pub fn n_domains(&self) -> usize {
        self.domain_ids.len()
    }

    pub fn n_utterances(&self) -> usize {
        self.utts_by_domain.iter().map(Vec::len).sum()
    }
}

/// Draws a stratified mini-batch: each domain contributes ⌈B/N⌉ or ⌊B/N⌋
/// segments (the remainder assigned to a random subset of domains), each
/// segment a contiguous random window of `segment_len` frames from a
/// uniformly chosen utterance. Deterministic given the RNG state.
pub fn sample_minibatch(
    view: &TrainView<'_>,
    batch_size: usize,
    segment_len: usize,
    rng: &mut ChaCha12Rng,
) -> Result<DomainBatch> {
    let n = view.n_domains();
    if batch_size < 1 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if batch_size < n {
        return Err(Error::Config(format!(
            "batch_size {batch_size} smaller than the {n} domains to stratify over"
        )));
    }
    let base = batch_size / n;
    let rem = batch_size % n;
    let mut counts = vec![base; n];
    if rem > 0 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for &d in order.iter().take(rem) {
            counts[d] += 1;
        }
    }
    let mut domains = Vec::with_capacity(n);
    for (b, bucket) in view.utts_by_domain.iter().enumerate() {
        let mut segs = Vec::with_capacity(counts[b]);
        for _ in 0..counts[b] {
            let utt = bucket[rng.random_range(0..bucket.len())];
            if utt.n_frames() < segment_len {
                return Err(Error::ShortUtterance {
                    utt: utt.utt_id.clone(),
                    got: utt.n_frames(),
                    need: segment_len,
                });
            }
            let start = rng.random_range(0..=utt.n_frames() - segment_len);
            segs.push(Segment {
                frames: utt.segment(start, segment_len),
                speaker: utt.speaker_id,
                domain: b,
                utt_id: utt.utt_id.clone(),
            });
        }
        domains.push(segs);
    }
    let batch = DomainBatch { domains };
    batch.validate()?;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn toy_corpus(n_speakers: usize, n_domains: usize, utts_per: usize, frames: usize) -> Vec<Utterance> {
        let mut utts = Vec::new();
        for s in 0..n_speakers {
            for d in 0..n_domains {
                for k in 0..utts_per {
                    utts.push(Utterance {
                        utt_id: format!("s{s:03}_d{d}_u{k:02}"),
                        speaker_id: s,
                        domain_id: d,
                        frames: Array2::from_elem((frames, 4), (s * 100 + d * 10 + k) as f32),
                    });
                }
            }
        }
        utts
    }

    #[test]
    fn batch_size_equal_to_domains_gives_one_each() {
        let utts = toy_corpus(3, 4, 2, 50);
        let view = TrainView::new(&utts, None, 3).unwrap();
        let mut rng = stream(1, "batch");
        let batch = sample_minibatch(&view, 4, 20, &mut rng).unwrap();
        assert_eq!(batch.n_domains(), 4);
        for bucket in &batch.domains {
            assert_eq!(bucket.len(), 1);
        }
    }

    #[test]
    fn same_seed_gives_identical_batches() {
        let utts = toy_corpus(4, 2, 3, 60);
        let view = TrainView::new(&utts, None, 4).unwrap();
        let a = sample_minibatch(&view, 7, 25, &mut stream(9, "batch")).unwrap();
        let b = sample_minibatch(&view, 7, 25, &mut stream(9, "batch")).unwrap();
        assert_eq!(a.n_segments(), b.n_segments());
        for (x, y) in a.flat().iter().zip(b.flat().iter()) {
            assert_eq!(x.utt_id, y.utt_id);
            assert_eq!(x.frames, y.frames);
        }
    }

    #[test]
    fn many_draws_stay_near_domain_parity() {
        let utts = toy_corpus(4, 2, 3, 40);
        let view = TrainView::new(&utts, None, 4).unwrap();
        let mut rng = stream(3, "batch");
        let mut counts = [0usize; 2];
        let batch_size = 5; // odd → remainder exercises the random assignment
        let draws = 10_000;
        for _ in 0..draws {
            let b = sample_minibatch(&view, batch_size, 10, &mut rng).unwrap();
            for (d, bucket) in b.domains.iter().enumerate() {
                counts[d] += bucket.len();
            }
        }
        let total = (draws * batch_size) as f64;
        for c in counts {
            let share = c as f64 / total;
            assert!((share - 0.5).abs() < 0.01, "share {share}");
        }
    }

    #[test]
    fn short_utterance_is_named_in_error() {
        let utts = toy_corpus(1, 1, 1, 15);
        let view = TrainView::new(&utts, None, 1).unwrap();
        let mut rng = stream(4, "batch");
        let err = sample_minibatch(&view, 1, 16, &mut rng).unwrap_err();
        assert!(err.to_string().contains("s000_d0_u00"), "{err}");
    }

    #[test]
    fn domain_filter_restricts_buckets() {
        let utts = toy_corpus(2, 3, 2, 30);
        let view = TrainView::new(&utts, Some(&[0]), 2).unwrap();
        assert_eq!(view.n_domains(), 1);
        assert_eq!(view.n_utterances(), 4);
    }
}
