//! Corpus generation: latent speaker identities, per-utterance clean
//! frames and the per-domain channel/distance/noise transforms.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::corpus::spec::{CorpusSpec, DomainParams};
use crate::corpus::store::{Corpus, Utterance};
use crate::error::Result;
use crate::nn::seq::FrameSequence;
use crate::rng::{stream, stream_indexed};

/// Applies one domain's transform: first-order temporal smoothing
/// (y_t = (1−c)·x_t + c·y_{t−1}; y₋₁ = 0), then the affine channel
/// A·x + b, then additive white Gaussian noise scaled so that
/// 10·log10(signal var / noise var) matches the requested per-utterance
/// SNR. An infinite SNR adds nothing and leaves the affine output
/// bit-exact.
pub fn domain_transform(
    clean: &FrameSequence,
    params: &DomainParams,
    rng: &mut ChaCha12Rng,
) -> Result<FrameSequence> {
    let frames = domain_transform_frames(&clean.frames, params, rng);
    Ok(FrameSequence { frames, ..clean.clone() })
}

pub(crate) fn domain_transform_frames(
    clean: &Array2<f64>,
    params: &DomainParams,
    rng: &mut ChaCha12Rng,
) -> Array2<f64> {
    let t = clean.nrows();
    let d = clean.ncols();
    let c = params.smoothing;
    let mut smoothed = Array2::zeros((t, d));
    if c == 0.0 {
        smoothed.assign(clean);
    } else {
        let mut prev = vec![0.0f64; d];
        for i in 0..t {
            for j in 0..d {
                let y = (1.0 - c) * clean[(i, j)] + c * prev[j];
                smoothed[(i, j)] = y;
                prev[j] = y;
            }
        }
    }
    let mut out = smoothed.dot(&params.channel.t());
    for mut row in out.rows_mut() {
        row += &params.bias;
    }
    if params.snr_db.is_finite() {
        let n = (t * d) as f64;
        let mean = out.iter().sum::<f64>() / n;
        let var = out.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let noise_var = var / 10f64.powf(params.snr_db / 10.0);
        let sigma = noise_var.sqrt();
        for v in out.iter_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

/// Generates the speaker-disjoint train/eval corpus. Fully determined by
/// the spec's seed: speaker identities, utterance lengths, clean frames
/// and domain noise all come from derived streams, with one stream per
/// utterance.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let d = spec.feature_dim;
    let n_domains = spec.n_domains();

    let mut dom_rng = stream(spec.seed, "corpus/domains");
    let domains: Vec<DomainParams> =
        spec.domains.iter().map(|ds| ds.realize(d, &mut dom_rng)).collect::<Result<_>>()?;

    let mut spk_rng = stream(spec.seed, "corpus/speakers");
    let identities: Vec<Array1<f64>> = (0..spec.n_speakers)
        .map(|_| {
            Array1::from_iter(
                (0..d).map(|_| spec.speaker_scale * spk_rng.sample::<f64, _>(StandardNormal)),
            )
        })
        .collect();

    let mut train = Vec::new();
    let mut eval = Vec::new();
    let n_train_speakers = spec.n_train_speakers();
    for s in 0..spec.n_speakers {
        for (dom_idx, dom) in domains.iter().enumerate() {
            for k in 0..spec.utts_per_speaker_per_domain {
                let utt_index =
                    ((s * n_domains + dom_idx) * spec.utts_per_speaker_per_domain + k) as u64;
                let mut rng = stream_indexed(spec.seed, "corpus/utt", utt_index);
                let t = rng.random_range(spec.frames_range.0..=spec.frames_range.1);
                let mut clean = Array2::zeros((t, d));
                let offset: Vec<f64> = (0..d)
                    .map(|_| spec.utt_scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                for i in 0..t {
                    for j in 0..d {
                        clean[(i, j)] = identities[s][j]
                            + offset[j]
                            + spec.frame_noise * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                let frames = domain_transform_frames(&clean, dom, &mut rng);
                let utt = Utterance {
                    utt_id: format!("s{s:03}_d{dom_idx}_u{k:02}"),
                    speaker_id: s,
                    domain_id: dom_idx,
                    frames: frames.mapv(|v| v as f32),
                };
                if s < n_train_speakers {
                    train.push(utt);
                } else {
                    eval.push(utt);
                }
            }
        }
    }
    let corpus = Corpus {
        train,
        eval,
        n_domains,
        n_train_speakers,
        feature_dim: d,
        domain_names: domains.iter().map(|p| p.name.clone()).collect(),
    };
    corpus.check_speaker_disjoint()?;
    Ok(corpus)
}
