//! Shared trainer machinery: batched forward/backward over segments,
//! frozen-parameter fingerprints and classifier-head construction.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::corpus::store::Utterance;
use crate::error::{Error, Result};
use crate::nn::network::{ClassifierHead, EmbeddingNetwork, Gradients, HeadKind, LayerActivations};
use crate::nn::seq::FrameSequence;
use crate::nn::{LayerParams, LayerSpec};
use crate::rng::stream;
use crate::train::sampler::Segment;

/// Forward every segment through layers `0..=upto`, in parallel, results
/// in segment order.
pub fn forward_segments(
    net: &EmbeddingNetwork,
    segments: &[&Segment],
    upto: usize,
) -> Result<Vec<LayerActivations>> {
    segments
        .par_iter()
        .map(|seg| {
            let fs = FrameSequence {
                frames: seg.frames.clone(),
                utterance_id: seg.utt_id.clone(),
                speaker_id: seg.speaker,
                domain_id: seg.domain,
            };
            net.forward_to(&fs, upto)
        })
        .collect()
}

/// Stacks the top activation row of each segment into a B×d matrix.
pub fn stack_top_rows(acts: &[LayerActivations]) -> Array2<f64> {
    let d = acts[0].top().ncols();
    let mut out = Array2::zeros((acts.len(), d));
    for (i, a) in acts.iter().enumerate() {
        out.row_mut(i).assign(&a.top().row(0));
    }
    out
}

/// Backward every segment with its injected gradients, in parallel, then
/// sums the per-segment gradients in segment order (fixed reduction order
/// keeps training bit-deterministic).
pub fn backward_segments(
    net: &EmbeddingNetwork,
    acts: &[LayerActivations],
    injected: Vec<Vec<Option<Array2<f64>>>>,
) -> Result<Gradients> {
    let per_seg: Vec<Gradients> = acts
        .par_iter()
        .zip(injected.into_par_iter())
        .map(|(a, inj)| net.backward(a, &inj))
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros(&net.layers);
    for g in &per_seg {
        total.add_assign(g);
    }
    Ok(total)
}

/// SHA-256 over the bit patterns of the selected layers' parameters.
pub fn fingerprint_layers<F: Fn(&LayerSpec) -> bool>(
    specs: &[LayerSpec],
    params: &[LayerParams],
    select: F,
) -> [u8; 32] {
    let mut h = Sha256::new();
    for (spec, p) in specs.iter().zip(params.iter()) {
        if !select(spec) {
            continue;
        }
        for v in p.weight.iter().chain(p.bias.iter()) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().into()
}

/// Fingerprint of everything currently frozen in the network.
pub fn frozen_fingerprint(net: &EmbeddingNetwork) -> [u8; 32] {
    fingerprint_layers(&net.layers, &net.params, |s| s.has_params() && !s.trainable)
}

/// Fingerprint of all network parameters.
pub fn net_fingerprint(net: &EmbeddingNetwork) -> [u8; 32] {
    fingerprint_layers(&net.layers, &net.params, |s| s.has_params())
}

/// Fingerprint of all parameters of a set of heads.
pub fn heads_fingerprint(heads: &[ClassifierHead]) -> [u8; 32] {
    let mut h = Sha256::new();
    for head in heads {
        h.update(fingerprint_layers(&head.layers, &head.params, |s| s.has_params()));
    }
    h.finalize().into()
}

/// Embedding of one full utterance (output of the embedding layer).
pub fn embed_utterance(net: &EmbeddingNetwork, utt: &Utterance) -> Result<Array1<f64>> {
    let emb = net.embed(&utt.to_sequence())?;
    Ok(emb.row(0).to_owned())
}

/// The adaptation-era speaker head: the pretrained fc2 weights retained as
/// the hidden layer, plus a fresh logits layer for the new label space.
pub fn make_speaker_head(
    net: &EmbeddingNetwork,
    n_speakers: usize,
    seed: u64,
    name_prefix: &str,
) -> Result<ClassifierHead> {
    let d = net.embedding_dim();
    let mut head = ClassifierHead::build(
        HeadKind::Speaker,
        name_prefix,
        &[d, d, n_speakers],
        false,
        seed,
    )?;
    let fc2 = net
        .layer_index("fc2")
        .ok_or_else(|| Error::Config("network has no fc2 layer to retain".into()))?;
    if net.layers[fc2].out_dim == d && net.layers[fc2].in_dim == d {
        head.params[0] = net.params[fc2].clone();
    }
    Ok(head)
}

/// The adversarial domain head: gradient reversal, one hidden layer of
/// half the embedding width, domain logits.
pub fn make_domain_head(net: &EmbeddingNetwork, n_domains: usize, seed: u64) -> Result<ClassifierHead> {
    let d = net.embedding_dim();
    let hidden = (d / 2).max(2);
    ClassifierHead::build(HeadKind::Domain, "domain", &[d, hidden, n_domains], true, seed)
}

/// One classification subnet per domain: hidden layer plus speaker
/// logits, independently initialized.
pub fn make_domain_subnets(
    net: &EmbeddingNetwork,
    n_speakers: usize,
    n_domains: usize,
    seed: u64,
) -> Result<Vec<ClassifierHead>> {
    let d = net.embedding_dim();
    (0..n_domains)
        .map(|i| {
            ClassifierHead::build(
                HeadKind::DomainSpecific,
                &format!("subnet{i}"),
                &[d, d, n_speakers],
                false,
                crate::rng::derive_seed(seed, &format!("subnet/{i}")),
            )
        })
        .collect()
}

/// Layers an adaptation run may unfreeze: the last two time-delay layers
/// and the embedding layer.
pub fn adaptable_layers(net: &EmbeddingNetwork) -> Vec<String> {
    let mut tds: Vec<&LayerSpec> = net
        .layers
        .iter()
        .filter(|l| l.kind == crate::nn::LayerKind::TimeDelay)
        .collect();
    let keep = tds.split_off(tds.len().saturating_sub(2));
    let mut names: Vec<String> = keep.iter().map(|l| l.name.clone()).collect();
    names.push(net.layers[net.embedding_layer_index].name.clone());
    names
}

/// Validates a layer selection against the adaptable set and applies it.
pub fn apply_selection(net: &mut EmbeddingNetwork, selection: &[String]) -> Result<()> {
    let allowed = adaptable_layers(net);
    for name in selection {
        if !allowed.contains(name) {
            return Err(Error::Config(format!(
                "layer '{name}' is not adaptable (allowed: {})",
                allowed.join(", ")
            )));
        }
    }
    net.set_trainable(selection)
}

/// Segment-length stream for pretraining's variable-length batches.
pub fn seglen_stream(seed: u64) -> rand_chacha::ChaCha12Rng {
    stream(seed, "pretrain/seglen")
}
