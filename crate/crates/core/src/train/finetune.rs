//! Fine-tuning: a replacement speaker head trained on the embedding, with
//! a chosen subset of high-level extractor layers unfrozen.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::losses::{ce_sum_rows, LossBreakdown};
use crate::nn::network::{ClassifierHead, EmbeddingNetwork};
use crate::rng::stream;
use crate::train::engine::{
    apply_selection, backward_segments, forward_segments, frozen_fingerprint, stack_top_rows,
};
use crate::train::optim::{lr_schedule, warmup_factor, Adam, OptimizerConfig, Progress};
use crate::train::report::{EpochStats, TrainReport};
use crate::train::sampler::{sample_minibatch, TrainView};
use crate::train::TrainRunConfig;

pub fn fine_tune(
    net: &mut EmbeddingNetwork,
    head: &mut ClassifierHead,
    view: &TrainView<'_>,
    opt: &OptimizerConfig,
    run: &TrainRunConfig,
) -> Result<TrainReport> {
    opt.validate()?;
    run.validate()?;
    if view.n_utterances() == 0 {
        return Err(Error::Precondition("fine-tuning corpus is empty".into()));
    }
    if head.in_dim() != net.embedding_dim() {
        return Err(Error::Config(format!(
            "head expects {} inputs, embedding is {}",
            head.in_dim(),
            net.embedding_dim()
        )));
    }
    if head.n_classes() != view.n_speakers {
        return Err(Error::Config(format!(
            "head has {} classes for {} speakers",
            head.n_classes(),
            view.n_speakers
        )));
    }
    apply_selection(net, &run.layer_selection)?;
    let started = std::time::Instant::now();
    let frozen_fp = frozen_fingerprint(net);
    let mut adam_net = Adam::new(opt, &net.layers);
    let mut adam_head = Adam::new(opt, &head.layers);
    let head_opt = OptimizerConfig { base_lr: opt.head_base_lr(), ..*opt };
    let spe = view.n_utterances().div_ceil(run.batch_size);
    let mut progress = Progress::new(run.epochs * spe);
    let mut batch_rng = stream(run.seed, "batch");
    let mut report = TrainReport::new("finetune", run.seed);
    let emb_idx = net.embedding_layer_index;

    for epoch in 0..run.epochs {
        let mut cls_sum = 0.0;
        let mut lr_last = 0.0;
        let mut last = LossBreakdown::default();
        for _ in 0..spe {
            let batch = sample_minibatch(view, run.batch_size, run.segment_len, &mut batch_rng)?;
            let flat = batch.flat();
            let acts = forward_segments(net, &flat, emb_idx)?;
            let emb = stack_top_rows(&acts);
            let labels: Vec<usize> = flat.iter().map(|s| s.speaker).collect();
            let outs = head.forward(&emb)?;
            let (cls, dlogits) = ce_sum_rows(outs.last().unwrap(), &labels)?;
            if !cls.is_finite() {
                return Err(Error::Numeric("fine-tuning loss diverged".into()));
            }
            let (hgrads, de) = head.backward(&emb, &outs, &dlogits, 0.0)?;
            let injected: Vec<Vec<Option<Array2<f64>>>> = acts
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let mut inj: Vec<Option<Array2<f64>>> = vec![None; a.outputs.len()];
                    inj[emb_idx] = Some(de.row(i).to_owned().insert_axis(ndarray::Axis(0)));
                    inj
                })
                .collect();
            let grads = backward_segments(net, &acts, injected)?;
            let p = progress.tick();
            let warm = warmup_factor(progress.done(), opt.warmup_steps);
            let lr = warm * lr_schedule(opt, p)?;
            let lr_head = warm * lr_schedule(&head_opt, p)?;
            adam_net.step(&net.layers, &mut net.params, &grads.layers, lr);
            adam_head.step(&head.layers, &mut head.params, &hgrads, lr_head);
            cls_sum += cls;
            lr_last = lr;
            last = LossBreakdown { cls_loss: cls, composite: cls, ..Default::default() };
        }
        assert_eq!(
            frozen_fingerprint(net),
            frozen_fp,
            "frozen parameters moved during fine-tuning"
        );
        report.epochs.push(EpochStats {
            epoch,
            phase: 1,
            steps: spe,
            cls_sum,
            adapt_sum: 0.0,
            weighted_adapt_sum: 0.0,
            composite_sum: cls_sum,
            mu_last: 0.0,
            lambda_last: 0.0,
            lr_last,
            last,
        });
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}
