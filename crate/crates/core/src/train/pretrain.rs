//! Pretraining: maximize Σ log p(y|x) by minimizing softmax cross-entropy
//! over random fixed-length segments, every layer trainable.

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::nn::network::EmbeddingNetwork;
use crate::nn::softmax_cross_entropy;
use crate::rng::stream;
use crate::train::engine::{backward_segments, forward_segments, frozen_fingerprint, seglen_stream};
use crate::train::optim::{lr_schedule, warmup_factor, Adam, OptimizerConfig, Progress};
use crate::train::report::{EpochStats, TrainReport};
use crate::train::sampler::{sample_minibatch, TrainView};
use crate::train::TrainRunConfig;

pub fn pretrain(
    net: &mut EmbeddingNetwork,
    view: &TrainView<'_>,
    opt: &OptimizerConfig,
    run: &TrainRunConfig,
) -> Result<TrainReport> {
    opt.validate()?;
    run.validate()?;
    if view.n_utterances() == 0 {
        return Err(Error::Precondition("pretraining corpus is empty".into()));
    }
    let logits_dim = net.layers.last().unwrap().out_dim;
    if logits_dim != view.n_speakers {
        return Err(Error::Config(format!(
            "speaker head has {logits_dim} classes for {} speakers",
            view.n_speakers
        )));
    }
    let started = std::time::Instant::now();
    net.set_all_trainable();
    let frozen_fp = frozen_fingerprint(net);
    let mut adam = Adam::new(opt, &net.layers);
    let spe = view.n_utterances().div_ceil(run.batch_size);
    let mut progress = Progress::new(run.epochs * spe);
    let mut batch_rng = stream(run.seed, "batch");
    let mut seglen_rng = seglen_stream(run.seed);
    let mut report = TrainReport::new("pretrain", run.seed);
    let top = net.layers.len() - 1;

    for epoch in 0..run.epochs {
        let mut cls_sum = 0.0;
        let mut composite_sum = 0.0;
        let mut lr_last = 0.0;
        let mut last = LossBreakdown::default();
        for _ in 0..spe {
            let seg_len = match run.segment_range {
                Some((lo, hi)) => seglen_rng.random_range(lo..=hi),
                None => run.segment_len,
            };
            let batch = sample_minibatch(view, run.batch_size, seg_len, &mut batch_rng)?;
            let flat = batch.flat();
            let acts = forward_segments(net, &flat, top)?;
            let mut total_ce = 0.0;
            let mut injected = Vec::with_capacity(flat.len());
            for (seg, a) in flat.iter().zip(acts.iter()) {
                let (loss, grad) = softmax_cross_entropy(&a.top().row(0).to_vec(), seg.speaker)?;
                total_ce += loss;
                let mut inj: Vec<Option<Array2<f64>>> = vec![None; a.outputs.len()];
                inj[top] = Some(grad.insert_axis(Axis(0)));
                injected.push(inj);
            }
            if !total_ce.is_finite() {
                return Err(Error::Numeric("pretraining loss diverged".into()));
            }
            let grads = backward_segments(net, &acts, injected)?;
            let p = progress.tick();
            let lr = warmup_factor(progress.done(), opt.warmup_steps) * lr_schedule(opt, p)?;
            adam.step(&net.layers, &mut net.params, &grads.layers, lr);
            cls_sum += total_ce;
            composite_sum += total_ce;
            lr_last = lr;
            last = LossBreakdown { cls_loss: total_ce, composite: total_ce, ..Default::default() };
        }
        assert_eq!(
            frozen_fingerprint(net),
            frozen_fp,
            "frozen parameters moved during pretraining"
        );
        report.epochs.push(EpochStats {
            epoch,
            phase: 1,
            steps: spe,
            cls_sum,
            adapt_sum: 0.0,
            weighted_adapt_sum: 0.0,
            composite_sum,
            mu_last: 0.0,
            lambda_last: 0.0,
            lr_last,
            last,
        });
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}
