//! Domain adversarial training: a speaker head and a reversal-coupled
//! domain head share the extractor; the extractor learns to serve the
//! first and confuse the second.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::losses::{ce_sum_rows, mu_schedule, LossBreakdown, ScheduleState};
use crate::nn::network::{ClassifierHead, EmbeddingNetwork};
use crate::nn::LayerKind;
use crate::rng::stream;
use crate::train::engine::{
    apply_selection, backward_segments, forward_segments, frozen_fingerprint, stack_top_rows,
};
use crate::train::optim::{lr_schedule, warmup_factor, Adam, OptimizerConfig, Progress};
use crate::train::report::{EpochStats, TrainReport};
use crate::train::sampler::{sample_minibatch, TrainView};
use crate::train::TrainRunConfig;

pub fn train_dat(
    net: &mut EmbeddingNetwork,
    speaker_head: &mut ClassifierHead,
    domain_head: &mut ClassifierHead,
    view: &TrainView<'_>,
    opt: &OptimizerConfig,
    run: &TrainRunConfig,
) -> Result<TrainReport> {
    opt.validate()?;
    run.validate()?;
    if view.n_domains() < 2 {
        return Err(Error::Precondition(format!(
            "adversarial training needs >= 2 domains, got {}",
            view.n_domains()
        )));
    }
    if domain_head.layers[0].kind != LayerKind::Grl {
        return Err(Error::Config("domain head must start with a gradient reversal layer".into()));
    }
    if domain_head.n_classes() != view.n_domains() {
        return Err(Error::Config(format!(
            "domain head has {} classes for {} domains",
            domain_head.n_classes(),
            view.n_domains()
        )));
    }
    if speaker_head.n_classes() != view.n_speakers {
        return Err(Error::Config(format!(
            "speaker head has {} classes for {} speakers",
            speaker_head.n_classes(),
            view.n_speakers
        )));
    }
    apply_selection(net, &run.layer_selection)?;
    let started = std::time::Instant::now();
    let frozen_fp = frozen_fingerprint(net);
    let mut adam_net = Adam::new(opt, &net.layers);
    let mut adam_s = Adam::new(opt, &speaker_head.layers);
    let mut adam_d = Adam::new(opt, &domain_head.layers);
    let head_opt = OptimizerConfig { base_lr: opt.head_base_lr(), ..*opt };
    let spe = view.n_utterances().div_ceil(run.batch_size);
    let mut progress = Progress::new(run.epochs * spe);
    let mut batch_rng = stream(run.seed, "batch");
    let mut report = TrainReport::new("dat", run.seed);
    let emb_idx = net.embedding_layer_index;

    for epoch in 0..run.epochs {
        let mut cls_sum = 0.0;
        let mut adapt_sum = 0.0;
        let mut weighted_sum = 0.0;
        let mut composite_sum = 0.0;
        let mut lambda_last = 0.0;
        let mut lr_last = 0.0;
        let mut last = LossBreakdown::default();
        for _ in 0..spe {
            let batch = sample_minibatch(view, run.batch_size, run.segment_len, &mut batch_rng)?;
            let flat = batch.flat();
            let acts = forward_segments(net, &flat, emb_idx)?;
            let emb = stack_top_rows(&acts);
            let speakers: Vec<usize> = flat.iter().map(|s| s.speaker).collect();
            let domains: Vec<usize> = flat.iter().map(|s| s.domain).collect();

            let p = progress.tick();
            let lambda = match run.lambda_override {
                Some(l) => l,
                None => mu_schedule(&ScheduleState::new(p, run.theta))?,
            };

            let s_outs = speaker_head.forward(&emb)?;
            let (js, dlogits_s) = ce_sum_rows(s_outs.last().unwrap(), &speakers)?;
            let d_outs = domain_head.forward(&emb)?;
            let (jd, dlogits_d) = ce_sum_rows(d_outs.last().unwrap(), &domains)?;
            let composite = js - lambda * jd;
            if !composite.is_finite() {
                return Err(Error::Numeric("adversarial loss diverged".into()));
            }

            // The head itself minimizes J_d; the reversal layer scales the
            // gradient entering the extractor by −λ.
            let (sgrads, de_s) = speaker_head.backward(&emb, &s_outs, &dlogits_s, lambda)?;
            let (dgrads, de_d) = domain_head.backward(&emb, &d_outs, &dlogits_d, lambda)?;
            let de = &de_s + &de_d;

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

            let warm = warmup_factor(progress.done(), opt.warmup_steps);
            let lr = warm * lr_schedule(opt, p)?;
            let lr_head = warm * lr_schedule(&head_opt, p)?;
            adam_net.step(&net.layers, &mut net.params, &grads.layers, lr);
            adam_s.step(&speaker_head.layers, &mut speaker_head.params, &sgrads, lr_head);
            adam_d.step(&domain_head.layers, &mut domain_head.params, &dgrads, lr_head);

            cls_sum += js;
            adapt_sum += jd;
            weighted_sum += lambda * jd;
            composite_sum += composite;
            lambda_last = lambda;
            lr_last = lr;
            last = LossBreakdown {
                speaker_loss: js,
                domain_loss: jd,
                lambda,
                composite,
                ..Default::default()
            };
        }
        assert_eq!(
            frozen_fingerprint(net),
            frozen_fp,
            "frozen parameters moved during adversarial training"
        );
        report.epochs.push(EpochStats {
            epoch,
            phase: 1,
            steps: spe,
            cls_sum,
            adapt_sum,
            weighted_adapt_sum: weighted_sum,
            composite_sum,
            mu_last: 0.0,
            lambda_last,
            lr_last,
            last,
        });
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}
