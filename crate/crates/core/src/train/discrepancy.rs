//! Discrepancy-minimizing adaptation and the three-step moment-matching
//! schema built on top of it.
//!
//! Both trainers share the same step-1 update: per-domain classification
//! plus the schedule-weighted two-level pairwise MMD. Moment matching then
//! alternates a classifier update that maximizes classifier-pair
//! discrepancy against the noisy reference domain (the last bucket) with
//! a few generator updates that minimize it.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::losses::{
    ce_sum_rows, classifier_discrepancy_with_grad, mu_schedule, pairwise_mmd_loss, KernelConfig,
    LossBreakdown, PairTerm, ScheduleState,
};
use crate::nn::network::{ClassifierHead, EmbeddingNetwork};
use crate::nn::{softmax_backward_rows, softmax_rows};
use crate::rng::stream;
use crate::train::engine::{
    apply_selection, backward_segments, forward_segments, frozen_fingerprint, heads_fingerprint,
    net_fingerprint, stack_top_rows,
};
use crate::train::optim::{lr_schedule, warmup_factor, Adam, OptimizerConfig, Progress};
use crate::train::report::{EpochStats, TrainReport};
use crate::train::sampler::{sample_minibatch, TrainView};
use crate::train::TrainRunConfig;

struct StepResources<'a> {
    opt: &'a OptimizerConfig,
    head_opt: OptimizerConfig,
    batch_rng: ChaCha12Rng,
    f5_rng: ChaCha12Rng,
    adam_net: Adam,
    adam_heads: Vec<Adam>,
    progress: Progress,
    emb_idx: usize,
    f5_idx: usize,
}

fn validate_common(
    net: &EmbeddingNetwork,
    heads: &[ClassifierHead],
    view: &TrainView<'_>,
    opt: &OptimizerConfig,
    run: &TrainRunConfig,
) -> Result<()> {
    opt.validate()?;
    run.validate()?;
    if view.n_domains() < 2 {
        return Err(Error::Precondition(format!(
            "discrepancy adaptation needs >= 2 domains, got {}",
            view.n_domains()
        )));
    }
    if heads.len() != view.n_domains() {
        return Err(Error::Config(format!(
            "{} classifier subnets for {} domains",
            heads.len(),
            view.n_domains()
        )));
    }
    for (i, h) in heads.iter().enumerate() {
        if h.n_classes() != view.n_speakers {
            return Err(Error::Config(format!(
                "subnet {i} has {} classes for {} speakers",
                h.n_classes(),
                view.n_speakers
            )));
        }
        if h.in_dim() != net.embedding_dim() {
            return Err(Error::Config(format!("subnet {i} input dim mismatch")));
        }
    }
    Ok(())
}

fn setup<'a>(
    net: &mut EmbeddingNetwork,
    heads: &[ClassifierHead],
    opt: &'a OptimizerConfig,
    run: &TrainRunConfig,
    total_steps: usize,
) -> Result<StepResources<'a>> {
    apply_selection(net, &run.layer_selection)?;
    Ok(StepResources {
        opt,
        head_opt: OptimizerConfig { base_lr: opt.head_base_lr(), ..*opt },
        batch_rng: stream(run.seed, "batch"),
        f5_rng: stream(run.seed, "mmd/f5"),
        adam_net: Adam::new(opt, &net.layers),
        adam_heads: heads.iter().map(|h| Adam::new(opt, &h.layers)).collect(),
        progress: Progress::new(total_steps),
        emb_idx: net.embedding_layer_index,
        f5_idx: net.pool_index() - 1,
    })
}

/// Frame rows per domain for the frame-level MMD: all F5 rows of the
/// domain's segments, uniformly subsampled down to the configured cap.
/// Returns the sample matrix and the (segment, row) provenance of each
/// selected row.
#[allow(clippy::type_complexity)]
fn collect_f5_rows(
    acts: &[crate::nn::network::LayerActivations],
    bucket_rows: &[(usize, usize)],
    f5_idx: usize,
    cap: usize,
    rng: &mut ChaCha12Rng,
) -> (Vec<Array2<f64>>, Vec<Vec<(usize, usize)>>) {
    let mut mats = Vec::with_capacity(bucket_rows.len());
    let mut provs = Vec::with_capacity(bucket_rows.len());
    for &(start, len) in bucket_rows {
        let mut all: Vec<(usize, usize)> = Vec::new();
        for seg in start..start + len {
            let rows = acts[seg].outputs[f5_idx].nrows();
            for r in 0..rows {
                all.push((seg, r));
            }
        }
        let selected: Vec<(usize, usize)> = if cap > 0 && all.len() > cap {
            let mut idx: Vec<usize> = (0..all.len()).collect();
            for k in 0..cap {
                let j = rng.random_range(k..idx.len());
                idx.swap(k, j);
            }
            let mut chosen: Vec<usize> = idx[..cap].to_vec();
            chosen.sort_unstable();
            chosen.into_iter().map(|i| all[i]).collect()
        } else {
            all
        };
        let d = acts[bucket_rows[0].0].outputs[f5_idx].ncols();
        let mut mat = Array2::zeros((selected.len(), d));
        for (k, &(seg, r)) in selected.iter().enumerate() {
            mat.row_mut(k).assign(&acts[seg].outputs[f5_idx].row(r));
        }
        mats.push(mat);
        provs.push(selected);
    }
    (mats, provs)
}

/// One step of the joint classification + pairwise-MMD objective. Pinning
/// μ to zero disables the discrepancy term entirely, which reduces the
/// step to multi-head classification training.
fn discrepancy_step(
    net: &mut EmbeddingNetwork,
    heads: &mut [ClassifierHead],
    view: &TrainView<'_>,
    run: &TrainRunConfig,
    res: &mut StepResources<'_>,
) -> Result<(LossBreakdown, f64)> {
    let batch = sample_minibatch(view, run.batch_size, run.segment_len, &mut res.batch_rng)?;
    let n = batch.n_domains();
    let flat = batch.flat();
    // bucket b occupies flat rows [start, start+len)
    let mut bucket_rows = Vec::with_capacity(n);
    let mut offset = 0;
    for bucket in &batch.domains {
        bucket_rows.push((offset, bucket.len()));
        offset += bucket.len();
    }

    let acts = forward_segments(net, &flat, res.emb_idx)?;
    let emb = stack_top_rows(&acts);

    let p = res.progress.tick();
    let mu = match run.mu_override {
        Some(m) => m,
        None => mu_schedule(&ScheduleState::new(p, run.theta))?,
    };
    let skip_mmd = run.mu_override == Some(0.0);

    let mut per_domain_emb = Vec::with_capacity(n);
    let mut per_domain_labels = Vec::with_capacity(n);
    for &(start, len) in &bucket_rows {
        per_domain_emb.push(emb.slice(ndarray::s![start..start + len, ..]).to_owned());
        per_domain_labels.push(flat[start..start + len].iter().map(|s| s.speaker).collect::<Vec<_>>());
    }

    let mut cls_total = 0.0;
    let mut per_domain_cls = Vec::with_capacity(n);
    let mut head_outs = Vec::with_capacity(n);
    let mut dlogits = Vec::with_capacity(n);
    for i in 0..n {
        let outs = heads[i].forward(&per_domain_emb[i])?;
        let (cls, dl) = ce_sum_rows(outs.last().unwrap(), &per_domain_labels[i])?;
        cls_total += cls;
        per_domain_cls.push(cls);
        head_outs.push(outs);
        dlogits.push(dl);
    }

    let (mmd_value, pair_f5, pair_fc1, grad_fc1, f5_scatter) = if skip_mmd {
        (0.0, Vec::new(), Vec::new(), None, None)
    } else {
        let (f5_mats, provs) =
            collect_f5_rows(&acts, &bucket_rows, res.f5_idx, run.f5_subsample, &mut res.f5_rng);
        let pw = pairwise_mmd_loss(&f5_mats, &per_domain_emb, &KernelConfig::median())?;
        // scatter μ-scaled frame gradients back to their segments
        let mut scatter: Vec<Option<Array2<f64>>> = vec![None; flat.len()];
        for (i, prov) in provs.iter().enumerate() {
            for (k, &(seg, row)) in prov.iter().enumerate() {
                let target = scatter[seg]
                    .get_or_insert_with(|| Array2::zeros(acts[seg].outputs[res.f5_idx].dim()));
                let g = pw.grad_f5[i].row(k);
                for (c, v) in g.iter().enumerate() {
                    target[(row, c)] += mu * v;
                }
            }
        }
        (pw.value, pw.pair_f5, pw.pair_fc1, Some(pw.grad_fc1), Some(scatter))
    };

    let composite = cls_total + mu * mmd_value;
    if !composite.is_finite() {
        return Err(Error::Numeric("discrepancy adaptation loss diverged".into()));
    }

    let mut de_rows = Array2::zeros(emb.dim());
    let mut hgrads = Vec::with_capacity(n);
    for i in 0..n {
        let (hg, mut de) = heads[i].backward(&per_domain_emb[i], &head_outs[i], &dlogits[i], 0.0)?;
        if let Some(gfc1) = &grad_fc1 {
            de.scaled_add(mu, &gfc1[i]);
        }
        let (start, len) = bucket_rows[i];
        de_rows.slice_mut(ndarray::s![start..start + len, ..]).assign(&de);
        hgrads.push(hg);
    }

    let injected: Vec<Vec<Option<Array2<f64>>>> = acts
        .iter()
        .enumerate()
        .map(|(s, a)| {
            let mut inj: Vec<Option<Array2<f64>>> = vec![None; a.outputs.len()];
            inj[res.emb_idx] = Some(de_rows.row(s).to_owned().insert_axis(Axis(0)));
            if let Some(scatter) = &f5_scatter {
                if let Some(m) = &scatter[s] {
                    inj[res.f5_idx] = Some(m.clone());
                }
            }
            inj
        })
        .collect();
    let grads = backward_segments(net, &acts, injected)?;

    let warm = warmup_factor(res.progress.done(), res.opt.warmup_steps);
    let lr = warm * lr_schedule(res.opt, p)?;
    let lr_head = warm * lr_schedule(&res.head_opt, p)?;
    res.adam_net.step(&net.layers, &mut net.params, &grads.layers, lr);
    for (i, head) in heads.iter_mut().enumerate() {
        res.adam_heads[i].step(&head.layers, &mut head.params, &hgrads[i], lr_head);
    }

    let breakdown = LossBreakdown {
        per_domain_cls,
        pair_mmd_f5: pair_f5,
        pair_mmd_fc1: pair_fc1,
        cls_loss: cls_total,
        mmd_loss: mmd_value,
        mu,
        composite,
        ..Default::default()
    };
    Ok((breakdown, lr))
}

pub fn train_discrepancy_min(
    net: &mut EmbeddingNetwork,
    heads: &mut [ClassifierHead],
    view: &TrainView<'_>,
    opt: &OptimizerConfig,
    run: &TrainRunConfig,
) -> Result<TrainReport> {
    validate_common(net, heads, view, opt, run)?;
    let started = std::time::Instant::now();
    let spe = view.n_utterances().div_ceil(run.batch_size);
    let mut res = setup(net, heads, opt, run, run.epochs * spe)?;
    let frozen_fp = frozen_fingerprint(net);
    let mut report = TrainReport::new("mmd", run.seed);
    for epoch in 0..run.epochs {
        let mut acc = PhaseAccum::new(epoch, 1, spe);
        for _ in 0..spe {
            let (bd, lr) = discrepancy_step(net, heads, view, run, &mut res)?;
            acc.add_step1(&bd, lr);
        }
        assert_eq!(frozen_fingerprint(net), frozen_fp, "frozen parameters moved");
        report.epochs.push(acc.finish());
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

pub fn train_moment_matching(
    net: &mut EmbeddingNetwork,
    heads: &mut [ClassifierHead],
    view: &TrainView<'_>,
    opt: &OptimizerConfig,
    run: &TrainRunConfig,
) -> Result<TrainReport> {
    validate_common(net, heads, view, opt, run)?;
    let started = std::time::Instant::now();
    let n = view.n_domains();
    let spe = view.n_utterances().div_ceil(run.batch_size);
    // the progressive schedule continues across both phases
    let mut res = setup(net, heads, opt, run, (run.epochs + run.epochs_t2) * spe)?;
    let frozen_fp = frozen_fingerprint(net);
    let mut report = TrainReport::new("m3sda", run.seed);

    for epoch in 0..run.epochs {
        let mut acc = PhaseAccum::new(epoch, 1, spe);
        for _ in 0..spe {
            let (bd, lr) = discrepancy_step(net, heads, view, run, &mut res)?;
            acc.add_step1(&bd, lr);
        }
        assert_eq!(frozen_fingerprint(net), frozen_fp, "frozen parameters moved");
        report.epochs.push(acc.finish());
    }

    let mut gen_updates = 0usize;
    for epoch in 0..run.epochs_t2 {
        let mut acc = PhaseAccum::new(run.epochs + epoch, 2, spe);
        for _ in 0..spe {
            let batch = sample_minibatch(view, run.batch_size, run.segment_len, &mut res.batch_rng)?;
            let flat = batch.flat();
            let mut bucket_rows = Vec::with_capacity(n);
            let mut offset = 0;
            for bucket in &batch.domains {
                bucket_rows.push((offset, bucket.len()));
                offset += bucket.len();
            }
            let labels: Vec<Vec<usize>> = batch
                .domains
                .iter()
                .map(|b| b.iter().map(|s| s.speaker).collect())
                .collect();

            let p = res.progress.tick();
            let warm = warmup_factor(res.progress.done(), res.opt.warmup_steps);
            let lr = warm * lr_schedule(res.opt, p)?;
            let lr_head = warm * lr_schedule(&res.head_opt, p)?;

            let mut acts = forward_segments(net, &flat, res.emb_idx)?;
            let mut emb = stack_top_rows(&acts);

            // Step 2: extractor fixed; classifiers minimize their own
            // classification loss while maximizing pairwise discrepancy
            // against the reference (last) domain.
            let g_fp = net_fingerprint(net);
            let slice_emb = |emb: &Array2<f64>, b: usize| -> Array2<f64> {
                let (start, len) = bucket_rows[b];
                emb.slice(ndarray::s![start..start + len, ..]).to_owned()
            };
            let mut e_dom: Vec<Array2<f64>> = (0..n).map(|b| slice_emb(&emb, b)).collect();
            let mut head_outs = Vec::with_capacity(n);
            let mut probs = Vec::with_capacity(n);
            let mut ce_grads = Vec::with_capacity(n);
            let mut cls_total = 0.0;
            let mut per_domain_cls = Vec::with_capacity(n);
            for i in 0..n {
                let outs = heads[i].forward(&e_dom[i])?;
                let pr = softmax_rows(outs.last().unwrap());
                let (j, dl) = ce_sum_rows(outs.last().unwrap(), &labels[i])?;
                cls_total += j;
                per_domain_cls.push(j);
                head_outs.push(outs);
                probs.push(pr);
                ce_grads.push(dl);
            }
            let mut pair_disc = Vec::with_capacity(n - 1);
            let mut disc_total = 0.0;
            let mut dprobs_own: Vec<Array2<f64>> = Vec::with_capacity(n - 1);
            let mut dprobs_ref_acc = Array2::zeros(probs[n - 1].dim());
            for i in 0..n - 1 {
                let (d, dp_i, dp_n, _) =
                    classifier_discrepancy_with_grad(&probs[i], &probs[n - 1], &KernelConfig::median())?;
                pair_disc.push(PairTerm { i, j: n - 1, value: d });
                disc_total += d;
                dprobs_own.push(dp_i);
                dprobs_ref_acc.scaled_add(1.0 / (n as f64 - 1.0), &dp_n);
            }
            let step2_obj = cls_total - disc_total;
            if !step2_obj.is_finite() {
                return Err(Error::Numeric("classifier-discrepancy objective diverged".into()));
            }
            for i in 0..n {
                let dlogits = if i < n - 1 {
                    &ce_grads[i] - &softmax_backward_rows(&probs[i], &dprobs_own[i])
                } else {
                    &ce_grads[i] - &softmax_backward_rows(&probs[i], &dprobs_ref_acc)
                };
                let (hg, _) = heads[i].backward(&e_dom[i], &head_outs[i], &dlogits, 0.0)?;
                res.adam_heads[i].step(&heads[i].layers, &mut heads[i].params, &hg, lr_head);
            }
            assert_eq!(net_fingerprint(net), g_fp, "extractor moved during the classifier step");

            // Step 3: classifiers fixed; the generator minimizes the
            // classifier-pair discrepancy for a few iterations.
            let c_fp = heads_fingerprint(heads);
            let mut gen_obj = 0.0;
            for inner in 0..run.inner_generator_steps {
                if inner > 0 {
                    acts = forward_segments(net, &flat, res.emb_idx)?;
                    emb = stack_top_rows(&acts);
                    e_dom = (0..n).map(|b| slice_emb(&emb, b)).collect();
                }
                let mut head_outs = Vec::with_capacity(n);
                let mut probs = Vec::with_capacity(n);
                for i in 0..n {
                    let outs = heads[i].forward(&e_dom[i])?;
                    probs.push(softmax_rows(outs.last().unwrap()));
                    head_outs.push(outs);
                }
                let mut loss3 = 0.0;
                let mut dprobs: Vec<Array2<f64>> = probs.iter().map(|p| Array2::zeros(p.dim())).collect();
                for i in 0..n - 1 {
                    let (d, dp_i, dp_n, _) = classifier_discrepancy_with_grad(
                        &probs[i],
                        &probs[n - 1],
                        &KernelConfig::median(),
                    )?;
                    loss3 += d;
                    dprobs[i] += &dp_i;
                    dprobs[n - 1] += &dp_n;
                }
                let mut de_rows = Array2::zeros(emb.dim());
                for i in 0..n {
                    let dlogits = softmax_backward_rows(&probs[i], &dprobs[i]);
                    let (_, de) = heads[i].backward(&e_dom[i], &head_outs[i], &dlogits, 0.0)?;
                    let (start, len) = bucket_rows[i];
                    de_rows.slice_mut(ndarray::s![start..start + len, ..]).assign(&de);
                }
                let injected: Vec<Vec<Option<Array2<f64>>>> = acts
                    .iter()
                    .enumerate()
                    .map(|(s, a)| {
                        let mut inj: Vec<Option<Array2<f64>>> = vec![None; a.outputs.len()];
                        inj[res.emb_idx] = Some(de_rows.row(s).to_owned().insert_axis(Axis(0)));
                        inj
                    })
                    .collect();
                let grads = backward_segments(net, &acts, injected)?;
                res.adam_net.step(&net.layers, &mut net.params, &grads.layers, lr);
                gen_updates += 1;
                gen_obj = loss3;
            }
            assert_eq!(heads_fingerprint(heads), c_fp, "classifiers moved during the generator step");

            let bd = LossBreakdown {
                per_domain_cls,
                pair_discrepancy: pair_disc,
                cls_loss: cls_total,
                mmd_loss: disc_total,
                generator_obj: gen_obj,
                composite: step2_obj,
                ..Default::default()
            };
            acc.add_step2(&bd, lr, gen_obj);
        }
        assert_eq!(frozen_fingerprint(net), frozen_fp, "frozen parameters moved");
        report.epochs.push(acc.finish());
    }
    report.generator_updates = gen_updates;
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Epoch-level accumulator. Phase 1: `adapt_sum` collects the unweighted
/// MMD loss, `weighted_adapt_sum` collects μ·MMD. Phase 2: `adapt_sum`
/// collects the step-2 classifier-pair discrepancy, `weighted_adapt_sum`
/// the final generator objective of each outer iteration.
struct PhaseAccum {
    epoch: usize,
    phase: u8,
    steps: usize,
    cls_sum: f64,
    adapt_sum: f64,
    weighted_sum: f64,
    composite_sum: f64,
    mu_last: f64,
    lr_last: f64,
    last: LossBreakdown,
}

impl PhaseAccum {
    fn new(epoch: usize, phase: u8, steps: usize) -> Self {
        Self {
            epoch,
            phase,
            steps,
            cls_sum: 0.0,
            adapt_sum: 0.0,
            weighted_sum: 0.0,
            composite_sum: 0.0,
            mu_last: 0.0,
            lr_last: 0.0,
            last: LossBreakdown::default(),
        }
    }

    fn add_step1(&mut self, bd: &LossBreakdown, lr: f64) {
        self.cls_sum += bd.cls_loss;
        self.adapt_sum += bd.mmd_loss;
        self.weighted_sum += bd.mu * bd.mmd_loss;
        self.composite_sum += bd.composite;
        self.mu_last = bd.mu;
        self.lr_last = lr;
        self.last = bd.clone();
    }

    fn add_step2(&mut self, bd: &LossBreakdown, lr: f64, gen_obj: f64) {
        self.cls_sum += bd.cls_loss;
        self.adapt_sum += bd.mmd_loss;
        self.weighted_sum += gen_obj;
        self.composite_sum += bd.composite;
        self.mu_last = bd.mu;
        self.lr_last = lr;
        self.last = bd.clone();
    }

    fn finish(self) -> EpochStats {
        EpochStats {
            epoch: self.epoch,
            phase: self.phase,
            steps: self.steps,
            cls_sum: self.cls_sum,
            adapt_sum: self.adapt_sum,
            weighted_adapt_sum: self.weighted_sum,
            composite_sum: self.composite_sum,
            mu_last: self.mu_last,
            lambda_last: 0.0,
            lr_last: self.lr_last,
            last: self.last,
        }
    }
}
