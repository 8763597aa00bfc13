//! Composite adaptation objectives: classification, adversarial, pairwise
//! discrepancy and their weighted totals.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::kernel::KernelConfig;
use crate::losses::mmd::mmd_squared_with_grad;
use crate::losses::schedule::{mu_schedule, ScheduleState};
use crate::nn::network::ClassifierHead;
use crate::nn::softmax_cross_entropy;

/// One unordered domain pair and its discrepancy value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Per-step loss accounting. `composite` always equals the documented
/// weighted sum of its parts: `mu·mmd_loss + cls_loss` for the
/// discrepancy objectives and `speaker_loss − lambda·domain_loss` for the
/// adversarial one.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub per_domain_cls: Vec<f64>,
    pub pair_mmd_f5: Vec<PairTerm>,
    pub pair_mmd_fc1: Vec<PairTerm>,
    /// Classifier-pair posterior discrepancies (moment-matching phase 2).
    pub pair_discrepancy: Vec<PairTerm>,
    pub speaker_loss: f64,
    pub domain_loss: f64,
    pub cls_loss: f64,
    pub mmd_loss: f64,
    /// Final generator objective of the phase-2 inner loop.
    pub generator_obj: f64,
    pub mu: f64,
    pub lambda: f64,
    pub composite: f64,
}

/// Sum of per-row softmax cross-entropies plus the logits gradient.
pub fn ce_sum_rows(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for (r, &label) in labels.iter().enumerate() {
        let (loss, g) = softmax_cross_entropy(&logits.row(r).to_vec(), label)?;
        total += loss;
        grad.row_mut(r).assign(&g);
    }
    Ok((total, grad))
}

/// Σ over domains of Σ over samples of J(C_i(embedding), y), one
/// classifier subnet per domain.
pub fn classification_loss(
    heads: &[ClassifierHead],
    per_domain_emb: &[Array2<f64>],
    per_domain_labels: &[Vec<usize>],
) -> Result<(f64, Vec<f64>)> {
    if per_domain_emb.len() != per_domain_labels.len() {
        return Err(Error::Shape("embedding/label domain counts differ".into()));
    }
    if heads.len() < per_domain_emb.len() {
        return Err(Error::Config(format!(
            "{} classifier heads for {} domains",
            heads.len(),
            per_domain_emb.len()
        )));
    }
    let mut per_domain = Vec::with_capacity(per_domain_emb.len());
    let mut total = 0.0;
    for (i, (emb, labels)) in per_domain_emb.iter().zip(per_domain_labels.iter()).enumerate() {
        let outs = heads[i].forward(emb)?;
        let logits = outs.last().unwrap();
        let (loss, _) = ce_sum_rows(logits, labels)?;
        per_domain.push(loss);
        total += loss;
    }
    Ok((total, per_domain))
}

/// The multi-task adversarial objective J_s − λ·J_d over one batch of
/// embeddings. The returned breakdown carries both terms; gradient wiring
/// through the reversal layer lives with the trainers.
pub fn dat_loss(
    speaker_head: &ClassifierHead,
    domain_head: &ClassifierHead,
    embeddings: &Array2<f64>,
    speaker_labels: &[usize],
    domain_labels: &[usize],
    lambda: f64,
) -> Result<LossBreakdown> {
    let s_outs = speaker_head.forward(embeddings)?;
    let (js, _) = ce_sum_rows(s_outs.last().unwrap(), speaker_labels)?;
    let d_outs = domain_head.forward(embeddings)?;
    let (jd, _) = ce_sum_rows(d_outs.last().unwrap(), domain_labels)?;
    Ok(LossBreakdown {
        speaker_loss: js,
        domain_loss: jd,
        lambda,
        composite: js - lambda * jd,
        ..Default::default()
    })
}

/// Result of the two-level pairwise discrepancy loss.
#[derive(Debug, Clone)]
pub struct PairwiseMmd {
    /// binom(N,2)⁻¹ · Σ over unordered pairs of the F5 and fc1 terms.
    pub value: f64,
    pub pair_f5: Vec<PairTerm>,
    pub pair_fc1: Vec<PairTerm>,
    /// ∂value/∂(F5 rows of domain i), already carrying the binom
    /// normalization.
    pub grad_f5: Vec<Array2<f64>>,
    pub grad_fc1: Vec<Array2<f64>>,
    pub sigma_f5: f64,
    pub sigma_fc1: f64,
}

/// Pairwise MMD² across all unordered domain pairs at the frame level
/// (F5 rows) and segment level (fc1 rows):
///
/// `binom(N,2)⁻¹ Σ_{i<j} [MMD²(F5_i, F5_j) + MMD²(fc1_i, fc1_j)]`
///
/// With the median-heuristic config, each level resolves its own
/// bandwidth over the pooled rows of all domains at that level.
pub fn pairwise_mmd_loss(
    f5: &[Array2<f64>],
    fc1: &[Array2<f64>],
    cfg: &KernelConfig,
) -> Result<PairwiseMmd> {
    let n = f5.len();
    if n < 2 || fc1.len() != n {
        return Err(Error::Precondition(format!(
            "pairwise mmd needs >= 2 domains at both levels, got {} and {}",
            n,
            fc1.len()
        )));
    }
    let resolve = |mats: &[Array2<f64>]| -> Result<KernelConfig> {
        let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
        Ok(KernelConfig::fixed(cfg.resolve(&views)?))
    };
    let cfg_f5 = resolve(f5)?;
    let cfg_fc1 = resolve(fc1)?;

    let coeff = 1.0 / binom2(n) as f64;
    let mut out = PairwiseMmd {
        value: 0.0,
        pair_f5: Vec::new(),
        pair_fc1: Vec::new(),
        grad_f5: f5.iter().map(|m| Array2::zeros(m.dim())).collect(),
        grad_fc1: fc1.iter().map(|m| Array2::zeros(m.dim())).collect(),
        sigma_f5: match cfg_f5.bandwidth {
            crate::losses::kernel::Bandwidth::Fixed(s) => s,
            _ => unreachable!(),
        },
        sigma_fc1: match cfg_fc1.bandwidth {
            crate::losses::kernel::Bandwidth::Fixed(s) => s,
            _ => unreachable!(),
        },
    };
    let mut total = 0.0;
    for i in 0..n - 1 {
        for j in i + 1..n {
            let (v5, ga, gb, _) = mmd_squared_with_grad(&f5[i], &f5[j], &cfg_f5)?;
            out.pair_f5.push(PairTerm { i, j, value: v5 });
            out.grad_f5[i].scaled_add(coeff, &ga);
            out.grad_f5[j].scaled_add(coeff, &gb);
            let (v1, ga, gb, _) = mmd_squared_with_grad(&fc1[i], &fc1[j], &cfg_fc1)?;
            out.pair_fc1.push(PairTerm { i, j, value: v1 });
            out.grad_fc1[i].scaled_add(coeff, &ga);
            out.grad_fc1[j].scaled_add(coeff, &gb);
            total += v5 + v1;
        }
    }
    out.value = coeff * total;
    Ok(out)
}

pub fn binom2(n: usize) -> usize {
    n * (n - 1) / 2
}

/// μ(sched)·mmd + cls.
pub fn total_loss(cls: f64, mmd: f64, sched: &ScheduleState) -> Result<f64> {
    Ok(mu_schedule(sched)? * mmd + cls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::HeadKind;
    use crate::nn::{Activation, LayerParams, LayerSpec};
    use crate::rng::stream;
    use ndarray::{arr2, Array1};
    use rand::Rng;

    fn identity_head(dim: usize) -> ClassifierHead {
        let spec = LayerSpec::dense("logits", dim, dim, Activation::None);
        let params = LayerParams { weight: Array2::eye(dim), bias: Array1::zeros(dim) };
        ClassifierHead::new(vec![spec], vec![params], HeadKind::DomainSpecific).unwrap()
    }

    #[test]
    fn perfect_one_hot_logits_drive_loss_to_zero() {
        let heads = vec![identity_head(3), identity_head(3)];
        // embeddings act as logits through the identity head, magnitude 20
        let emb0 = arr2(&[[20.0, 0.0, 0.0], [0.0, 20.0, 0.0]]);
        let emb1 = arr2(&[[0.0, 0.0, 20.0]]);
        let labels = vec![vec![0, 1], vec![2]];
        let (total, _) = classification_loss(&heads, &[emb0, emb1], &labels).unwrap();
        assert!(total <= 1e-6, "{total}");
    }

    #[test]
    fn uniform_logits_give_b_ln_s() {
        let s = 4;
        let heads = vec![identity_head(s), identity_head(s)];
        let emb0 = Array2::zeros((3, s));
        let emb1 = Array2::zeros((2, s));
        let labels = vec![vec![0, 1, 2], vec![3, 0]];
        let (total, _) = classification_loss(&heads, &[emb0, emb1], &labels).unwrap();
        let expected = 5.0 * (s as f64).ln();
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_per_sample_summation() {
        let mut rng = stream(41, "cls");
        let s = 5;
        let heads = vec![identity_head(s), identity_head(s)];
        let mut emb = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..2 {
            let mut m = Array2::zeros((4, s));
            for v in m.iter_mut() {
                *v = rng.random_range(-2.0..2.0);
            }
            labels.push((0..4).map(|_| rng.random_range(0..s)).collect::<Vec<_>>());
            emb.push(m);
        }
        let (total, per_domain) = classification_loss(&heads, &emb, &labels).unwrap();
        let mut oracle = 0.0;
        for d in 0..2 {
            for r in 0..4 {
                oracle += softmax_cross_entropy(&emb[d].row(r).to_vec(), labels[d][r]).unwrap().0;
            }
        }
        assert!((total - oracle).abs() < 1e-12);
        assert!((per_domain.iter().sum::<f64>() - total).abs() < 1e-12);
    }

    #[test]
    fn missing_head_is_a_configuration_error() {
        let heads = vec![identity_head(3)];
        let emb = vec![Array2::zeros((1, 3)), Array2::zeros((1, 3))];
        let labels = vec![vec![0], vec![1]];
        assert!(matches!(
            classification_loss(&heads, &emb, &labels),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dat_with_zero_lambda_reduces_to_speaker_loss() {
        let s_head = identity_head(3);
        let d_head = identity_head(3);
        let emb = arr2(&[[0.3, -0.7, 1.1], [2.0, 0.1, -0.4]]);
        let bd = dat_loss(&s_head, &d_head, &emb, &[0, 2], &[1, 1], 0.0).unwrap();
        assert_eq!(bd.composite, bd.speaker_loss);
        assert!(bd.domain_loss > 0.0);
    }

    #[test]
    fn dat_hand_case_two_classes() {
        let s_head = identity_head(2);
        let d_head = identity_head(2);
        let emb = arr2(&[[0.5, -0.5]]);
        let lambda = 0.4;
        let bd = dat_loss(&s_head, &d_head, &emb, &[0], &[1], lambda).unwrap();
        let js = softmax_cross_entropy(&[0.5, -0.5], 0).unwrap().0;
        let jd = softmax_cross_entropy(&[0.5, -0.5], 1).unwrap().0;
        assert!((bd.composite - (js - lambda * jd)).abs() < 1e-15);
    }

    #[test]
    fn pairwise_identical_domains_give_zero() {
        let m = arr2(&[[0.1, 0.2], [0.3, -0.1]]);
        let f5 = vec![m.clone(), m.clone(), m.clone()];
        let fc1 = vec![m.clone(), m.clone(), m];
        let out = pairwise_mmd_loss(&f5, &fc1, &KernelConfig::fixed(1.0)).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn two_domains_use_unit_coefficient() {
        let mut rng = stream(42, "pair2");
        let mut mats = Vec::new();
        for _ in 0..4 {
            let mut m = Array2::zeros((3, 2));
            for v in m.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            mats.push(m);
        }
        let cfg = KernelConfig::fixed(0.7);
        let out = pairwise_mmd_loss(&mats[0..2], &mats[2..4], &cfg).unwrap();
        let direct = crate::losses::mmd::mmd_squared(&mats[0], &mats[1], &cfg).unwrap()
            + crate::losses::mmd::mmd_squared(&mats[2], &mats[3], &cfg).unwrap();
        assert!((out.value - direct).abs() < 1e-15);
    }

    #[test]
    fn four_domains_average_six_pairs() {
        let mut rng = stream(43, "pair4");
        let mk = |rng: &mut rand_chacha::ChaCha12Rng| {
            let mut m = Array2::zeros((4, 3));
            for v in m.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            m
        };
        let shared = mk(&mut rng);
        // three domains share one matrix (three zero pairs), the fourth
        // differs (three non-zero pairs)
        let f5 = vec![shared.clone(), shared.clone(), shared.clone(), mk(&mut rng)];
        let fc1 = vec![shared.clone(), shared.clone(), shared.clone(), mk(&mut rng)];
        let cfg = KernelConfig::fixed(0.8);
        let out = pairwise_mmd_loss(&f5, &fc1, &cfg).unwrap();
        let mut oracle = 0.0;
        for i in 0..3 {
            for j in i + 1..4 {
                oracle += crate::losses::mmd::mmd_squared(&f5[i], &f5[j], &cfg).unwrap();
                oracle += crate::losses::mmd::mmd_squared(&fc1[i], &fc1[j], &cfg).unwrap();
            }
        }
        assert!((out.value - oracle / 6.0).abs() < 1e-12);
        assert_eq!(out.pair_f5.len(), 6);
        let zero_pairs = out.pair_f5.iter().filter(|p| p.value == 0.0).count();
        assert_eq!(zero_pairs, 3);
    }

    #[test]
    fn pairwise_is_invariant_to_domain_relabeling() {
        let mut rng = stream(44, "relabel");
        let mk = |rng: &mut rand_chacha::ChaCha12Rng, rows: usize| {
            let mut m = Array2::zeros((rows, 3));
            for v in m.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            m
        };
        let f5: Vec<_> = [3, 4, 5].iter().map(|&r| mk(&mut rng, r)).collect();
        let fc1: Vec<_> = [2, 3, 4].iter().map(|&r| mk(&mut rng, r)).collect();
        let cfg = KernelConfig::fixed(0.9);
        let base = pairwise_mmd_loss(&f5, &fc1, &cfg).unwrap().value;
        let perm = [2usize, 0, 1];
        let f5p: Vec<_> = perm.iter().map(|&i| f5[i].clone()).collect();
        let fc1p: Vec<_> = perm.iter().map(|&i| fc1[i].clone()).collect();
        let permuted = pairwise_mmd_loss(&f5p, &fc1p, &cfg).unwrap().value;
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn pairwise_requires_two_domains() {
        let m = arr2(&[[1.0]]);
        assert!(pairwise_mmd_loss(&[m.clone()], &[m], &KernelConfig::fixed(1.0)).is_err());
    }

    #[test]
    fn total_loss_cases() {
        let s0 = ScheduleState::new(0.0, 10.0);
        assert_eq!(total_loss(1.7, 3.0, &s0).unwrap(), 1.7);
        let s1 = ScheduleState::new(1.0, 10.0);
        let got = total_loss(2.0, 1.0, &s1).unwrap();
        assert!((got - (2.0 + 0.9999092)).abs() < 1e-7);
        for p in [0.0, 0.3, 0.8, 1.0] {
            let s = ScheduleState::new(p, 10.0);
            assert_eq!(total_loss(0.25, 0.0, &s).unwrap(), 0.25);
        }
    }

    #[test]
    fn total_loss_linearity() {
        let mut rng = stream(45, "lin");
        for _ in 0..20 {
            let cls: f64 = rng.random_range(-2.0..2.0);
            let mmd: f64 = rng.random_range(0.0..2.0);
            let s = ScheduleState::new(rng.random_range(0.0..1.0), 10.0);
            let lhs = total_loss(cls, mmd, &s).unwrap() - total_loss(cls, 0.0, &s).unwrap();
            let rhs = mu_schedule(&s).unwrap() * mmd;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
