//! Forward oracle and gradient checks for the network building blocks.

use ndarray::{arr1, arr2, Array1, Array2};
use rand::Rng;

use crate::nn::layer::{
    softmax_cross_entropy, Activation, LayerKind, LayerParams, LayerSpec, POOL_VAR_EPS,
};
use crate::nn::network::{build_x_vector, ClassifierHead, EmbeddingNetwork, HeadKind, XVectorConfig};
use crate::nn::seq::FrameSequence;
use crate::rng::stream;

fn random_matrix(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha12Rng) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    m
}

fn small_net(seed: u64) -> EmbeddingNetwork {
    let cfg = XVectorConfig {
        feature_dim: 5,
        tdnn_dim: 6,
        embedding_dim: 4,
        n_speakers: 3,
        contexts: vec![3, 3],
        dilations: vec![1, 2],
    };
    build_x_vector(&cfg, seed).unwrap()
}

fn seq_from(frames: Array2<f64>) -> FrameSequence {
    FrameSequence::new(frames, "u", 0, 0).unwrap()
}

/// Straight-line re-implementation of the forward arithmetic with plain
/// loops, independent of the layer code.
fn oracle_forward(net: &EmbeddingNetwork, frames: &Array2<f64>) -> Vec<Array2<f64>> {
    let mut outs = Vec::new();
    let mut cur = frames.clone();
    for (spec, params) in net.layers.iter().zip(net.params.iter()) {
        let next = match spec.kind {
            LayerKind::TimeDelay => {
                let span = (spec.context_width - 1) * spec.dilation;
                let t_out = cur.nrows() - span;
                let mut y = Array2::zeros((t_out, spec.out_dim));
                for t in 0..t_out {
                    for n in 0..spec.out_dim {
                        let mut acc = params.bias[n];
                        for k in 0..spec.context_width {
                            for j in 0..spec.in_dim {
                                acc += params.weight[(n, k * spec.in_dim + j)]
                                    * cur[(t + k * spec.dilation, j)];
                            }
                        }
                        y[(t, n)] = if spec.activation == Activation::Relu { acc.max(0.0) } else { acc };
                    }
                }
                y
            }
            LayerKind::Dense => {
                let mut y = Array2::zeros((cur.nrows(), spec.out_dim));
                for r in 0..cur.nrows() {
                    for n in 0..spec.out_dim {
                        let mut acc = params.bias[n];
                        for j in 0..spec.in_dim {
                            acc += params.weight[(n, j)] * cur[(r, j)];
                        }
                        y[(r, n)] = if spec.activation == Activation::Relu { acc.max(0.0) } else { acc };
                    }
                }
                y
            }
            LayerKind::StatsPool => {
                let t = cur.nrows() as f64;
                let d = spec.in_dim;
                let mut y = Array2::zeros((1, 2 * d));
                for j in 0..d {
                    let mean: f64 = cur.column(j).iter().sum::<f64>() / t;
                    let var: f64 =
                        cur.column(j).iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / t;
                    y[(0, j)] = mean;
                    y[(0, d + j)] = (var + POOL_VAR_EPS).sqrt();
                }
                y
            }
            LayerKind::Grl => cur.clone(),
        };
        outs.push(next.clone());
        cur = next;
    }
    outs
}

#[test]
fn forward_matches_straight_line_oracle() {
    let cfg = XVectorConfig {
        feature_dim: 20,
        tdnn_dim: 12,
        embedding_dim: 8,
        n_speakers: 4,
        contexts: vec![5, 3, 3],
        dilations: vec![1, 2, 3],
    };
    let net = build_x_vector(&cfg, 17).unwrap();
    let mut rng = stream(18, "oracle");
    let frames = random_matrix(50, 20, &mut rng);
    let acts = net.forward(&seq_from(frames.clone())).unwrap();
    let oracle = oracle_forward(&net, &frames);
    assert_eq!(acts.outputs.len(), oracle.len());
    for (a, o) in acts.outputs.iter().zip(oracle.iter()) {
        assert_eq!(a.dim(), o.dim());
        for (x, y) in a.iter().zip(o.iter()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}

#[test]
fn constant_input_pools_to_mean_and_floored_std() {
    let net = small_net(1);
    let v: Array1<f64> = arr1(&[0.3, -0.2, 0.9, 0.0, 1.4]);
    let mut frames = Array2::zeros((20, 5));
    for mut row in frames.rows_mut() {
        row.assign(&v);
    }
    let acts = net.forward(&seq_from(frames)).unwrap();
    let pool_idx = net.pool_index();
    let pre_pool = &acts.outputs[pool_idx - 1];
    let pool = &acts.outputs[pool_idx];
    let d = pre_pool.ncols();
    // Every frame-level row is identical, so the mean block is that row and
    // the variance is exactly zero before the epsilon floor.
    let h = pre_pool.row(0);
    let floored = POOL_VAR_EPS.sqrt();
    for j in 0..d {
        assert!((pool[(0, j)] - h[j]).abs() <= 1e-14 * h[j].abs().max(1.0));
        assert_eq!(pool[(0, d + j)].to_bits(), floored.to_bits());
    }
}

#[test]
fn identity_dense_layer_is_identity() {
    let spec = LayerSpec::dense("id", 3, 3, Activation::None);
    let params = LayerParams { weight: Array2::eye(3), bias: Array1::zeros(3) };
    let head = ClassifierHead::new(vec![spec], vec![params], HeadKind::Speaker).unwrap();
    let x = arr2(&[[0.5, -1.25, 3.0], [2.0, 0.0, -0.125]]);
    let outs = head.forward(&x).unwrap();
    assert_eq!(outs[0], x);
}

#[test]
fn short_sequence_reports_required_minimum() {
    let net = small_net(2);
    let required = net.receptive_field();
    assert_eq!(required, 1 + 2 + 4);
    let frames = Array2::zeros((required - 1, 5));
    let err = net.forward(&seq_from(frames)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains(&format!("{required}")), "{msg}");
}

#[test]
fn forward_is_deterministic() {
    let net = small_net(3);
    let mut rng = stream(4, "det");
    let frames = random_matrix(15, 5, &mut rng);
    let a = net.forward(&seq_from(frames.clone())).unwrap();
    let b = net.forward(&seq_from(frames)).unwrap();
    for (x, y) in a.outputs.iter().zip(b.outputs.iter()) {
        for (u, v) in x.iter().zip(y.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}

#[test]
fn zero_upstream_yields_zero_gradients() {
    let net = small_net(5);
    let mut rng = stream(6, "zero");
    let frames = random_matrix(12, 5, &mut rng);
    let acts = net.forward(&seq_from(frames)).unwrap();
    let mut injected: Vec<Option<Array2<f64>>> = vec![None; acts.outputs.len()];
    let top = acts.outputs.len() - 1;
    injected[top] = Some(Array2::zeros(acts.outputs[top].dim()));
    let grads = net.backward(&acts, &injected).unwrap();
    for g in &grads.layers {
        assert!(g.weight.iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn hand_computed_dense_gradient() {
    let spec = LayerSpec::dense("d", 2, 2, Activation::None);
    let params = LayerParams {
        weight: arr2(&[[0.5, -1.0], [0.25, 0.75]]),
        bias: arr1(&[0.1, -0.2]),
    };
    let head = ClassifierHead::new(vec![spec], vec![params], HeadKind::Speaker).unwrap();
    let x = arr2(&[[1.0, 2.0]]);
    let outs = head.forward(&x).unwrap();
    let z = &outs[0];
    assert!((z[(0, 0)] + 1.4).abs() < 1e-15);
    assert!((z[(0, 1)] - 1.55).abs() < 1e-15);
    // quadratic loss L = ½‖z‖² so dL/dz = z
    let (grads, dx) = head.backward(&x, &outs, z, 0.0).unwrap();
    let dw = &grads[0].weight;
    assert!((dw[(0, 0)] + 1.4).abs() < 1e-15);
    assert!((dw[(0, 1)] + 2.8).abs() < 1e-15);
    assert!((dw[(1, 0)] - 1.55).abs() < 1e-15);
    assert!((dw[(1, 1)] - 3.1).abs() < 1e-15);
    assert!((grads[0].bias[0] + 1.4).abs() < 1e-15);
    assert!((grads[0].bias[1] - 1.55).abs() < 1e-15);
    assert!((dx[(0, 0)] + 0.3125).abs() < 1e-15);
    assert!((dx[(0, 1)] - 2.5625).abs() < 1e-15);
}

/// Loss used by the full-network gradient check: softmax cross-entropy of
/// the logits against a fixed label.
fn net_loss(net: &EmbeddingNetwork, seq: &FrameSequence, label: usize) -> f64 {
    let acts = net.forward(seq).unwrap();
    let logits: Vec<f64> = acts.top().row(0).to_vec();
    softmax_cross_entropy(&logits, label).unwrap().0
}

pub(crate) fn max_relative_fd_error(net: &EmbeddingNetwork, seq: &FrameSequence, label: usize) -> f64 {
    let acts = net.forward(seq).unwrap();
    let logits: Vec<f64> = acts.top().row(0).to_vec();
    let (_, dlogits) = softmax_cross_entropy(&logits, label).unwrap();
    let mut injected: Vec<Option<Array2<f64>>> = vec![None; acts.outputs.len()];
    let top = acts.outputs.len() - 1;
    injected[top] = Some(dlogits.insert_axis(ndarray::Axis(0)));
    let grads = net.backward(&acts, &injected).unwrap();

    let eps = 1e-5;
    let mut worst = 0.0f64;
    for l in 0..net.layers.len() {
        if !net.layers[l].trainable {
            continue;
        }
        let n_w = net.params[l].weight.len();
        let n_b = net.params[l].bias.len();
        for idx in 0..n_w + n_b {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let analytic = if idx < n_w {
                let (r, c) = (idx / net.params[l].weight.ncols(), idx % net.params[l].weight.ncols());
                plus.params[l].weight[(r, c)] += eps;
                minus.params[l].weight[(r, c)] -= eps;
                grads.layers[l].weight[(r, c)]
            } else {
                let b = idx - n_w;
                plus.params[l].bias[b] += eps;
                minus.params[l].bias[b] -= eps;
                grads.layers[l].bias[b]
            };
            let fd = (net_loss(&plus, seq, label) - net_loss(&minus, seq, label)) / (2.0 * eps);
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(((analytic - fd) / denom).abs());
        }
    }
    worst
}

#[test]
fn full_network_gradients_match_finite_differences() {
    for seed in 0..10u64 {
        let net = small_net(100 + seed);
        let mut rng = stream(200 + seed, "fd");
        let frames = random_matrix(12, 5, &mut rng);
        let seq = seq_from(frames);
        let label = (seed % 3) as usize;
        let worst = max_relative_fd_error(&net, &seq, label);
        assert!(worst <= 1e-5, "seed {seed}: max relative error {worst}");
    }
}

#[test]
fn grl_backward_matches_scaled_finite_difference() {
    // Composite f(grl(x)); the grl backward must equal −λ times the true
    // gradient of f at x.
    let lambda = 1.3;
    let mut rng = stream(31, "grl-fd");
    let dims = [4usize, 4, 3];
    let mut head = ClassifierHead::build(HeadKind::Domain, "dom", &dims, true, 77).unwrap();
    for p in head.params.iter_mut() {
        for v in p.weight.iter_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    let x = random_matrix(4, 4, &mut rng);
    let labels: Vec<usize> = (0..4).map(|i| i % 3).collect();

    let loss_of = |input: &Array2<f64>| -> f64 {
        let outs = head.forward(input).unwrap();
        let logits = outs.last().unwrap();
        let mut total = 0.0;
        for (r, &lab) in labels.iter().enumerate() {
            total += softmax_cross_entropy(&logits.row(r).to_vec(), lab).unwrap().0;
        }
        total
    };

    let outs = head.forward(&x).unwrap();
    let logits = outs.last().unwrap();
    let mut dlogits = Array2::zeros(logits.dim());
    for (r, &lab) in labels.iter().enumerate() {
        let (_, g) = softmax_cross_entropy(&logits.row(r).to_vec(), lab).unwrap();
        dlogits.row_mut(r).assign(&g);
    }
    let (_, dx) = head.backward(&x, &outs, &dlogits, lambda).unwrap();

    let eps = 1e-6;
    for r in 0..4 {
        for c in 0..4 {
            let mut plus = x.clone();
            plus[(r, c)] += eps;
            let mut minus = x.clone();
            minus[(r, c)] -= eps;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            let expected = -lambda * fd;
            assert!(
                (dx[(r, c)] - expected).abs() < 1e-6 * expected.abs().max(1.0),
                "({r},{c}): {} vs {}",
                dx[(r, c)],
                expected
            );
        }
    }
}

#[test]
fn injected_gradients_accumulate_across_layers() {
    // Loss = CE(logits) + α·Σ fc1; gradient against finite differences of
    // the same composite.
    let net = small_net(8);
    let mut rng = stream(9, "inj");
    let frames = random_matrix(12, 5, &mut rng);
    let seq = seq_from(frames);
    let alpha = 0.37;
    let emb = net.embedding_layer_index;

    let composite = |n: &EmbeddingNetwork| -> f64 {
        let acts = n.forward(&seq).unwrap();
        let logits: Vec<f64> = acts.top().row(0).to_vec();
        let ce = softmax_cross_entropy(&logits, 1).unwrap().0;
        ce + alpha * acts.outputs[emb].sum()
    };

    let acts = net.forward(&seq).unwrap();
    let logits: Vec<f64> = acts.top().row(0).to_vec();
    let (_, dlogits) = softmax_cross_entropy(&logits, 1).unwrap();
    let mut injected: Vec<Option<Array2<f64>>> = vec![None; acts.outputs.len()];
    let top = acts.outputs.len() - 1;
    injected[top] = Some(dlogits.insert_axis(ndarray::Axis(0)));
    injected[emb] = Some(Array2::from_elem(acts.outputs[emb].dim(), alpha));
    let grads = net.backward(&acts, &injected).unwrap();

    let eps = 1e-5;
    // spot-check one weight per trainable layer
    for l in 0..net.layers.len() {
        if !net.layers[l].trainable || net.params[l].weight.is_empty() {
            continue;
        }
        let mut plus = net.clone();
        plus.params[l].weight[(0, 0)] += eps;
        let mut minus = net.clone();
        minus.params[l].weight[(0, 0)] -= eps;
        let fd = (composite(&plus) - composite(&minus)) / (2.0 * eps);
        let analytic = grads.layers[l].weight[(0, 0)];
        let denom = analytic.abs().max(fd.abs()).max(1e-6);
        assert!(
            ((analytic - fd) / denom).abs() < 1e-5,
            "layer {l}: {analytic} vs {fd}"
        );
    }
}

#[test]
fn selection_controls_trainable_flags() {
    let mut net = small_net(10);
    net.set_trainable(&["F2".into(), "fc1".into()]).unwrap();
    for l in &net.layers {
        let expect = l.name == "F2" || l.name == "fc1";
        assert_eq!(l.trainable, expect, "layer {}", l.name);
    }
    assert!(net.set_trainable(&["nope".into()]).is_err());
}
