//! Layer specifications, parameters and the per-layer forward/backward
//! arithmetic.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Epsilon floor inside the statistics-pooling square root; keeps the std
/// branch differentiable at zero variance.
pub const POOL_VAR_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Dilated 1-D convolution over time with symmetric context and valid
    /// (no-pad) boundaries.
    TimeDelay,
    Dense,
    /// Concatenation of per-dimension mean and standard deviation over all
    /// frames. No parameters.
    StatsPool,
    /// Identity forward; backward multiplies by −λ. No parameters.
    Grl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Context width K (odd). 1 for non-time-delay layers.
    pub context_width: usize,
    /// Dilation. 1 for non-time-delay layers.
    pub dilation: usize,
    pub activation: Activation,
    pub trainable: bool,
}

impl LayerSpec {
    pub fn time_delay(
        name: impl Into<String>,
        in_dim: usize,
        out_dim: usize,
        context_width: usize,
        dilation: usize,
    ) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::TimeDelay,
            in_dim,
            out_dim,
            context_width,
            dilation,
            activation: Activation::Relu,
            trainable: true,
        }
    }

    pub fn dense(name: impl Into<String>, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Dense,
            in_dim,
            out_dim,
            context_width: 1,
            dilation: 1,
            activation,
            trainable: true,
        }
    }

    pub fn stats_pool(name: impl Into<String>, in_dim: usize) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::StatsPool,
            in_dim,
            out_dim: 2 * in_dim,
            context_width: 1,
            dilation: 1,
            activation: Activation::None,
            trainable: false,
        }
    }

    pub fn grl(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Grl,
            in_dim: dim,
            out_dim: dim,
            context_width: 1,
            dilation: 1,
            activation: Activation::None,
            trainable: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LayerKind::TimeDelay => {
                if self.context_width < 1 || self.context_width % 2 == 0 {
                    return Err(Error::Config(format!(
                        "layer '{}': context width must be odd and >= 1, got {}",
                        self.name, self.context_width
                    )));
                }
                if self.dilation < 1 {
                    return Err(Error::Config(format!(
                        "layer '{}': dilation must be >= 1",
                        self.name
                    )));
                }
            }
            LayerKind::StatsPool => {
                if self.out_dim != 2 * self.in_dim {
                    return Err(Error::Config(format!(
                        "layer '{}': stats pool output dim must be 2x input",
                        self.name
                    )));
                }
            }
            LayerKind::Grl => {
                if self.out_dim != self.in_dim {
                    return Err(Error::Config(format!(
                        "layer '{}': grl must preserve dimension",
                        self.name
                    )));
                }
            }
            LayerKind::Dense => {}
        }
        Ok(())
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::TimeDelay | LayerKind::Dense)
    }

    /// Width of the weight matrix (fan-in including unrolled context).
    pub fn weight_cols(&self) -> usize {
        match self.kind {
            LayerKind::TimeDelay => self.context_width * self.in_dim,
            LayerKind::Dense => self.in_dim,
            _ => 0,
        }
    }

    /// Number of input frames consumed beyond one output frame.
    pub fn context_span(&self) -> usize {
        match self.kind {
            LayerKind::TimeDelay => (self.context_width - 1) * self.dilation,
            _ => 0,
        }
    }
}

/// Weight matrix and bias vector for one layer; empty for layers without
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerParams {
    pub fn empty() -> Self {
        Self { weight: Array2::zeros((0, 0)), bias: Array1::zeros(0) }
    }

    pub fn zeros(spec: &LayerSpec) -> Self {
        if !spec.has_params() {
            return Self::empty();
        }
        Self {
            weight: Array2::zeros((spec.out_dim, spec.weight_cols())),
            bias: Array1::zeros(spec.out_dim),
        }
    }

    /// Uniform in ±sqrt(6/(fan_in+fan_out)), seeded.
    pub fn init_glorot(spec: &LayerSpec, rng: &mut ChaCha12Rng) -> Self {
        if !spec.has_params() {
            return Self::empty();
        }
        let fan_in = spec.weight_cols() as f64;
        let fan_out = spec.out_dim as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let mut weight = Array2::zeros((spec.out_dim, spec.weight_cols()));
        for v in weight.iter_mut() {
            *v = rng.random_range(-limit..limit);
        }
        Self { weight, bias: Array1::zeros(spec.out_dim) }
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Unrolls the dilated symmetric context of a time-delay layer into a
/// T'×(K·D) matrix so the layer reduces to one matrix product.
fn unroll_context(input: &Array2<f64>, spec: &LayerSpec) -> Array2<f64> {
    let t_out = input.nrows() - spec.context_span();
    let d = spec.in_dim;
    let k = spec.context_width;
    let mut ctx = Array2::zeros((t_out, k * d));
    for t in 0..t_out {
        for tap in 0..k {
            let src = input.row(t + tap * spec.dilation);
            for j in 0..d {
                ctx[(t, tap * d + j)] = src[j];
            }
        }
    }
    ctx
}

fn apply_activation(mut z: Array2<f64>, act: Activation) -> Array2<f64> {
    if act == Activation::Relu {
        z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
    }
    z
}

/// Forward pass of one layer. `grl` layers are the identity here.
pub fn layer_forward(spec: &LayerSpec, params: &LayerParams, input: &Array2<f64>) -> Result<Array2<f64>> {
    if input.ncols() != spec.in_dim {
        return Err(Error::Shape(format!(
            "layer '{}' expects {} input columns, got {}",
            spec.name,
            spec.in_dim,
            input.ncols()
        )));
    }
    match spec.kind {
        LayerKind::TimeDelay => {
            let span = spec.context_span();
            if input.nrows() <= span {
                return Err(Error::ReceptiveField { got: input.nrows(), required: span + 1 });
            }
            let ctx = unroll_context(input, spec);
            let mut z = ctx.dot(&params.weight.t());
            for mut row in z.rows_mut() {
                row += &params.bias;
            }
            Ok(apply_activation(z, spec.activation))
        }
        LayerKind::Dense => {
            let mut z = input.dot(&params.weight.t());
            for mut row in z.rows_mut() {
                row += &params.bias;
            }
            Ok(apply_activation(z, spec.activation))
        }
        LayerKind::StatsPool => Ok(stats_pool_forward(input)),
        LayerKind::Grl => Ok(input.clone()),
    }
}

/// Mean and population standard deviation per dimension, concatenated as
/// one row [mean ‖ std].
///
/// Sums run in sorted-value order so the result is exactly invariant to
/// any permutation of the input rows.
pub fn stats_pool_forward(input: &Array2<f64>) -> Array2<f64> {
    let t = input.nrows();
    let d = input.ncols();
    let mut out = Array2::zeros((1, 2 * d));
    let mut col: Vec<f64> = Vec::with_capacity(t);
    for j in 0..d {
        col.clear();
        col.extend(input.column(j).iter().copied());
        col.sort_by(f64::total_cmp);
        let mean = col.iter().sum::<f64>() / t as f64;
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / t as f64;
        out[(0, j)] = mean;
        out[(0, d + j)] = (var + POOL_VAR_EPS).sqrt();
    }
    out
}

/// Gradient tensors for one layer, shape-matched to its parameters.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    pub fn zeros(spec: &LayerSpec) -> Self {
        let p = LayerParams::zeros(spec);
        Self { weight: p.weight, bias: p.bias }
    }

    pub fn add_assign(&mut self, other: &LayerGrad) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }
}

/// Backward pass of one layer.
///
/// `upstream` is the gradient w.r.t. the post-activation output. Returns
/// the parameter gradient (when requested) and the gradient w.r.t. the
/// layer input (when requested). `grl_lambda` only applies to grl layers.
pub fn layer_backward(
    spec: &LayerSpec,
    params: &LayerParams,
    input: &Array2<f64>,
    output: &Array2<f64>,
    upstream: &Array2<f64>,
    want_param_grad: bool,
    want_input_grad: bool,
    grl_lambda: f64,
) -> Result<(Option<LayerGrad>, Option<Array2<f64>>)> {
    if upstream.dim() != output.dim() {
        return Err(Error::Shape(format!(
            "layer '{}': upstream gradient {:?} does not match output {:?}",
            spec.name,
            upstream.dim(),
            output.dim()
        )));
    }
    match spec.kind {
        LayerKind::Grl => Ok((None, want_input_grad.then(|| grad_reversal_backward(upstream, grl_lambda)))),
        LayerKind::StatsPool => {
            let dx = want_input_grad.then(|| stats_pool_backward(input, output, upstream));
            Ok((None, dx))
        }
        LayerKind::Dense | LayerKind::TimeDelay => {
            // ReLU mask from the stored post-activation output: y > 0 ⟺ z > 0.
            let dz = match spec.activation {
                Activation::Relu => {
                    let mut dz = upstream.clone();
                    dz.zip_mut_with(output, |g, &y| {
                        if y <= 0.0 {
                            *g = 0.0;
                        }
                    });
                    dz
                }
                Activation::None => upstream.clone(),
            };
            if spec.kind == LayerKind::Dense {
                let grad = want_param_grad.then(|| LayerGrad {
                    weight: dz.t().dot(input),
                    bias: dz.sum_axis(ndarray::Axis(0)),
                });
                let dx = want_input_grad.then(|| dz.dot(&params.weight));
                Ok((grad, dx))
            } else {
                let ctx = unroll_context(input, spec);
                let grad = want_param_grad.then(|| LayerGrad {
                    weight: dz.t().dot(&ctx),
                    bias: dz.sum_axis(ndarray::Axis(0)),
                });
                let dx = if want_input_grad {
                    let dctx = dz.dot(&params.weight);
                    let mut dx = Array2::zeros(input.dim());
                    let d = spec.in_dim;
                    for t in 0..dctx.nrows() {
                        for tap in 0..spec.context_width {
                            let dst = t + tap * spec.dilation;
                            for j in 0..d {
                                dx[(dst, j)] += dctx[(t, tap * d + j)];
                            }
                        }
                    }
                    Some(dx)
                } else {
                    None
                };
                Ok((grad, dx))
            }
        }
    }
}

fn stats_pool_backward(input: &Array2<f64>, output: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
    let t = input.nrows();
    let d = input.ncols();
    let tf = t as f64;
    let mut dx = Array2::zeros((t, d));
    for j in 0..d {
        let mean = output[(0, j)];
        let std = output[(0, d + j)];
        let g_mean = upstream[(0, j)];
        let g_std = upstream[(0, d + j)];
        for i in 0..t {
            dx[(i, j)] = g_mean / tf + g_std * (input[(i, j)] - mean) / (tf * std);
        }
    }
    dx
}

/// Backward rule of the gradient reversal layer: −λ × upstream,
/// element-wise. The paired forward pass is the identity.
pub fn grad_reversal_backward(upstream: &Array2<f64>, lambda: f64) -> Array2<f64> {
    upstream.mapv(|g| -lambda * g)
}

/// Numerically stable softmax cross-entropy for one logit row.
///
/// Returns the loss −log softmax(logits)[label] and its gradient
/// softmax − one_hot(label).
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Array1<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange { label, n_classes: logits.len() });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grad = Array1::zeros(logits.len());
    let mut denom = 0.0;
    for (i, &z) in logits.iter().enumerate() {
        let e = (z - max).exp();
        grad[i] = e;
        denom += e;
    }
    grad.mapv_inplace(|e| e / denom);
    let loss = denom.ln() - (logits[label] - max);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Softmax over each row.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        row.mapv_inplace(|e| e / denom);
    }
    out
}

/// Backward through a row-wise softmax: given dL/dp returns dL/dz with
/// dz = p ⊙ (dp − (p·dp)).
pub fn softmax_backward_rows(probs: &Array2<f64>, dprobs: &Array2<f64>) -> Array2<f64> {
    let mut dz = Array2::zeros(probs.dim());
    for r in 0..probs.nrows() {
        let p = probs.row(r);
        let dp = dprobs.row(r);
        let dot: f64 = p.iter().zip(dp.iter()).map(|(&a, &b)| a * b).sum();
        for c in 0..probs.ncols() {
            dz[(r, c)] = p[c] * (dp[c] - dot);
        }
    }
    dz
}
