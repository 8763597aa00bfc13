//! The embedding network, classifier heads and reverse-mode gradients.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::layer::{
    layer_backward, layer_forward, Activation, LayerGrad, LayerKind, LayerParams, LayerSpec,
};
use crate::nn::seq::FrameSequence;
use crate::rng::stream;

/// Ordered layer specifications plus their parameter tensors. The layer at
/// `embedding_layer_index` (a dense layer after the pool) emits the
/// speaker embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNetwork {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<LayerParams>,
    pub embedding_layer_index: usize,
}

/// Per-layer output matrices for one forward pass. `outputs[l]` is the
/// post-activation output of layer `l`; frame-level layers keep one row
/// per frame, everything after the pool is a single row.
#[derive(Debug, Clone)]
pub struct LayerActivations {
    pub input: Array2<f64>,
    pub outputs: Vec<Array2<f64>>,
}

impl LayerActivations {
    /// Output of the deepest computed layer.
    pub fn top(&self) -> &Array2<f64> {
        self.outputs.last().unwrap_or(&self.input)
    }
}

/// Per-parameter gradient tensors, shape-matched to the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros(specs: &[LayerSpec]) -> Self {
        Self { layers: specs.iter().map(LayerGrad::zeros).collect() }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.add_assign(b);
        }
    }
}

impl EmbeddingNetwork {
    pub fn new(layers: Vec<LayerSpec>, params: Vec<LayerParams>, embedding_layer_index: usize) -> Result<Self> {
        if layers.len() != params.len() {
            return Err(Error::Config("layer/parameter table length mismatch".into()));
        }
        let net = Self { layers, params, embedding_layer_index };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let mut pools = 0;
        for (i, spec) in self.layers.iter().enumerate() {
            spec.validate()?;
            if spec.kind == LayerKind::StatsPool {
                pools += 1;
            }
            if i > 0 && self.layers[i - 1].out_dim != spec.in_dim {
                return Err(Error::Config(format!(
                    "layer '{}' input dim {} does not match previous output {}",
                    spec.name,
                    spec.in_dim,
                    self.layers[i - 1].out_dim
                )));
            }
            if spec.has_params() {
                let p = &self.params[i];
                if p.weight.dim() != (spec.out_dim, spec.weight_cols()) || p.bias.len() != spec.out_dim {
                    return Err(Error::Config(format!("layer '{}' parameter shape mismatch", spec.name)));
                }
                if p.weight.iter().chain(p.bias.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("layer '{}' has non-finite parameters", spec.name)));
                }
            }
        }
        if pools != 1 {
            return Err(Error::Config(format!("network must contain exactly one stats pool, found {pools}")));
        }
        let pool_idx = self.pool_index();
        let emb = self.embedding_layer_index;
        if emb >= self.layers.len() || emb <= pool_idx || self.layers[emb].kind != LayerKind::Dense {
            return Err(Error::Config("embedding layer must be a dense layer after the pool".into()));
        }
        Ok(())
    }

    pub fn pool_index(&self) -> usize {
        self.layers
            .iter()
            .position(|l| l.kind == LayerKind::StatsPool)
            .expect("validated network has a pool")
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers[self.embedding_layer_index].out_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Minimal number of input frames the time-delay stack accepts.
    pub fn receptive_field(&self) -> usize {
        1 + self.layers.iter().map(|l| l.context_span()).sum::<usize>()
    }

    /// Forward through every layer.
    pub fn forward(&self, seq: &FrameSequence) -> Result<LayerActivations> {
        self.forward_to(seq, self.layers.len() - 1)
    }

    /// Forward through layers `0..=upto`.
    pub fn forward_to(&self, seq: &FrameSequence, upto: usize) -> Result<LayerActivations> {
        let required = self.receptive_field();
        if seq.n_frames() < required {
            return Err(Error::ReceptiveField { got: seq.n_frames(), required });
        }
        let mut outputs = Vec::with_capacity(upto + 1);
        let mut cur = seq.frames.clone();
        for l in 0..=upto {
            let next = layer_forward(&self.layers[l], &self.params[l], &cur)?;
            outputs.push(next.clone());
            cur = next;
        }
        Ok(LayerActivations { input: seq.frames.clone(), outputs })
    }

    /// Embedding for one sequence (output of the embedding layer).
    pub fn embed(&self, seq: &FrameSequence) -> Result<Array2<f64>> {
        let acts = self.forward_to(seq, self.embedding_layer_index)?;
        Ok(acts.top().clone())
    }

    /// Exact reverse-mode gradients of a scalar loss w.r.t. every trainable
    /// parameter.
    ///
    /// `injected[l]`, when present, is the loss gradient w.r.t. the output
    /// of layer `l`; contributions injected at several layers accumulate
    /// along the walk. Frozen layers receive zero gradients.
    pub fn backward(&self, acts: &LayerActivations, injected: &[Option<Array2<f64>>]) -> Result<Gradients> {
        let computed = acts.outputs.len();
        if injected.len() != computed {
            return Err(Error::Shape(format!(
                "injected gradient table has {} entries for {} computed layers",
                injected.len(),
                computed
            )));
        }
        let mut grads = Gradients::zeros(&self.layers);
        let top = match (0..computed).rev().find(|&l| injected[l].is_some()) {
            Some(t) => t,
            None => return Ok(grads),
        };
        // No gradient is needed below the lowest trainable layer.
        let stop = self.layers[..=top]
            .iter()
            .position(|l| l.trainable)
            .unwrap_or(top);
        let mut flowing: Option<Array2<f64>> = None;
        for l in (stop..=top).rev() {
            let mut upstream = match flowing.take() {
                Some(f) => f,
                None => Array2::zeros(acts.outputs[l].dim()),
            };
            if let Some(inj) = &injected[l] {
                if inj.dim() != upstream.dim() {
                    return Err(Error::Shape(format!(
                        "injected gradient at layer '{}' has shape {:?}, expected {:?}",
                        self.layers[l].name,
                        inj.dim(),
                        upstream.dim()
                    )));
                }
                upstream += inj;
            }
            let input = if l == 0 { &acts.input } else { &acts.outputs[l - 1] };
            let want_params = self.layers[l].trainable;
            let want_input = l > stop;
            let (pg, dx) = layer_backward(
                &self.layers[l],
                &self.params[l],
                input,
                &acts.outputs[l],
                &upstream,
                want_params,
                want_input,
                0.0,
            )?;
            if let Some(pg) = pg {
                grads.layers[l] = pg;
            }
            flowing = dx;
        }
        Ok(grads)
    }

    /// Marks exactly the named layers trainable; everything else frozen.
    pub fn set_trainable(&mut self, names: &[String]) -> Result<()> {
        for n in names {
            if self.layer_index(n).is_none() {
                return Err(Error::Config(format!("unknown layer '{n}' in selection")));
            }
        }
        for l in self.layers.iter_mut() {
            l.trainable = l.has_params() && names.iter().any(|n| *n == l.name);
        }
        Ok(())
    }

    pub fn set_all_trainable(&mut self) {
        for l in self.layers.iter_mut() {
            l.trainable = l.has_params();
        }
    }

    /// Replaces the parameters of a named dense layer with a freshly
    /// initialized matrix for `out_dim` classes.
    pub fn replace_dense(&mut self, name: &str, out_dim: usize, seed: u64) -> Result<()> {
        let idx = self
            .layer_index(name)
            .ok_or_else(|| Error::Config(format!("unknown layer '{name}'")))?;
        if self.layers[idx].kind != LayerKind::Dense {
            return Err(Error::Config(format!("layer '{name}' is not dense")));
        }
        self.layers[idx].out_dim = out_dim;
        let mut rng = stream(seed, &format!("init/replace/{name}"));
        self.params[idx] = LayerParams::init_glorot(&self.layers[idx], &mut rng);
        if idx + 1 < self.layers.len() {
            return Err(Error::Config("can only replace the final layer".into()));
        }
        Ok(())
    }
}

/// What a classifier head classifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Speaker,
    Domain,
    /// One subnet per domain in the discrepancy/moment-matching setups.
    DomainSpecific,
}

/// A stack of dense layers (optionally led by a gradient reversal layer)
/// ending in a logits layer. Heads consume embedding rows, one row per
/// segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<LayerParams>,
    pub head_kind: HeadKind,
}

impl ClassifierHead {
    pub fn new(layers: Vec<LayerSpec>, params: Vec<LayerParams>, head_kind: HeadKind) -> Result<Self> {
        for (i, spec) in layers.iter().enumerate() {
            spec.validate()?;
            match spec.kind {
                LayerKind::Dense => {}
                LayerKind::Grl if i == 0 => {}
                _ => {
                    return Err(Error::Config(format!(
                        "head layer '{}' must be dense (grl allowed first)",
                        spec.name
                    )))
                }
            }
        }
        if layers.is_empty() || layers.last().unwrap().kind != LayerKind::Dense {
            return Err(Error::Config("head must end in a dense logits layer".into()));
        }
        Ok(Self { layers, params, head_kind })
    }

    /// Fresh head of dense layers `dims[0] → dims[1] → …`, ReLU on hidden
    /// layers, linear logits, optional leading gradient reversal layer.
    pub fn build(
        head_kind: HeadKind,
        name_prefix: &str,
        dims: &[usize],
        with_grl: bool,
        seed: u64,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("head needs at least input and output dims".into()));
        }
        let mut layers = Vec::new();
        let mut params = Vec::new();
        if with_grl {
            let spec = LayerSpec::grl(format!("{name_prefix}_grl"), dims[0]);
            params.push(LayerParams::empty());
            layers.push(spec);
        }
        let mut rng = stream(seed, &format!("init/head/{name_prefix}"));
        for w in 0..dims.len() - 1 {
            let last = w == dims.len() - 2;
            let act = if last { Activation::None } else { Activation::Relu };
            let spec = LayerSpec::dense(format!("{name_prefix}_{w}"), dims[w], dims[w + 1], act);
            params.push(LayerParams::init_glorot(&spec, &mut rng));
            layers.push(spec);
        }
        Self::new(layers, params, head_kind)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Forward over a batch of embedding rows; returns per-layer outputs.
    pub fn forward(&self, rows: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut cur = rows.clone();
        for (spec, params) in self.layers.iter().zip(self.params.iter()) {
            let next = layer_forward(spec, params, &cur)?;
            outs.push(next.clone());
            cur = next;
        }
        Ok(outs)
    }

    /// Backward from a logits gradient; returns per-layer parameter
    /// gradients and the gradient w.r.t. the head input.
    pub fn backward(
        &self,
        input: &Array2<f64>,
        outs: &[Array2<f64>],
        dlogits: &Array2<f64>,
        grl_lambda: f64,
    ) -> Result<(Vec<LayerGrad>, Array2<f64>)> {
        let mut grads: Vec<LayerGrad> = self.layers.iter().map(LayerGrad::zeros).collect();
        let mut flowing = dlogits.clone();
        for l in (0..self.layers.len()).rev() {
            let inp = if l == 0 { input } else { &outs[l - 1] };
            let (pg, dx) = layer_backward(
                &self.layers[l],
                &self.params[l],
                inp,
                &outs[l],
                &flowing,
                self.layers[l].has_params(),
                true,
                grl_lambda,
            )?;
            if let Some(pg) = pg {
                grads[l] = pg;
            }
            flowing = dx.expect("input gradient requested");
        }
        Ok((grads, flowing))
    }
}

/// Topology of the x-vector style network.
#[derive(Debug, Clone)]
pub struct XVectorConfig {
    pub feature_dim: usize,
    pub tdnn_dim: usize,
    pub embedding_dim: usize,
    pub n_speakers: usize,
    pub contexts: Vec<usize>,
    pub dilations: Vec<usize>,
}

impl XVectorConfig {
    /// Desk-scale default: five time-delay layers of one width, contexts
    /// (5,3,3,1,1) with dilations (1,2,3,1,1), stats pool, two dense
    /// layers and the speaker logits.
    pub fn desk_scale(feature_dim: usize, n_speakers: usize) -> Self {
        Self {
            feature_dim,
            tdnn_dim: 64,
            embedding_dim: 64,
            n_speakers,
            contexts: vec![5, 3, 3, 1, 1],
            dilations: vec![1, 2, 3, 1, 1],
        }
    }
}

/// Builds the full pretraining network F1..Fn → pool → fc1 → fc2 → logits
/// with seeded Glorot initialization.
pub fn build_x_vector(cfg: &XVectorConfig, seed: u64) -> Result<EmbeddingNetwork> {
    if cfg.contexts.len() != cfg.dilations.len() || cfg.contexts.is_empty() {
        return Err(Error::Config("contexts and dilations must be non-empty and equal length".into()));
    }
    let mut rng = stream(seed, "init/net");
    let mut layers = Vec::new();
    let mut params = Vec::new();
    let mut in_dim = cfg.feature_dim;
    for (i, (&k, &dl)) in cfg.contexts.iter().zip(cfg.dilations.iter()).enumerate() {
        let spec = LayerSpec::time_delay(format!("F{}", i + 1), in_dim, cfg.tdnn_dim, k, dl);
        params.push(LayerParams::init_glorot(&spec, &mut rng));
        layers.push(spec);
        in_dim = cfg.tdnn_dim;
    }
    let pool = LayerSpec::stats_pool("pool", in_dim);
    let pool_out = pool.out_dim;
    params.push(LayerParams::empty());
    layers.push(pool);
    let fc1 = LayerSpec::dense("fc1", pool_out, cfg.embedding_dim, Activation::Relu);
    params.push(LayerParams::init_glorot(&fc1, &mut rng));
    layers.push(fc1);
    let fc2 = LayerSpec::dense("fc2", cfg.embedding_dim, cfg.embedding_dim, Activation::Relu);
    params.push(LayerParams::init_glorot(&fc2, &mut rng));
    layers.push(fc2);
    let logits = LayerSpec::dense("logits", cfg.embedding_dim, cfg.n_speakers, Activation::None);
    params.push(LayerParams::init_glorot(&logits, &mut rng));
    layers.push(logits);
    let emb_idx = cfg.contexts.len() + 1;
    EmbeddingNetwork::new(layers, params, emb_idx)
}
