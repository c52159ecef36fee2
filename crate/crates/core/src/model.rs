//! The genre classifier: a shared per-token CNN encoder, one multi-head
//! self-attention layer over the token sequence, mean pooling and a dense
//! classification head.
//!
//! There is no positional encoding, residual path or normalization layer,
//! so the logits do not depend on token order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{relative_error, Graph, NodeId, Parameter, Tensor};
use crate::tokens::TokenSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub token_count: usize,
    pub token_bins: usize,
    pub token_frames: usize,
    pub conv_channels: Vec<usize>,
    pub embed_dim: usize,
    pub heads: usize,
    pub class_count: usize,
    pub score_temperature: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            token_count: 10,
            token_bins: 217,
            token_frames: 45,
            conv_channels: vec![8, 16, 32],
            embed_dim: 128,
            heads: 4,
            class_count: 10,
            score_temperature: 10.0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    /// Spatial extent after every conv block's 2×2 pool.
    pub fn feature_map(&self) -> (usize, usize) {
        let blocks = self.conv_channels.len() as u32;
        (self.token_bins >> blocks, self.token_frames >> blocks)
    }

    /// Length of the flattened final feature map fed to the token projection.
    pub fn flatten_dim(&self) -> usize {
        let (h, w) = self.feature_map();
        self.conv_channels.last().copied().unwrap_or(1) * h * w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.token_count == 0 || self.embed_dim == 0 || self.class_count == 0 {
            return bad(format!("zero-sized model dimension in {self:?}"));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!("{} heads do not divide embed_dim {}", self.heads, self.embed_dim));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("at least one conv block with nonzero channels is required".into());
        }
        let (h, w) = self.feature_map();
        if h == 0 || w == 0 {
            return bad(format!(
                "{}x{} tokens vanish after {} pooling steps",
                self.token_bins,
                self.token_frames,
                self.conv_channels.len()
            ));
        }
        if !(self.score_temperature > 0.0) {
            return bad("score_temperature must be positive".into());
        }
        Ok(())
    }

    /// Parameter names and shapes in canonical order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim;
        let mut shapes = Vec::new();
        let mut c_in = 1;
        for (i, &c_out) in self.conv_channels.iter().enumerate() {
            shapes.push((format!("conv{i}.kernel"), vec![c_out, c_in, 3, 3]));
            shapes.push((format!("conv{i}.bias"), vec![c_out]));
            c_in = c_out;
        }
        shapes.push(("token.weight".into(), vec![d, self.flatten_dim()]));
        shapes.push(("token.bias".into(), vec![d]));
        for name in ["query", "key", "value", "output"] {
            shapes.push((format!("attention.{name}"), vec![d, d]));
        }
        shapes.push(("classifier.weight".into(), vec![self.class_count, d]));
        shapes.push(("classifier.bias".into(), vec![self.class_count]));
        shapes
    }
}

/// All learnable weights, in the canonical order of
/// [`ModelConfig::parameter_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    params: Vec<Parameter>,
}

const PER_CONV: usize = 2;

/// Extra factor on the classifier head's initial weights. With the plain
/// fan-in bound the initial logits spread over several units and the
/// starting loss sits far above `ln(class_count)`.
pub const HEAD_INIT_GAIN: f64 = 0.01;

impl ModelParams {
    /// Kaiming-uniform fan-in initialization (`U(±√(6/fan_in))`) for every
    /// weight and zero biases, drawn from a ChaCha8 stream seeded by `seed`.
    /// The classifier weights are additionally scaled by [`HEAD_INIT_GAIN`].
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                let data = if name.ends_with(".bias") {
                    vec![0.0; len]
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = libm::sqrt(6.0 / fan_in as f64);
                    let gain = if name == "classifier.weight" { HEAD_INIT_GAIN } else { 1.0 };
                    (0..len).map(|_| gain * rng.random_range(-bound..bound)).collect()
                };
                Ok(Parameter::new(name, Tensor::new(&shape, data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams { config: config.clone(), params })
    }

    /// Assembles parameters loaded from storage, checking names and shapes
    /// against `config`.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let expected = config.parameter_shapes();
        if expected.len() != tensors.len() {
            return Err(Error::shape(
                "model parameters",
                format!("expected {} tensors, got {}", expected.len(), tensors.len()),
            ));
        }
        let params = expected
            .into_iter()
            .zip(tensors)
            .map(|((name, shape), (got_name, t))| {
                if name != got_name || t.shape() != shape.as_slice() {
                    return Err(Error::shape(
                        "model parameters",
                        format!("expected {name} {shape:?}, got {got_name} {:?}", t.shape()),
                    ));
                }
                Ok(Parameter::new(name, t))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams { config: config.clone(), params })
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn blocks(&self) -> usize {
        self.config.conv_channels.len()
    }

    /// Records every parameter as a borrowed variable leaf.
    fn leaves<'a>(&'a self, g: &mut Graph<'a>) -> ParamNodes {
        let all: Vec<NodeId> = self.params.iter().map(|p| g.variable_ref(&p.value)).collect();
        let n = PER_CONV * self.blocks();
        ParamNodes {
            conv: (0..self.blocks()).map(|b| (all[2 * b], all[2 * b + 1])).collect(),
            token_w: all[n],
            token_b: all[n + 1],
            query: all[n + 2],
            key: all[n + 3],
            value: all[n + 4],
            output: all[n + 5],
            class_w: all[n + 6],
            class_b: all[n + 7],
            all,
        }
    }

    fn check_tokens(&self, tokens: &[Tensor]) -> Result<()> {
        let cfg = &self.config;
        if tokens.len() != cfg.token_count {
            return Err(Error::shape("forward", format!("{} tokens, expected {}", tokens.len(), cfg.token_count)));
        }
        for t in tokens {
            check_token_shape(cfg, t)?;
        }
        Ok(())
    }

    /// Records the full forward pass over `tokens` on a fresh graph.
    pub fn build_graph<'a>(&'a self, tokens: &'a [Tensor]) -> Result<ForwardGraph<'a>> {
        self.check_tokens(tokens)?;
        let mut g = Graph::new();
        let nodes = self.leaves(&mut g);
        let rows = tokens
            .iter()
            .map(|t| {
                let leaf = g.constant_ref(t);
                encode_token_node(&mut g, &nodes, &self.config, leaf)
            })
            .collect::<Result<Vec<_>>>()?;
        let embeddings = g.stack_rows(&rows)?;
        let (attended, heads) = attention_nodes(&mut g, nodes.attention(), &self.config, embeddings)?;
        let pooled = g.mean_rows(attended)?;
        let logits = g.affine(pooled, nodes.class_w, nodes.class_b)?;
        Ok(ForwardGraph { graph: g, params: nodes.all, embeddings, attended, heads, logits })
    }

    /// Inference pass.
    pub fn forward(&self, tokens: &TokenSequence) -> Result<ForwardOutput> {
        let fg = self.build_graph(&tokens.tokens)?;
        Ok(fg.output())
    }

    /// Cross-entropy loss of one track and its gradient for every parameter,
    /// in canonical order.
    pub fn loss_and_gradients(&self, tokens: &[Tensor], label: usize) -> Result<LossGradients> {
        let mut fg = self.build_graph(tokens)?;
        let loss = fg.graph.cross_entropy(fg.logits, label)?;
        let mut grads = fg.graph.backward(loss)?;
        let loss_value = fg.graph.value(loss).data()[0];
        let gradients = fg
            .params
            .iter()
            .zip(&self.params)
            .map(|(&id, p)| grads.take(id).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect();
        Ok(LossGradients { loss: loss_value, logits: fg.graph.value(fg.logits).clone(), gradients })
    }

    pub fn loss(&self, tokens: &[Tensor], label: usize) -> Result<f64> {
        let mut fg = self.build_graph(tokens)?;
        let loss = fg.graph.cross_entropy(fg.logits, label)?;
        Ok(fg.graph.value(loss).data()[0])
    }
}

fn check_token_shape(cfg: &ModelConfig, token: &Tensor) -> Result<()> {
    let ok = match token.shape() {
        [b, f] | [1, b, f] => *b == cfg.token_bins && *f == cfg.token_frames,
        _ => false,
    };
    if !ok {
        return Err(Error::shape(
            "encode_token",
            format!("token {:?}, expected {}x{}", token.shape(), cfg.token_bins, cfg.token_frames),
        ));
    }
    Ok(())
}

struct ParamNodes {
    conv: Vec<(NodeId, NodeId)>,
    token_w: NodeId,
    token_b: NodeId,
    query: NodeId,
    key: NodeId,
    value: NodeId,
    output: NodeId,
    class_w: NodeId,
    class_b: NodeId,
    all: Vec<NodeId>,
}

impl ParamNodes {
    fn attention(&self) -> [NodeId; 4] {
        [self.query, self.key, self.value, self.output]
    }
}

/// conv → relu → pool per block, flatten, project to `embed_dim`, relu.
fn encode_token_node(g: &mut Graph<'_>, p: &ParamNodes, cfg: &ModelConfig, token: NodeId) -> Result<NodeId> {
    let mut x = g.reshape(token, &[1, cfg.token_bins, cfg.token_frames])?;
    for &(kernel, bias) in &p.conv {
        x = g.conv2d(x, kernel, bias)?;
        x = g.relu(x);
        x = g.maxpool2d(x)?;
    }
    let flat = g.reshape(x, &[cfg.flatten_dim()])?;
    let projected = g.affine(flat, p.token_w, p.token_b)?;
    Ok(g.relu(projected))
}

/// Scaled dot-product attention per head over `E[T×d]`, heads concatenated
/// and passed through the output projection. Returns the attended sequence
/// and the per-head `T×T` attention matrices (rows are queries).
fn attention_nodes(
    g: &mut Graph<'_>,
    [query, key, value, output]: [NodeId; 4],
    cfg: &ModelConfig,
    embeddings: NodeId,
) -> Result<(NodeId, Vec<NodeId>)> {
    let dk = cfg.head_dim();
    let q = g.matmul_transposed(embeddings, query)?;
    let k = g.matmul_transposed(embeddings, key)?;
    let v = g.matmul_transposed(embeddings, value)?;
    let scale = 1.0 / libm::sqrt(dk as f64);
    let mut heads = Vec::with_capacity(cfg.heads);
    let mut outputs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = g.slice_cols(q, h * dk, dk)?;
        let kh = g.slice_cols(k, h * dk, dk)?;
        let vh = g.slice_cols(v, h * dk, dk)?;
        let scores = g.matmul_transposed(qh, kh)?;
        let scores = g.scale(scores, scale);
        let weights = g.softmax(scores);
        outputs.push(g.matmul(weights, vh)?);
        heads.push(weights);
    }
    let concat = g.concat_cols(&outputs)?;
    let attended = g.matmul_transposed(concat, output)?;
    Ok((attended, heads))
}

/// A recorded forward pass, kept for backpropagation.
pub struct ForwardGraph<'a> {
    pub graph: Graph<'a>,
    /// Parameter leaves in canonical order.
    pub params: Vec<NodeId>,
    pub embeddings: NodeId,
    pub attended: NodeId,
    pub heads: Vec<NodeId>,
    pub logits: NodeId,
}

impl ForwardGraph<'_> {
    pub fn output(&self) -> ForwardOutput {
        let attention = stack_heads(self.heads.iter().map(|&h| self.graph.value(h)));
        let token_scores = token_scores(&attention);
        ForwardOutput {
            logits: self.graph.value(self.logits).clone(),
            token_embeddings: self.graph.value(self.embeddings).clone(),
            attended: self.graph.value(self.attended).clone(),
            attention,
            token_scores,
        }
    }
}

fn stack_heads<'t>(heads: impl Iterator<Item = &'t Tensor>) -> Tensor {
    let mut data = Vec::new();
    let mut count = 0;
    let mut t = 0;
    for h in heads {
        t = h.shape()[0];
        data.extend_from_slice(h.data());
        count += 1;
    }
    Tensor::new(&[count, t, t], data).expect("heads share a T×T shape")
}

pub struct LossGradients {
    pub loss: f64,
    pub logits: Tensor,
    pub gradients: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Tensor,
    /// CNN token embeddings before attention, `T×d`.
    pub token_embeddings: Tensor,
    pub attended: Tensor,
    /// `heads×T×T`, query rows by key columns.
    pub attention: Tensor,
    pub token_scores: Tensor,
}

impl ForwardOutput {
    /// Index of the largest logit; the lowest index wins ties.
    pub fn predicted(&self) -> usize {
        argmax(self.logits.data())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Embeds one `bins × frames` token with the shared CNN encoder.
pub fn encode_token(token: &Tensor, params: &ModelParams) -> Result<Tensor> {
    check_token_shape(&params.config, token)?;
    let mut g = Graph::new();
    let nodes = params.leaves(&mut g);
    let leaf = g.constant_ref(token);
    let out = encode_token_node(&mut g, &nodes, &params.config, leaf)?;
    Ok(g.value(out).clone())
}

/// Multi-head self-attention over `embeddings[T×d]`; returns the attended
/// sequence and the `heads×T×T` attention tensor.
pub fn multi_head_attention(embeddings: &Tensor, params: &ModelParams) -> Result<(Tensor, Tensor)> {
    let cfg = &params.config;
    if embeddings.rank() != 2 || embeddings.shape()[1] != cfg.embed_dim {
        return Err(Error::shape(
            "multi_head_attention",
            format!("embeddings {:?}, expected T x {}", embeddings.shape(), cfg.embed_dim),
        ));
    }
    let mut g = Graph::new();
    let nodes = params.leaves(&mut g);
    let e = g.constant_ref(embeddings);
    let (attended, heads) = attention_nodes(&mut g, nodes.attention(), cfg, e)?;
    let attention = stack_heads(heads.iter().map(|&h| g.value(h)));
    Ok((g.value(attended).clone(), attention))
}

/// Records multi-head attention over the `T×d` node `embeddings` on an
/// existing graph, with the projection matrices entered as constants.
/// Returns the attended node and the per-head attention nodes.
pub fn attention_on_graph(
    params: &ModelParams,
    g: &mut Graph<'_>,
    embeddings: NodeId,
) -> Result<(NodeId, Vec<NodeId>)> {
    let n = PER_CONV * params.blocks();
    let w = [n + 2, n + 3, n + 4, n + 5].map(|i| g.constant(params.params[i].value.clone()));
    attention_nodes(g, w, &params.config, embeddings)
}

/// Per-token importance: the attention mass each key position receives,
/// averaged over heads and query positions. Sums to one.
pub fn token_scores(attention: &Tensor) -> Tensor {
    let (h, t) = (attention.shape()[0], attention.shape()[1]);
    let mut scores = vec![0.0; t];
    for row in attention.data().chunks(t) {
        for (s, a) in scores.iter_mut().zip(row) {
            *s += a;
        }
    }
    let n = (h * t) as f64;
    for s in &mut scores {
        *s /= n;
    }
    Tensor::vector(scores)
}

/// Result of [`check_model_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradCheck {
    pub max_relative_error: f64,
    /// `(parameter name, flat index, analytic, numeric)` per sampled coordinate.
    pub samples: Vec<(String, usize, f64, f64)>,
    /// Coordinates redrawn because the difference stencil straddled a ReLU
    /// or max-pool switch, or the gradient was too small to resolve.
    pub skipped: usize,
}

/// Smallest gradient magnitude a central difference at `eps = 1e-5` on an
/// O(1) loss resolves to better than 1e-4 relative error.
pub const RESOLVABLE_GRADIENT: f64 = 1e-6;

/// Redraws allowed per sample before a non-smooth coordinate is accepted.
const MAX_REDRAWS: usize = 64;

/// Compares backpropagated loss gradients with central differences at
/// `samples` parameter coordinates chosen by a seeded generator. Coordinates
/// are spread round-robin over the parameter tensors so every layer is
/// exercised.
///
/// A perturbed early-layer weight moves thousands of activations, so some
/// stencils cross a ReLU or pooling switch and the difference quotient is
/// meaningless there. Each coordinate is differenced at `h` and `h/2`,
/// starting from `h = eps`; when the two disagree the loss is not smooth on
/// the stencil and `h` shrinks, down to `eps/256`, before another coordinate
/// of the same tensor is drawn. An incorrect analytic gradient is still
/// caught, since both quotients agree with each other and not with it.
///
/// Coordinates whose analytic gradient is below [`RESOLVABLE_GRADIENT`] are
/// also redrawn: the loss is only known to about one ulp, so a difference
/// quotient cannot resolve them to the required relative precision.
pub fn check_model_gradients(
    params: &ModelParams,
    tokens: &[Tensor],
    label: usize,
    samples: usize,
    eps: f64,
    seed: u64,
) -> Result<ModelGradCheck> {
    let analytic = params.loss_and_gradients(tokens, label)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut out = ModelGradCheck { max_relative_error: 0.0, samples: Vec::with_capacity(samples), skipped: 0 };
    let count = params.params.len();
    let quotient = |probe: &mut ModelParams, pi: usize, idx: usize, h: f64| -> Result<f64> {
        let orig = probe.params[pi].value.data()[idx];
        probe.params[pi].value.data_mut()[idx] = orig + h;
        let plus = probe.loss(tokens, label)?;
        probe.params[pi].value.data_mut()[idx] = orig - h;
        let minus = probe.loss(tokens, label)?;
        probe.params[pi].value.data_mut()[idx] = orig;
        Ok((plus - minus) / (2.0 * h))
    };
    for s in 0..samples {
        let pi = s % count;
        let mut redraws = 0;
        let (idx, numeric) = 'draw: loop {
            let idx = rng.random_range(0..params.params[pi].value.len());
            if analytic.gradients[pi].data()[idx].abs() < RESOLVABLE_GRADIENT && redraws < MAX_REDRAWS {
                redraws += 1;
                out.skipped += 1;
                continue;
            }
            let mut h = eps;
            let mut full = quotient(&mut probe, pi, idx, h)?;
            while h >= eps / 256.0 {
                let half = quotient(&mut probe, pi, idx, h / 2.0)?;
                // loss roundoff is ~1e-14, amplified by 1/h
                if (full - half).abs() <= 1e-7 * full.abs().max(half.abs()) + 1e-14 / h {
                    break 'draw (idx, half);
                }
                h /= 2.0;
                full = half;
            }
            if redraws == MAX_REDRAWS {
                break (idx, full);
            }
            redraws += 1;
            out.skipped += 1;
        };
        let a = analytic.gradients[pi].data()[idx];
        out.max_relative_error = out.max_relative_error.max(relative_error(a, numeric));
        out.samples.push((params.params[pi].name.clone(), idx, a, numeric));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.head_dim(), 32);
        assert_eq!(cfg.feature_map(), (27, 5));
        assert_eq!(cfg.flatten_dim(), 4320);
        let names: Vec<String> = cfg.parameter_shapes().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 14);
        assert_eq!(names[6], "token.weight");
    }

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = ModelConfig { heads: 3, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn token_scores_of_uniform_attention() {
        let att = Tensor::full(&[4, 10, 10], 0.1);
        let s = token_scores(&att);
        assert!(s.data().iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn token_scores_of_delta_rows() {
        let mut att = Tensor::zeros(&[4, 10, 10]);
        for row in att.data_mut().chunks_mut(10) {
            row[3] = 1.0;
        }
        let s = token_scores(&att);
        for (i, &v) in s.data().iter().enumerate() {
            assert_eq!(v, if i == 3 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0; 5]), 0);
    }
}
