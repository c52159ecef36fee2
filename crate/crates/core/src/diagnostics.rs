//! Finite-difference verification of every differentiable op and of the
//! assembled model.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{attention_on_graph, check_model_gradients, ModelConfig, ModelParams};
use crate::tensor::{grad_check, Graph, NodeId, Tensor};
use crate::Result;

/// Central-difference step used throughout the suite.
pub const GRAD_CHECK_EPS: f64 = 1e-5;
/// Bound for single ops (matmul, relu, affine, softmax, cross-entropy).
pub const SIMPLE_OP_TOLERANCE: f64 = 1e-6;
/// Bound for compositions (conv, pooling chains, attention, the full model).
pub const COMPOSITE_TOLERANCE: f64 = 1e-4;
/// Parameter coordinates sampled per full-model point.
pub const MODEL_SAMPLES: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub threshold: f64,
    pub points: usize,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.threshold
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape is nonempty")
}

/// Random values with magnitude at least `margin`, keeping ReLU kinks out of
/// the finite-difference stencil.
fn random_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> Tensor {
    random(rng, shape).map(|v| if v >= 0.0 { v.max(margin) } else { v.min(-margin) })
}

/// `Σ out ⊙ weights`, a scalar whose gradient exercises every output entry.
fn weighted_sum(g: &mut Graph<'_>, out: NodeId, weights: &Tensor) -> Result<NodeId> {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

struct Accumulator {
    name: &'static str,
    threshold: f64,
    worst: f64,
    points: usize,
}

impl Accumulator {
    fn new(name: &'static str, threshold: f64) -> Self {
        Accumulator { name, threshold, worst: 0.0, points: 0 }
    }

    fn add(&mut self, err: f64) {
        self.worst = self.worst.max(err);
    }

    fn finish(self) -> OpCheck {
        OpCheck { name: self.name, max_relative_error: self.worst, threshold: self.threshold, points: self.points }
    }
}

/// Runs the gradient check for every op at `points` random points each and
/// for the full default model. Deterministic in `seed`.
pub fn gradcheck_suite(seed: u64, points: usize) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = GRAD_CHECK_EPS;
    let mut matmul = Accumulator::new("matmul", SIMPLE_OP_TOLERANCE);
    let mut relu = Accumulator::new("relu", SIMPLE_OP_TOLERANCE);
    let mut affine = Accumulator::new("affine", SIMPLE_OP_TOLERANCE);
    let mut softmax = Accumulator::new("softmax", SIMPLE_OP_TOLERANCE);
    let mut xent = Accumulator::new("softmax+cross_entropy", SIMPLE_OP_TOLERANCE);
    let mut conv = Accumulator::new("conv2d", COMPOSITE_TOLERANCE);
    let mut pool = Accumulator::new("conv2d+maxpool2d+affine", COMPOSITE_TOLERANCE);
    let mut mha = Accumulator::new("multi_head_attention", COMPOSITE_TOLERANCE);
    let mut model = Accumulator::new("full_model", COMPOSITE_TOLERANCE);

    let small = ModelConfig {
        token_count: 5,
        token_bins: 8,
        token_frames: 6,
        conv_channels: alloc::vec![2],
        embed_dim: 8,
        heads: 2,
        class_count: 3,
        score_temperature: 5.0,
    };

    for _ in 0..points {
        // matmul, both operands
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let r = random(&mut rng, &[3, 2]);
        let err_a = grad_check(
            |g, x| {
                let bn = g.constant(b.clone());
                let y = g.matmul(x, bn)?;
                weighted_sum(g, y, &r)
            },
            &a,
            eps,
        )?;
        let err_b = grad_check(
            |g, x| {
                let an = g.constant(a.clone());
                let y = g.matmul(an, x)?;
                weighted_sum(g, y, &r)
            },
            &b,
            eps,
        )?;
        matmul.add(err_a.max_relative_error.max(err_b.max_relative_error));
        matmul.points += 1;

        let x = random_away_from_zero(&mut rng, &[12], 0.1);
        let r = random(&mut rng, &[12]);
        relu.add(
            grad_check(
                |g, v| {
                    let y = g.relu(v);
                    weighted_sum(g, y, &r)
                },
                &x,
                eps,
            )?
            .max_relative_error,
        );
        relu.points += 1;

        // affine with respect to input, weights and bias
        let x = random(&mut rng, &[5]);
        let w = random(&mut rng, &[3, 5]);
        let bias = random(&mut rng, &[3]);
        let r = random(&mut rng, &[3]);
        let ex = grad_check(
            |g, v| {
                let (wn, bn) = (g.constant(w.clone()), g.constant(bias.clone()));
                let y = g.affine(v, wn, bn)?;
                weighted_sum(g, y, &r)
            },
            &x,
            eps,
        )?;
        let ew = grad_check(
            |g, v| {
                let (xn, bn) = (g.constant(x.clone()), g.constant(bias.clone()));
                let y = g.affine(xn, v, bn)?;
                weighted_sum(g, y, &r)
            },
            &w,
            eps,
        )?;
        let eb = grad_check(
            |g, v| {
                let (xn, wn) = (g.constant(x.clone()), g.constant(w.clone()));
                let y = g.affine(xn, wn, v)?;
                weighted_sum(g, y, &r)
            },
            &bias,
            eps,
        )?;
        affine.add(ex.max_relative_error.max(ew.max_relative_error).max(eb.max_relative_error));
        affine.points += 1;

        let x = random(&mut rng, &[6]);
        let r = random(&mut rng, &[6]);
        softmax.add(
            grad_check(
                |g, v| {
                    let y = g.softmax(v);
                    weighted_sum(g, y, &r)
                },
                &x,
                eps,
            )?
            .max_relative_error,
        );
        softmax.points += 1;

        let logits = random(&mut rng, &[10]).map(|v| 3.0 * v);
        let label = rng.random_range(0..10);
        xent.add(grad_check(|g, v| g.cross_entropy(v, label), &logits, eps)?.max_relative_error);
        xent.points += 1;

        // conv2d with respect to input, kernels and bias
        let input = random(&mut rng, &[2, 5, 4]);
        let kernels = random(&mut rng, &[3, 2, 3, 3]);
        let cb = random(&mut rng, &[3]);
        let r = random(&mut rng, &[3, 5, 4]);
        let ei = grad_check(
            |g, v| {
                let (k, b) = (g.constant(kernels.clone()), g.constant(cb.clone()));
                let y = g.conv2d(v, k, b)?;
                weighted_sum(g, y, &r)
            },
            &input,
            eps,
        )?;
        let ek = grad_check(
            |g, v| {
                let (i, b) = (g.constant(input.clone()), g.constant(cb.clone()));
                let y = g.conv2d(i, v, b)?;
                weighted_sum(g, y, &r)
            },
            &kernels,
            eps,
        )?;
        let eb = grad_check(
            |g, v| {
                let (i, k) = (g.constant(input.clone()), g.constant(kernels.clone()));
                let y = g.conv2d(i, k, v)?;
                weighted_sum(g, y, &r)
            },
            &cb,
            eps,
        )?;
        conv.add(ei.max_relative_error.max(ek.max_relative_error).max(eb.max_relative_error));
        conv.points += 1;

        // conv → pool → affine, differentiated at the image
        let image = random(&mut rng, &[1, 6, 6]);
        let k1 = random(&mut rng, &[2, 1, 3, 3]);
        let b1 = random(&mut rng, &[2]);
        let wd = random(&mut rng, &[4, 18]);
        let bd = random(&mut rng, &[4]);
        let r = random(&mut rng, &[4]);
        let ep = grad_check(
            |g, v| {
                let (k, b) = (g.constant(k1.clone()), g.constant(b1.clone()));
                let c = g.conv2d(v, k, b)?;
                let p = g.maxpool2d(c)?;
                let f = g.reshape(p, &[18])?;
                let (w, b) = (g.constant(wd.clone()), g.constant(bd.clone()));
                let y = g.affine(f, w, b)?;
                weighted_sum(g, y, &r)
            },
            &image,
            eps,
        )?;
        pool.add(ep.max_relative_error);
        pool.points += 1;

        // attention, with respect to the token embeddings
        let params = ModelParams::init(&small, rng.random())?;
        let e = random(&mut rng, &[small.token_count, small.embed_dim]);
        let r = random(&mut rng, &[small.token_count, small.embed_dim]);
        let em = grad_check(
            |g, v| {
                let (attended, _) = attention_on_graph(&params, g, v)?;
                weighted_sum(g, attended, &r)
            },
            &e,
            eps,
        )?;
        mha.add(em.max_relative_error);
        mha.points += 1;
    }

    let full = ModelConfig::default();
    for _ in 0..points {
        let params = ModelParams::init(&full, rng.random())?;
        let tokens: Vec<Tensor> = (0..full.token_count)
            .map(|_| random(&mut rng, &[full.token_bins, full.token_frames]).map(|v| 0.5 + 0.5 * v))
            .collect();
        let label = rng.random_range(0..full.class_count);
        let check = check_model_gradients(&params, &tokens, label, MODEL_SAMPLES, eps, rng.random())?;
        model.add(check.max_relative_error);
        model.points += 1;
    }

    Ok([matmul, relu, affine, softmax, xent, conv, pool, mha, model].into_iter().map(Accumulator::finish).collect())
}
