//! Spatio-temporal graph-convolutional embedding network.
//!
//! Input is a batch of normalized 54-frame skeleton sequences
//! (`N x C x T x V`, C = 2 coordinate channels). Each block applies a
//! partitioned spatial graph convolution, ReLU, a same-padded temporal
//! convolution with a residual connection, and a learnable per-channel
//! affine. Features are mean-pooled over time and joints, projected to the
//! embedding dimension and L2-normalized onto the unit sphere.
//!
//! Gradients come from the hand-derived reverse-mode operators in [`ops`];
//! `backward` is exact for the composed forward map. Forward and backward
//! never reduce across batch items, so per-item evaluation is bit-identical
//! to batched evaluation and data-parallel callers stay deterministic as
//! long as they accumulate item gradients in index order.

pub mod checkpoint;
pub mod ops;

use thiserror::Error;

use crate::graph::{build_graph, GraphConfig, GraphError, GraphSpec};
use crate::rng::DetRng;
use crate::skeleton::NUM_JOINTS;
use ops::{Feat, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Coordinate channels per joint (confidence is not fed to the model).
    pub in_channels: usize,
    /// Output channels of each block.
    pub block_channels: Vec<usize>,
    /// Temporal kernel width (odd).
    pub temporal_kernel: usize,
    pub embedding_dim: usize,
    /// Frames per input sequence.
    pub frames: usize,
    pub graph: GraphConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 2,
            block_channels: vec![32, 64],
            temporal_kernel: 5,
            embedding_dim: 128,
            frames: 54,
            graph: GraphConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn feature_channels(&self) -> usize {
        *self.block_channels.last().expect("at least one block")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Batch of model inputs, `N x C x T x V` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTensor<F = f32> {
    pub data: Vec<F>,
    pub n: usize,
    pub c: usize,
    pub t: usize,
    pub v: usize,
}

impl<F: Real> BatchTensor<F> {
    pub fn zeros(n: usize, c: usize, t: usize, v: usize) -> Self {
        BatchTensor {
            data: vec![F::zero(); n * c * t * v],
            n,
            c,
            t,
            v,
        }
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, t: usize, v: usize) -> usize {
        ((n * self.c + c) * self.t + t) * self.v + v
    }

    pub fn to_f64(&self) -> BatchTensor<f64> {
        BatchTensor {
            data: self.data.iter().map(|&x| x.to_f64()).collect(),
            n: self.n,
            c: self.c,
            t: self.t,
            v: self.v,
        }
    }

    /// One-item sub-batch (used by data-parallel callers).
    pub fn item(&self, n: usize) -> BatchTensor<F> {
        let stride = self.c * self.t * self.v;
        BatchTensor {
            data: self.data[n * stride..(n + 1) * stride].to_vec(),
            n: 1,
            c: self.c,
            t: self.t,
            v: self.v,
        }
    }

    fn to_feat(&self) -> Feat<F> {
        let (n, c, t, v) = (self.n, self.c, self.t, self.v);
        let mut feat = Feat::zeros(n, t, v, c);
        for ni in 0..n {
            for ci in 0..c {
                for ti in 0..t {
                    let src = ((ni * c + ci) * t + ti) * v;
                    for vi in 0..v {
                        feat.row_mut(ni, ti, vi)[ci] = self.data[src + vi];
                    }
                }
            }
        }
        feat
    }
}

/// Embedding matrix, `N x D` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings<F = f32> {
    pub data: Vec<F>,
    pub n: usize,
    pub d: usize,
}

impl<F: Real> Embeddings<F> {
    pub fn row(&self, n: usize) -> &[F] {
        &self.data[n * self.d..(n + 1) * self.d]
    }

    pub fn to_f64(&self) -> Embeddings<f64> {
        Embeddings {
            data: self.data.iter().map(|&x| x.to_f64()).collect(),
            n: self.n,
            d: self.d,
        }
    }
}

/// Parameters of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<F> {
    /// One `c_in x c_out` matrix per graph partition.
    pub spatial: Vec<Vec<F>>,
    /// `tau x c_out x c_out` temporal kernel.
    pub temporal: Vec<F>,
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
}

/// All learnable parameters. Doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F = f32> {
    pub blocks: Vec<BlockParams<F>>,
    /// `feature_channels x embedding_dim` projection.
    pub projection: Vec<F>,
}

impl<F: Real> ModelParams<F> {
    /// Zero-valued parameters with the same shapes (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| BlockParams {
                spatial: b.spatial.iter().map(|w| vec![F::zero(); w.len()]).collect(),
                temporal: vec![F::zero(); b.temporal.len()],
                gamma: vec![F::zero(); b.gamma.len()],
                beta: vec![F::zero(); b.beta.len()],
            })
            .collect();
        ModelParams {
            blocks,
            projection: vec![F::zero(); self.projection.len()],
        }
    }

    /// Named parameter groups in a fixed order (checkpoint layout order).
    pub fn group_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            for ki in 0..b.spatial.len() {
                names.push(format!("block{bi}.spatial{ki}"));
            }
            names.push(format!("block{bi}.temporal"));
            names.push(format!("block{bi}.gamma"));
            names.push(format!("block{bi}.beta"));
        }
        names.push("projection".to_string());
        names
    }

    pub fn slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for b in &self.blocks {
            for w in &b.spatial {
                out.push(w);
            }
            out.push(&b.temporal);
            out.push(&b.gamma);
            out.push(&b.beta);
        }
        out.push(&self.projection);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for b in &mut self.blocks {
            for w in &mut b.spatial {
                out.push(w);
            }
            out.push(&mut b.temporal);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out.push(&mut self.projection);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn to_f64(&self) -> ModelParams<f64> {
        ModelParams {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    spatial: b
                        .spatial
                        .iter()
                        .map(|w| w.iter().map(|&x| x.to_f64()).collect())
                        .collect(),
                    temporal: b.temporal.iter().map(|&x| x.to_f64()).collect(),
                    gamma: b.gamma.iter().map(|&x| x.to_f64()).collect(),
                    beta: b.beta.iter().map(|&x| x.to_f64()).collect(),
                })
                .collect(),
            projection: self.projection.iter().map(|&x| x.to_f64()).collect(),
        }
    }
}

/// Fan-in-scaled uniform initialization; gamma = 1, beta = 0. Deterministic
/// per seed: the draw order is the group order.
pub fn init_params(config: &ModelConfig, seed: u64) -> ModelParams<f32> {
    let graph = build_graph(&config.graph).expect("valid default graph");
    let k = graph.num_partitions();
    let tau = config.temporal_kernel;
    let mut rng = DetRng::new(seed);
    let mut uniform = |count: usize, bound: f64| -> Vec<f32> {
        (0..count)
            .map(|_| rng.range_f64(-bound, bound) as f32)
            .collect()
    };
    let mut blocks = Vec::new();
    let mut c_in = config.in_channels;
    for &c_out in &config.block_channels {
        // graph rows carry extra mass (self loops + neighbors), so the
        // spatial fan-in bound is milder than the usual ReLU gain
        let spatial_bound = (3.0 / c_in as f64).sqrt();
        let spatial = (0..k)
            .map(|_| uniform(c_in * c_out, spatial_bound))
            .collect();
        let temporal_bound = (6.0 / (c_out * tau) as f64).sqrt();
        let temporal = uniform(tau * c_out * c_out, temporal_bound);
        blocks.push(BlockParams {
            spatial,
            temporal,
            gamma: vec![1.0; c_out],
            beta: vec![0.0; c_out],
        });
        c_in = c_out;
    }
    let proj_bound = (3.0 / c_in as f64).sqrt();
    let projection = uniform(c_in * config.embedding_dim, proj_bound);
    ModelParams { blocks, projection }
}

/// Cached intermediate activations of one forward pass.
pub struct Trace<F> {
    block_inputs: Vec<Feat<F>>,
    pre_act: Vec<Feat<F>>,
    post_act: Vec<Feat<F>>,
    affine_in: Vec<Feat<F>>,
    pooled: Vec<F>,
    norms: Vec<F>,
    fallback: Vec<bool>,
    embeddings: Embeddings<F>,
}

impl<F: Real> Trace<F> {
    pub fn embeddings(&self) -> &Embeddings<F> {
        &self.embeddings
    }
}

const NORM_EPS: f64 = 1e-12;

fn check_shapes<F: Real>(config: &ModelConfig, batch: &BatchTensor<F>) -> Result<(), ModelError> {
    if batch.c != config.in_channels || batch.t != config.frames || batch.v != NUM_JOINTS {
        return Err(ModelError::ShapeMismatch {
            expected: format!(
                "N x {} x {} x {}",
                config.in_channels, config.frames, NUM_JOINTS
            ),
            got: format!("{} x {} x {} x {}", batch.n, batch.c, batch.t, batch.v),
        });
    }
    Ok(())
}

/// Full forward pass keeping every intermediate needed by the backward pass.
pub fn forward_traced<F: Real>(
    params: &ModelParams<F>,
    graph: &GraphSpec,
    config: &ModelConfig,
    batch: &BatchTensor<F>,
) -> Result<Trace<F>, ModelError> {
    check_shapes(config, batch)?;
    let mut x = batch.to_feat();
    let mut block_inputs = Vec::new();
    let mut pre_act = Vec::new();
    let mut post_act = Vec::new();
    let mut affine_in = Vec::new();
    for (block, &c_out) in params.blocks.iter().zip(&config.block_channels) {
        let s = ops::spatial_forward(&x, graph, &block.spatial, c_out);
        let h = ops::relu_forward(&s);
        let mut r = ops::temporal_forward(&h, &block.temporal, config.temporal_kernel);
        ops::add_inplace(&mut r, &h);
        let y = ops::affine_forward(&r, &block.gamma, &block.beta);
        block_inputs.push(x);
        pre_act.push(s);
        post_act.push(h);
        affine_in.push(r);
        x = y;
    }
    let pooled = ops::mean_pool(&x);
    block_inputs.push(x);
    let c = config.feature_channels();
    let d = config.embedding_dim;
    let proj = ops::linear_forward(&pooled, &params.projection, batch.n, c, d);
    let (z, norms, fallback) = ops::l2norm_forward(&proj, batch.n, d, F::from_f64(NORM_EPS));
    Ok(Trace {
        block_inputs,
        pre_act,
        post_act,
        affine_in,
        pooled,
        norms,
        fallback,
        embeddings: Embeddings {
            data: z,
            n: batch.n,
            d,
        },
    })
}

/// Unit-norm embeddings for a batch.
pub fn forward<F: Real>(
    params: &ModelParams<F>,
    graph: &GraphSpec,
    config: &ModelConfig,
    batch: &BatchTensor<F>,
) -> Result<Embeddings<F>, ModelError> {
    Ok(forward_traced(params, graph, config, batch)?.embeddings)
}

/// Exact parameter gradients given the upstream gradient on the embeddings,
/// reusing the cached forward trace.
pub fn backward_with_trace<F: Real>(
    params: &ModelParams<F>,
    graph: &GraphSpec,
    config: &ModelConfig,
    trace: &Trace<F>,
    upstream: &Embeddings<F>,
) -> ModelParams<F> {
    let n = upstream.n;
    let c = config.feature_channels();
    let d = config.embedding_dim;
    let mut grads = params.zeros_like();

    let d_proj = ops::l2norm_backward(
        &trace.embeddings.data,
        &trace.norms,
        &trace.fallback,
        n,
        d,
        &upstream.data,
    );
    let (d_pooled, d_projection) =
        ops::linear_backward(&trace.pooled, &params.projection, n, c, d, &d_proj);
    grads.projection = d_projection;

    let last = trace.block_inputs.last().expect("final features");
    let mut d_y = ops::mean_pool_backward(&d_pooled, last.n, last.t, last.v, last.c);

    for bi in (0..params.blocks.len()).rev() {
        let block = &params.blocks[bi];
        let (d_r, d_gamma, d_beta) = ops::affine_backward(&trace.affine_in[bi], &block.gamma, &d_y);
        let (d_h_conv, d_temporal) = ops::temporal_backward(
            &trace.post_act[bi],
            &block.temporal,
            config.temporal_kernel,
            &d_r,
        );
        // residual: d_h = d_r (skip path) + conv input gradient
        let mut d_h = d_r;
        ops::add_inplace(&mut d_h, &d_h_conv);
        let d_s = ops::relu_backward(&trace.pre_act[bi], &d_h);
        let c_out = config.block_channels[bi];
        let (d_x, d_spatial) =
            ops::spatial_backward(&trace.block_inputs[bi], graph, &block.spatial, c_out, &d_s);
        grads.blocks[bi].spatial = d_spatial;
        grads.blocks[bi].temporal = d_temporal;
        grads.blocks[bi].gamma = d_gamma;
        grads.blocks[bi].beta = d_beta;
        d_y = d_x;
    }
    grads
}

/// Parameter gradients for `upstream^T . embeddings`; recomputes the forward
/// trace internally.
pub fn backward<F: Real>(
    params: &ModelParams<F>,
    graph: &GraphSpec,
    config: &ModelConfig,
    batch: &BatchTensor<F>,
    upstream: &Embeddings<F>,
) -> Result<ModelParams<F>, ModelError> {
    let trace = forward_traced(params, graph, config, batch)?;
    Ok(backward_with_trace(params, graph, config, &trace, upstream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            in_channels: 2,
            block_channels: vec![4, 6],
            temporal_kernel: 3,
            embedding_dim: 8,
            frames: 8,
            ..ModelConfig::default()
        }
    }

    fn random_batch(n: usize, config: &ModelConfig, seed: u64) -> BatchTensor<f32> {
        let mut rng = DetRng::new(seed);
        let mut b = BatchTensor::zeros(n, config.in_channels, config.frames, NUM_JOINTS);
        for x in b.data.iter_mut() {
            *x = rng.range_f64(-1.0, 1.0) as f32;
        }
        b
    }

    #[test]
    fn output_rows_unit_norm() {
        let config = ModelConfig::default();
        let graph = build_graph(&config.graph).unwrap();
        let params = init_params(&config, 5);
        let batch = random_batch(3, &config, 11);
        let z = forward(&params, &graph, &config, &batch).unwrap();
        for ni in 0..z.n {
            let norm: f32 = z.row(ni).iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5, "row {ni} norm {norm}");
        }
    }

    #[test]
    fn zero_input_gives_fallback_embedding() {
        let mut config = small_config();
        config.block_channels = vec![4];
        let graph = build_graph(&config.graph).unwrap();
        let mut params = init_params(&config, 3);
        // zero biases leave the whole network at zero for zero input
        for b in params.blocks.iter_mut() {
            b.beta.iter_mut().for_each(|x| *x = 0.0);
        }
        let batch = BatchTensor::zeros(2, config.in_channels, config.frames, NUM_JOINTS);
        let z = forward(&params, &graph, &config, &batch).unwrap();
        for ni in 0..2 {
            let row = z.row(ni);
            assert_eq!(row[0], 1.0);
            assert!(row[1..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn batch_permutation_permutes_rows() {
        let config = small_config();
        let graph = build_graph(&config.graph).unwrap();
        let params = init_params(&config, 7);
        let batch = random_batch(4, &config, 13);
        let z = forward(&params, &graph, &config, &batch).unwrap();
        // reversed batch
        let stride = config.in_channels * config.frames * NUM_JOINTS;
        let mut rev = batch.clone();
        for ni in 0..4 {
            rev.data[ni * stride..(ni + 1) * stride]
                .copy_from_slice(&batch.data[(3 - ni) * stride..(4 - ni) * stride]);
        }
        let zr = forward(&params, &graph, &config, &rev).unwrap();
        for ni in 0..4 {
            assert_eq!(z.row(ni), zr.row(3 - ni));
        }
    }

    #[test]
    fn per_item_forward_matches_batched() {
        let config = small_config();
        let graph = build_graph(&config.graph).unwrap();
        let params = init_params(&config, 9);
        let batch = random_batch(5, &config, 17);
        let z = forward(&params, &graph, &config, &batch).unwrap();
        for ni in 0..5 {
            let zi = forward(&params, &graph, &config, &batch.item(ni)).unwrap();
            assert_eq!(z.row(ni), zi.row(0), "item {ni}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let config = small_config();
        let graph = build_graph(&config.graph).unwrap();
        let params = init_params(&config, 1);
        let bad = BatchTensor::<f32>::zeros(1, 3, config.frames, NUM_JOINTS);
        assert!(matches!(
            forward(&params, &graph, &config, &bad),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn init_deterministic_per_seed() {
        let config = ModelConfig::default();
        let a = init_params(&config, 42);
        let b = init_params(&config, 42);
        assert_eq!(a, b);
        let c = init_params(&config, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn forward_bit_reproducible() {
        let config = ModelConfig::default();
        let graph = build_graph(&config.graph).unwrap();
        let params = init_params(&config, 2);
        let batch = random_batch(2, &config, 3);
        let z1 = forward(&params, &graph, &config, &batch).unwrap();
        let z2 = forward(&params, &graph, &config, &batch).unwrap();
        assert_eq!(z1.data, z2.data);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let config = small_config();
        let graph = build_graph(&config.graph).unwrap();
        let params = init_params(&config, 4).to_f64();
        let batch = random_batch(2, &config, 5).to_f64();
        let upstream = Embeddings {
            data: vec![0.0f64; 2 * config.embedding_dim],
            n: 2,
            d: config.embedding_dim,
        };
        let grads = backward(&params, &graph, &config, &batch, &upstream).unwrap();
        for slice in grads.slices() {
            assert!(slice.iter().all(|&g| g == 0.0));
        }
    }

    /// Exhaustive finite-difference check of every parameter on a small
    /// config, against the scalar objective sum(upstream * embeddings).
    #[test]
    fn backward_matches_finite_differences_exhaustively() {
        let config = small_config();
        let graph = build_graph(&config.graph).unwrap();
        let params = init_params(&config, 8).to_f64();
        let batch = random_batch(4, &config, 21).to_f64();
        let mut rng = DetRng::new(30);
        let upstream = Embeddings {
            data: (0..4 * config.embedding_dim)
                .map(|_| rng.range_f64(-1.0, 1.0))
                .collect(),
            n: 4,
            d: config.embedding_dim,
        };
        let objective = |p: &ModelParams<f64>| -> f64 {
            let z = forward(p, &graph, &config, &batch).unwrap();
            z.data.iter().zip(&upstream.data).map(|(a, b)| a * b).sum()
        };
        let grads = backward(&params, &graph, &config, &batch, &upstream).unwrap();
        let names = params.group_names();
        let grad_slices: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        let mut p = params.clone();
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for (gi, name) in names.iter().enumerate() {
            let len = grad_slices[gi].len();
            for i in 0..len {
                let orig = p.slices()[gi][i];
                p.slices_mut()[gi][i] = orig + h;
                let up = objective(&p);
                p.slices_mut()[gi][i] = orig - h;
                let down = objective(&p);
                p.slices_mut()[gi][i] = orig;
                let fd = (up - down) / (2.0 * h);
                let analytic = grad_slices[gi][i];
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                assert!(
                    rel < 1e-4,
                    "{name}[{i}]: analytic {analytic} fd {fd} rel {rel}"
                );
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn init_layer_output_variance_reasonable() {
        // unit-variance input through the first spatial conv and through a
        // temporal conv lands within [0.25, 4]
        let config = ModelConfig::default();
        let graph = build_graph(&config.graph).unwrap();
        let params = init_params(&config, 77).to_f64();
        let mut rng = DetRng::new(99);
        let mut x = Feat::<f64>::zeros(4, config.frames, NUM_JOINTS, config.in_channels);
        for v in x.data.iter_mut() {
            *v = rng.normal();
        }
        let s = ops::spatial_forward(&x, &graph, &params.blocks[0].spatial, 32);
        let var = |d: &[f64]| {
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d.len() as f64
        };
        let v_spatial = var(&s.data);
        assert!(
            (0.25..4.0).contains(&v_spatial),
            "spatial output variance {v_spatial}"
        );
        let mut h = Feat::<f64>::zeros(4, config.frames, NUM_JOINTS, 32);
        for v in h.data.iter_mut() {
            *v = rng.normal();
        }
        let u = ops::temporal_forward(&h, &params.blocks[0].temporal, config.temporal_kernel);
        let v_temporal = var(&u.data);
        assert!(
            (0.25..4.0).contains(&v_temporal),
            "temporal output variance {v_temporal}"
        );
    }
}
