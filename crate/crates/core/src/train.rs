//! Batch sampling, optimization, retrieval evaluation and dataset stats.
//!
//! Training draws P identities per step, builds two augmented views of one
//! sequence per identity, embeds all 2P views, and minimizes the supervised
//! contrastive loss with Adam. Items are embedded independently (forward and
//! backward never mix batch items), so the data-parallel map is safe; item
//! gradients are summed in index order, which keeps every run bit-identical
//! for a fixed seed regardless of thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::augment::{make_views, AugmentConfig, AugmentError};
use crate::graph::{build_graph, GraphError};
use crate::model::{
    backward_with_trace, forward, forward_traced, init_params, BatchTensor, Embeddings,
    ModelConfig, ModelError, ModelParams,
};
use crate::rng::{derive_seed, DetRng};
use crate::skeleton::{normalize_tracklet, NormalizedSequence, Tracklet, NUM_JOINTS};
use crate::supcon::{supcon_loss, EmbeddingBatch, LossConfig, SupConError};

/// One labeled tracklet. `run` distinguishes repeat walks of the same
/// identity (synthetic data); ingest-produced tracklets use run 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreEntry {
    pub label: i64,
    pub run: u32,
    pub tracklet: Tracklet,
}

/// A collection of labeled tracklets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackletStore {
    pub entries: Vec<StoreEntry>,
}

impl TrackletStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Labeled normalized sequences, ready for training or embedding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceStore {
    pub items: Vec<(i64, NormalizedSequence)>,
}

impl SequenceStore {
    /// Normalize every tracklet; silently drops the (unexpected) degenerate
    /// ones, since admission filtering already rejected them upstream.
    pub fn from_tracklets(store: &TrackletStore) -> Self {
        let items = store
            .entries
            .iter()
            .filter_map(|e| normalize_tracklet(&e.tracklet).ok().map(|ns| (e.label, ns)))
            .collect();
        SequenceStore { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<i64> {
        let mut labels: Vec<i64> = self.items.iter().map(|(l, _)| *l).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Identities per batch; each contributes two views.
    pub ids_per_batch: usize,
    pub steps: usize,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            ids_per_batch: 8,
            steps: 1600,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            temperature: 0.01,
            seed: 7,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("need at least {need} identities, store has {have}")]
    InsufficientIdentities { have: usize, need: usize },
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    SupCon(#[from] SupConError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("gallery is empty")]
    EmptyGallery,
}

/// One sampled identity with its two augmented views.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub label: i64,
    pub view_a: NormalizedSequence,
    pub view_b: NormalizedSequence,
}

/// Draw P distinct identities without replacement, one sequence per
/// identity, two augmented views each. View streams are derived from the
/// batch stream mixed with the sequence's track id, so per-sequence work
/// could be farmed out without changing results.
pub fn sample_batch(
    store: &SequenceStore,
    cfg: &TrainConfig,
    aug: &AugmentConfig,
    rng: &mut DetRng,
) -> Result<Vec<BatchItem>, TrainError> {
    let labels = store.labels();
    if labels.len() < cfg.ids_per_batch {
        return Err(TrainError::InsufficientIdentities {
            have: labels.len(),
            need: cfg.ids_per_batch,
        });
    }
    // group item indices by label (labels sorted, so deterministic)
    let mut chosen_labels: Vec<i64> = Vec::with_capacity(cfg.ids_per_batch);
    let mut pool = labels;
    for _ in 0..cfg.ids_per_batch {
        let idx = rng.below(pool.len());
        chosen_labels.push(pool.swap_remove(idx));
    }
    let mut batch = Vec::with_capacity(cfg.ids_per_batch);
    for label in chosen_labels {
        let members: Vec<usize> = store
            .items
            .iter()
            .enumerate()
            .filter_map(|(i, (l, _))| (*l == label).then_some(i))
            .collect();
        let (_, ns) = &store.items[members[rng.below(members.len())]];
        let mut view_rng = rng.fork(ns.source_track_id);
        let (view_a, view_b) = make_views(ns, aug, &mut view_rng)?;
        batch.push(BatchItem {
            label,
            view_a,
            view_b,
        });
    }
    Ok(batch)
}

/// Pack views into the model's `N x C x T x V` input tensor plus labels;
/// rows are (id0 view a, id0 view b, id1 view a, ...).
pub fn batch_to_tensor(batch: &[BatchItem], frames: usize) -> (BatchTensor<f32>, Vec<i64>) {
    let n = batch.len() * 2;
    let mut tensor = BatchTensor::zeros(n, 2, frames, NUM_JOINTS);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0usize;
    for item in batch {
        for view in [&item.view_a, &item.view_b] {
            debug_assert_eq!(view.len(), frames);
            for (t, frame) in view.frames.iter().enumerate() {
                for (v, joint) in frame.iter().enumerate() {
                    for c in 0..2 {
                        let idx = tensor.index(row, c, t, v);
                        tensor.data[idx] = joint[c] as f32;
                    }
                }
            }
            labels.push(item.label);
            row += 1;
        }
    }
    (tensor, labels)
}

struct Adam {
    m: ModelParams<f32>,
    v: ModelParams<f32>,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams<f32>) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams<f32>, grads: &ModelParams<f32>, cfg: &TrainConfig) {
        self.t += 1;
        let bias1 = 1.0 - cfg.beta1.powi(self.t);
        let bias2 = 1.0 - cfg.beta2.powi(self.t);
        for ((p, m), (v, g)) in params
            .slices_mut()
            .into_iter()
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut().into_iter().zip(grads.slices()))
        {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams<f32>,
    /// Per-step loss.
    pub loss_curve: Vec<f64>,
}

/// Optimize the embedding network on a labeled sequence store.
pub fn train(
    store: &SequenceStore,
    model_cfg: &ModelConfig,
    aug_cfg: &AugmentConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    let graph = build_graph(&model_cfg.graph)?;
    let mut params = init_params(model_cfg, derive_seed(train_cfg.seed, 0x1217));
    let mut adam = Adam::new(&params);
    let mut batch_rng = DetRng::new(derive_seed(train_cfg.seed, 0xba7c4));
    let loss_cfg = LossConfig {
        temperature: train_cfg.temperature,
    };
    let d = model_cfg.embedding_dim;
    let mut loss_curve = Vec::with_capacity(train_cfg.steps);

    for step in 0..train_cfg.steps {
        let batch = sample_batch(store, train_cfg, aug_cfg, &mut batch_rng)?;
        let (tensor, labels) = batch_to_tensor(&batch, model_cfg.frames);
        let items: Vec<BatchTensor<f32>> = (0..tensor.n).map(|i| tensor.item(i)).collect();
        let traces = items
            .par_iter()
            .map(|item| forward_traced(&params, &graph, model_cfg, item))
            .collect::<Result<Vec<_>, _>>()?;

        let mut z64 = Vec::with_capacity(tensor.n * d);
        for trace in &traces {
            z64.extend(trace.embeddings().data.iter().map(|&x| x as f64));
        }
        let out = supcon_loss(&EmbeddingBatch::new(z64, labels, d), &loss_cfg)?;
        assert!(
            out.loss.is_finite(),
            "non-finite loss at step {step}: {}",
            out.loss
        );
        loss_curve.push(out.loss);

        let item_grads: Vec<ModelParams<f32>> = traces
            .par_iter()
            .enumerate()
            .map(|(i, trace)| {
                let upstream = Embeddings {
                    data: out.grad[i * d..(i + 1) * d]
                        .iter()
                        .map(|&x| x as f32)
                        .collect(),
                    n: 1,
                    d,
                };
                backward_with_trace(&params, &graph, model_cfg, trace, &upstream)
            })
            .collect();
        // fixed reduction order: item 0, 1, 2, ...
        let mut total = params.zeros_like();
        for g in &item_grads {
            total.add_assign(g);
        }
        adam.step(&mut params, &total, train_cfg);
    }
    Ok(TrainOutput { params, loss_curve })
}

/// Embedding table for a store: one row per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: Vec<f32>,
    pub labels: Vec<i64>,
    pub track_ids: Vec<u64>,
    pub n: usize,
    pub d: usize,
}

impl EmbeddingTable {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }
}

/// Deterministic evaluation window: the center `len` frames (tiled from the
/// start when the sequence is shorter). No random augmentation.
pub fn center_window(ns: &NormalizedSequence, len: usize) -> NormalizedSequence {
    let t = ns.len();
    let frames = if t >= len {
        let start = (t - len) / 2;
        ns.frames[start..start + len].to_vec()
    } else {
        (0..len).map(|i| ns.frames[i % t]).collect()
    };
    NormalizedSequence {
        frames,
        source_track_id: ns.source_track_id,
    }
}

/// Pack one sequence into a single-item model input tensor.
pub fn sequence_to_tensor(ns: &NormalizedSequence, frames: usize) -> BatchTensor<f32> {
    debug_assert_eq!(ns.len(), frames);
    let mut tensor = BatchTensor::zeros(1, 2, frames, NUM_JOINTS);
    for (t, frame) in ns.frames.iter().enumerate() {
        for (v, joint) in frame.iter().enumerate() {
            for c in 0..2 {
                let idx = tensor.index(0, c, t, v);
                tensor.data[idx] = joint[c] as f32;
            }
        }
    }
    tensor
}

/// Embed every sequence from its center window.
pub fn embed_store(
    params: &ModelParams<f32>,
    model_cfg: &ModelConfig,
    store: &SequenceStore,
) -> EmbeddingTable {
    let graph = build_graph(&model_cfg.graph).expect("valid graph config");
    let d = model_cfg.embedding_dim;
    let rows: Vec<(i64, u64, Vec<f32>)> = store
        .items
        .par_iter()
        .map(|(label, ns)| {
            let window = center_window(ns, model_cfg.frames);
            let tensor = sequence_to_tensor(&window, model_cfg.frames);
            let z = forward(params, &graph, model_cfg, &tensor).expect("shape-checked input");
            (*label, ns.source_track_id, z.data)
        })
        .collect();
    let mut table = EmbeddingTable {
        vectors: Vec::with_capacity(rows.len() * d),
        labels: Vec::with_capacity(rows.len()),
        track_ids: Vec::with_capacity(rows.len()),
        n: rows.len(),
        d,
    };
    for (label, track_id, z) in rows {
        table.vectors.extend_from_slice(&z);
        table.labels.push(label);
        table.track_ids.push(track_id);
    }
    table
}

/// Fraction of probes whose top-k cosine-nearest gallery rows include a
/// matching label; ties broken by lower gallery index.
pub fn rank_k(gallery: &EmbeddingTable, probe: &EmbeddingTable, k: usize) -> Result<f64, EvalError> {
    if gallery.n == 0 {
        return Err(EvalError::EmptyGallery);
    }
    if probe.n == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for pi in 0..probe.n {
        let top = top_k_indices(gallery, probe.row(pi), k);
        if top.iter().any(|&gi| gallery.labels[gi] == probe.labels[pi]) {
            hits += 1;
        }
    }
    Ok(hits as f64 / probe.n as f64)
}

fn top_k_indices(gallery: &EmbeddingTable, probe_row: &[f32], k: usize) -> Vec<usize> {
    let mut sims: Vec<(f64, usize)> = (0..gallery.n)
        .map(|gi| {
            let dot: f64 = gallery
                .row(gi)
                .iter()
                .zip(probe_row)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            (dot, gi)
        })
        .collect();
    sims.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite sims").then(a.1.cmp(&b.1)));
    sims.into_iter().take(k).map(|(_, gi)| gi).collect()
}

/// Retrieval summary: rank-1/rank-5 plus each probe's nearest gallery row.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub rank1: f64,
    pub rank5: f64,
    /// (probe index, nearest gallery index).
    pub per_probe_nearest: Vec<(usize, usize)>,
}

pub fn evaluate(gallery: &EmbeddingTable, probe: &EmbeddingTable) -> Result<RetrievalResult, EvalError> {
    if gallery.n == 0 {
        return Err(EvalError::EmptyGallery);
    }
    let rank1 = rank_k(gallery, probe, 1)?;
    let rank5 = rank_k(gallery, probe, 5)?;
    let per_probe_nearest = (0..probe.n)
        .map(|pi| (pi, top_k_indices(gallery, probe.row(pi), 1)[0]))
        .collect();
    Ok(RetrievalResult {
        rank1,
        rank5,
        per_probe_nearest,
    })
}

/// One duration-histogram bin: `start <= frames < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistBin {
    pub start_frames: u64,
    pub end_frames: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub id_count: usize,
    pub total_walk_hours: f64,
    pub avg_run_length: f64,
    pub histogram: Vec<HistBin>,
}

/// Aggregate store statistics at a common fps; histogram over track
/// durations with the given bin width in frames.
pub fn dataset_stats(store: &TrackletStore, fps: f64, bin_width: usize) -> DatasetStats {
    assert!(fps > 0.0 && bin_width > 0);
    let id_count = store.entries.len();
    let total_frames: u64 = store.entries.iter().map(|e| e.tracklet.len() as u64).sum();
    let total_walk_hours = total_frames as f64 / fps / 3600.0;
    let avg_run_length = if id_count == 0 {
        0.0
    } else {
        total_frames as f64 / id_count as f64
    };
    let mut histogram = Vec::new();
    if id_count > 0 {
        let max_len = store
            .entries
            .iter()
            .map(|e| e.tracklet.len())
            .max()
            .unwrap();
        let bins = max_len / bin_width + 1;
        let mut counts = vec![0u64; bins];
        for e in &store.entries {
            counts[e.tracklet.len() / bin_width] += 1;
        }
        for (b, &count) in counts.iter().enumerate() {
            histogram.push(HistBin {
                start_frames: (b * bin_width) as u64,
                end_frames: ((b + 1) * bin_width) as u64,
                count,
            });
        }
    }
    DatasetStats {
        id_count,
        total_walk_hours,
        avg_run_length,
        histogram,
    }
}
