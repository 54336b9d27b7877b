//! Supervised contrastive loss over labeled unit-norm embeddings.
//!
//! For anchor i with positive set P(i) (same label, excluding i):
//!
//! ```text
//! L = mean_i  -1/|P(i)| * sum_{p in P(i)} log( exp(z_i.z_p / tau)
//!                                             / sum_{a != i} exp(z_i.z_a / tau) )
//! ```
//!
//! The per-anchor normalization sits outside the log (the variant that
//! trains better in the literature). Logits are stabilized by subtracting
//! the per-anchor maximum before exponentiation, which matters at the
//! default temperature 0.01 where raw logits reach +/-100. All math is in
//! f64; callers with f32 embeddings convert at the boundary.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { temperature: 0.01 }
    }
}

/// N x D embeddings with one identity label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub vectors: Vec<f64>,
    pub labels: Vec<i64>,
    pub n: usize,
    pub d: usize,
}

impl EmbeddingBatch {
    pub fn new(vectors: Vec<f64>, labels: Vec<i64>, d: usize) -> Self {
        assert_eq!(vectors.len(), labels.len() * d, "vector/label shape mismatch");
        let n = labels.len();
        EmbeddingBatch {
            vectors,
            labels,
            n,
            d,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    /// Max deviation of any row norm from 1.
    pub fn max_norm_error(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let norm: f64 = self.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                (norm - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SupConError {
    #[error("label {label} appears only once; every anchor needs a positive")]
    NoPositive { label: i64 },
    #[error("batch needs at least 2 embeddings, got {0}")]
    BatchTooSmall(usize),
}

#[derive(Debug, Clone)]
pub struct SupConOutput {
    pub loss: f64,
    /// dL/dz, N x D row-major.
    pub grad: Vec<f64>,
}

pub fn supcon_loss(batch: &EmbeddingBatch, cfg: &LossConfig) -> Result<SupConOutput, SupConError> {
    assert!(cfg.temperature > 0.0, "temperature must be positive");
    let (n, d) = (batch.n, batch.d);
    if n < 2 {
        return Err(SupConError::BatchTooSmall(n));
    }
    for i in 0..n {
        if !batch.labels.iter().enumerate().any(|(j, &l)| j != i && l == batch.labels[i]) {
            return Err(SupConError::NoPositive {
                label: batch.labels[i],
            });
        }
    }

    // logits[i][a] = z_i . z_a / tau
    let inv_tau = 1.0 / cfg.temperature;
    let mut logits = vec![0.0f64; n * n];
    for i in 0..n {
        for a in (i + 1)..n {
            let dot: f64 = batch.row(i).iter().zip(batch.row(a)).map(|(x, y)| x * y).sum();
            logits[i * n + a] = dot * inv_tau;
            logits[a * n + i] = dot * inv_tau;
        }
    }

    let mut loss = 0.0f64;
    // g[i][a] = d(total unaveraged loss)/d(logit_ia), a != i
    let mut g = vec![0.0f64; n * n];
    for i in 0..n {
        let row = &logits[i * n..(i + 1) * n];
        let mut max_logit = f64::NEG_INFINITY;
        for a in 0..n {
            if a != i {
                max_logit = max_logit.max(row[a]);
            }
        }
        let mut denom = 0.0f64;
        for a in 0..n {
            if a != i {
                denom += (row[a] - max_logit).exp();
            }
        }
        let lse = max_logit + denom.ln();

        let positives: Vec<usize> = (0..n)
            .filter(|&a| a != i && batch.labels[a] == batch.labels[i])
            .collect();
        let p_count = positives.len() as f64;
        for &p in &positives {
            loss += (lse - row[p]) / p_count;
        }
        for a in 0..n {
            if a == i {
                continue;
            }
            let softmax = (row[a] - lse).exp();
            let mut grad = softmax; // every positive's lse term contributes softmax/|P|, |P| terms total
            if batch.labels[a] == batch.labels[i] {
                grad -= 1.0 / p_count;
            }
            g[i * n + a] = grad;
        }
    }
    loss /= n as f64;

    // dL/dz_j = 1/(N tau) * sum_a g[j][a] z_a  +  1/(N tau) * sum_i g[i][j] z_i
    let scale = inv_tau / n as f64;
    let mut grad = vec![0.0f64; n * d];
    for i in 0..n {
        for a in 0..n {
            if a == i {
                continue;
            }
            let w = g[i * n + a] * scale;
            if w != 0.0 {
                let z_a = batch.row(a);
                let z_i = batch.row(i);
                let g_i = &mut grad[i * d..(i + 1) * d];
                for (gi, &za) in g_i.iter_mut().zip(z_a) {
                    *gi += w * za;
                }
                let g_a = &mut grad[a * d..(a + 1) * d];
                for (ga, &zi) in g_a.iter_mut().zip(z_i) {
                    *ga += w * zi;
                }
            }
        }
    }

    Ok(SupConOutput { loss, grad })
}

/// Compare analytic embedding gradients against central finite differences
/// at step `h`; returns the max relative error over all coordinates.
pub fn supcon_grad_check(batch: &EmbeddingBatch, cfg: &LossConfig, h: f64) -> f64 {
    let analytic = supcon_loss(batch, cfg).expect("valid batch").grad;
    let mut perturbed = batch.clone();
    let mut max_rel = 0.0f64;
    for i in 0..batch.vectors.len() {
        let orig = perturbed.vectors[i];
        perturbed.vectors[i] = orig + h;
        let up = supcon_loss(&perturbed, cfg).expect("valid batch").loss;
        perturbed.vectors[i] = orig - h;
        let down = supcon_loss(&perturbed, cfg).expect("valid batch").loss;
        perturbed.vectors[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-10);
        max_rel = max_rel.max(rel);
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn random_unit_batch(n: usize, d: usize, labels: Vec<i64>, seed: u64) -> EmbeddingBatch {
        let mut rng = DetRng::new(seed);
        let mut vectors = vec![0.0f64; n * d];
        for row in vectors.chunks_exact_mut(d) {
            let mut norm = 0.0;
            for x in row.iter_mut() {
                *x = rng.normal();
                norm += *x * *x;
            }
            let norm = norm.sqrt();
            for x in row.iter_mut() {
                *x /= norm;
            }
        }
        EmbeddingBatch::new(vectors, labels, d)
    }

    fn two_pair_batch() -> EmbeddingBatch {
        // z1 = z2 = (1,0) label 0; z3 = z4 = (0,1) label 1
        EmbeddingBatch::new(
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            vec![0, 0, 1, 1],
            2,
        )
    }

    #[test]
    fn identical_embeddings_give_ln3() {
        for tau in [1.0, 0.1, 0.01] {
            let batch = EmbeddingBatch::new(vec![1.0, 0.0].repeat(4), vec![0, 0, 1, 1], 2);
            let out = supcon_loss(&batch, &LossConfig { temperature: tau }).unwrap();
            assert!(
                (out.loss - 3.0f64.ln()).abs() < 1e-9,
                "tau {tau}: loss {}",
                out.loss
            );
        }
    }

    #[test]
    fn orthogonal_pairs_closed_form() {
        let batch = two_pair_batch();
        let out = supcon_loss(&batch, &LossConfig { temperature: 1.0 }).unwrap();
        let want = (std::f64::consts::E + 2.0).ln() - 1.0; // ~0.5514
        assert!((out.loss - want).abs() < 1e-9, "loss {}", out.loss);
        assert!((out.loss - 0.5514).abs() < 1e-4);

        let out = supcon_loss(&batch, &LossConfig { temperature: 0.01 }).unwrap();
        assert!(out.loss >= 0.0 && out.loss < 1e-10, "loss {}", out.loss);
    }

    #[test]
    fn unique_label_rejected() {
        let batch = EmbeddingBatch::new(vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0], vec![0, 1, 0], 2);
        assert_eq!(
            supcon_loss(&batch, &LossConfig::default()).unwrap_err(),
            SupConError::NoPositive { label: 1 }
        );
    }

    #[test]
    fn grad_check_random_batch() {
        let labels = vec![0, 0, 1, 1, 2, 2, 3, 3];
        for (tau, tol) in [(1.0, 1e-6), (0.1, 1e-6)] {
            let batch = random_unit_batch(8, 16, labels.clone(), 42);
            let err = supcon_grad_check(&batch, &LossConfig { temperature: tau }, 1e-5);
            assert!(err < tol, "tau {tau}: max rel err {err}");
        }
    }

    #[test]
    fn identical_batch_gradients_sum_to_zero() {
        let batch = EmbeddingBatch::new(vec![0.6, 0.8].repeat(4), vec![0, 0, 1, 1], 2);
        let out = supcon_loss(&batch, &LossConfig { temperature: 0.5 }).unwrap();
        let mut total = [0.0f64; 2];
        for row in out.grad.chunks_exact(2) {
            total[0] += row[0];
            total[1] += row[1];
        }
        assert!(total[0].abs() < 1e-9 && total[1].abs() < 1e-9, "{total:?}");
    }

    /// Apply a Givens rotation to all rows.
    fn rotate(batch: &EmbeddingBatch, i: usize, j: usize, theta: f64) -> EmbeddingBatch {
        let mut out = batch.clone();
        let (s, c) = theta.sin_cos();
        for row in out.vectors.chunks_exact_mut(batch.d) {
            let (a, b) = (row[i], row[j]);
            row[i] = c * a - s * b;
            row[j] = s * a + c * b;
        }
        out
    }

    #[test]
    fn rotation_invariance() {
        let labels = vec![0, 0, 1, 1, 2, 2];
        let batch = random_unit_batch(6, 8, labels, 7);
        let cfg = LossConfig { temperature: 0.2 };
        let base = supcon_loss(&batch, &cfg).unwrap();
        let mut rng = DetRng::new(9);
        let mut rotated = batch.clone();
        for _ in 0..20 {
            let i = rng.below(8);
            let mut j = rng.below(8);
            if i == j {
                j = (j + 1) % 8;
            }
            rotated = rotate(&rotated, i, j, rng.range_f64(-3.0, 3.0));
        }
        let out = supcon_loss(&rotated, &cfg).unwrap();
        assert!((out.loss - base.loss).abs() < 1e-9);
        // gradients rotate with the embeddings: norms preserved
        let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm(&out.grad) - norm(&base.grad)).abs() < 1e-9);
    }

    #[test]
    fn permutation_equivariance() {
        let labels = vec![0, 0, 1, 1];
        let batch = random_unit_batch(4, 4, labels, 3);
        let cfg = LossConfig { temperature: 0.5 };
        let base = supcon_loss(&batch, &cfg).unwrap();
        let perm = [2usize, 0, 3, 1];
        let mut vectors = vec![0.0; batch.vectors.len()];
        let mut labels2 = vec![0i64; 4];
        for (dst, &src) in perm.iter().enumerate() {
            vectors[dst * 4..(dst + 1) * 4].copy_from_slice(batch.row(src));
            labels2[dst] = batch.labels[src];
        }
        let out = supcon_loss(&EmbeddingBatch::new(vectors, labels2, 4), &cfg).unwrap();
        assert!((out.loss - base.loss).abs() < 1e-12);
        for (dst, &src) in perm.iter().enumerate() {
            for k in 0..4 {
                assert!((out.grad[dst * 4 + k] - base.grad[src * 4 + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn positivity_on_non_degenerate_batches() {
        for seed in 0..10 {
            let batch = random_unit_batch(8, 8, vec![0, 0, 1, 1, 2, 2, 3, 3], seed);
            let out = supcon_loss(&batch, &LossConfig { temperature: 1.0 }).unwrap();
            assert!(out.loss > 0.0, "seed {seed}: loss {}", out.loss);
        }
    }

    /// Slerp a positive toward its anchor; on these random instances the
    /// loss must not increase.
    #[test]
    fn pulling_positive_closer_does_not_increase_loss() {
        let cfg = LossConfig { temperature: 0.5 };
        for seed in 0..20 {
            let batch = random_unit_batch(8, 8, vec![0, 0, 1, 1, 2, 2, 3, 3], 100 + seed);
            let base = supcon_loss(&batch, &cfg).unwrap().loss;
            // move row 1 slightly toward row 0 (same label) on the sphere
            let mut moved = batch.clone();
            let anchor: Vec<f64> = batch.row(0).to_vec();
            let pos: Vec<f64> = batch.row(1).to_vec();
            let dot: f64 = anchor.iter().zip(&pos).map(|(a, b)| a * b).sum();
            let omega = dot.clamp(-1.0, 1.0).acos();
            let t = 0.02; // small step along the geodesic
            let (sa, sb) = (
                ((1.0 - t) * omega).sin() / omega.sin(),
                (t * omega).sin() / omega.sin(),
            );
            for k in 0..8 {
                moved.vectors[8 + k] = sa * pos[k] + sb * anchor[k];
            }
            let after = supcon_loss(&moved, &cfg).unwrap().loss;
            assert!(
                after <= base + 1e-9,
                "seed {seed}: loss rose {base} -> {after}"
            );
        }
    }
}
