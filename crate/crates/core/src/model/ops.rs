//! Fixed operator set of the embedding network, with hand-derived
//! reverse-mode gradients.
//!
//! Every operator is generic over the scalar so the whole network can run
//! in 32-bit for training and in a 64-bit shadow mode for gradient
//! checking. Feature maps use an N x T x V x C layout (channels innermost):
//! the hot loops are then contiguous channel-row operations the compiler
//! can vectorize, and results are independent of batch chunking because
//! nothing reduces across batch items.

use crate::graph::GraphSpec;

/// Scalar for network math: `f32` normally, `f64` in shadow mode.
pub trait Real:
    num_traits::Float + std::ops::AddAssign + std::fmt::Debug + Default + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[inline]
fn axpy<F: Real>(y: &mut [F], a: F, x: &[F]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

/// Feature map, `n x t x v x c` row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Feat<F> {
    pub data: Vec<F>,
    pub n: usize,
    pub t: usize,
    pub v: usize,
    pub c: usize,
}

impl<F: Real> Feat<F> {
    pub fn zeros(n: usize, t: usize, v: usize, c: usize) -> Self {
        Feat {
            data: vec![F::zero(); n * t * v * c],
            n,
            t,
            v,
            c,
        }
    }

    #[inline]
    pub fn row(&self, n: usize, t: usize, v: usize) -> &[F] {
        let base = ((n * self.t + t) * self.v + v) * self.c;
        &self.data[base..base + self.c]
    }

    #[inline]
    pub fn row_mut(&mut self, n: usize, t: usize, v: usize) -> &mut [F] {
        let base = ((n * self.t + t) * self.v + v) * self.c;
        &mut self.data[base..base + self.c]
    }

    /// Contiguous `v x c` plane at one (n, t).
    #[inline]
    fn plane(&self, n: usize, t: usize) -> &[F] {
        let base = (n * self.t + t) * self.v * self.c;
        &self.data[base..base + self.v * self.c]
    }

    #[inline]
    fn plane_mut(&mut self, n: usize, t: usize) -> &mut [F] {
        let base = (n * self.t + t) * self.v * self.c;
        &mut self.data[base..base + self.v * self.c]
    }
}

/// Spatial graph convolution: per frame, `Y = sum_k A_k (X W_k)`.
///
/// `weights[k]` is `c_in x c_out` row-major; the adjacency comes from the
/// graph's sparse triplets.
pub fn spatial_forward<F: Real>(
    x: &Feat<F>,
    graph: &GraphSpec,
    weights: &[Vec<F>],
    c_out: usize,
) -> Feat<F> {
    let (n, t, v, c_in) = (x.n, x.t, x.v, x.c);
    debug_assert_eq!(v, graph.num_nodes);
    debug_assert_eq!(weights.len(), graph.num_partitions());
    let mut y = Feat::zeros(n, t, v, c_out);
    let mut scratch = vec![F::zero(); v * c_out];
    let sparse: Vec<Vec<(usize, usize, F)>> = graph
        .sparse
        .iter()
        .map(|trips| {
            trips
                .iter()
                .map(|&(r, c, w)| (r, c, F::from_f64(w)))
                .collect()
        })
        .collect();
    for ni in 0..n {
        for ti in 0..t {
            let x_plane = x.plane(ni, ti);
            let y_plane = y.plane_mut(ni, ti);
            for (w_k, trips) in weights.iter().zip(sparse.iter()) {
                scratch.iter_mut().for_each(|s| *s = F::zero());
                // M = X W_k
                for vi in 0..v {
                    let x_row = &x_plane[vi * c_in..(vi + 1) * c_in];
                    let m_row = &mut scratch[vi * c_out..(vi + 1) * c_out];
                    for (ci, &a) in x_row.iter().enumerate() {
                        axpy(m_row, a, &w_k[ci * c_out..(ci + 1) * c_out]);
                    }
                }
                // Y += A_k M
                for &(r, c, w) in trips {
                    axpy(
                        &mut y_plane[r * c_out..(r + 1) * c_out],
                        w,
                        &scratch[c * c_out..(c + 1) * c_out],
                    );
                }
            }
        }
    }
    y
}

/// Gradients of [`spatial_forward`]: returns (d_input, d_weights).
pub fn spatial_backward<F: Real>(
    x: &Feat<F>,
    graph: &GraphSpec,
    weights: &[Vec<F>],
    c_out: usize,
    d_y: &Feat<F>,
) -> (Feat<F>, Vec<Vec<F>>) {
    let (n, t, v, c_in) = (x.n, x.t, x.v, x.c);
    let k = weights.len();
    let mut d_x = Feat::zeros(n, t, v, c_in);
    let mut d_w = vec![vec![F::zero(); c_in * c_out]; k];
    // transposed weights, c_out x c_in, so the d_x inner loop is an axpy
    let w_t: Vec<Vec<F>> = weights
        .iter()
        .map(|w| {
            let mut wt = vec![F::zero(); c_out * c_in];
            for ci in 0..c_in {
                for co in 0..c_out {
                    wt[co * c_in + ci] = w[ci * c_out + co];
                }
            }
            wt
        })
        .collect();
    let sparse: Vec<Vec<(usize, usize, F)>> = graph
        .sparse
        .iter()
        .map(|trips| {
            trips
                .iter()
                .map(|&(r, c, w)| (r, c, F::from_f64(w)))
                .collect()
        })
        .collect();
    let mut d_m = vec![F::zero(); v * c_out];
    for ni in 0..n {
        for ti in 0..t {
            let x_plane = x.plane(ni, ti);
            let dy_plane = d_y.plane(ni, ti);
            let dx_plane = d_x.plane_mut(ni, ti);
            for ki in 0..k {
                // dM = A_k^T dY
                d_m.iter_mut().for_each(|s| *s = F::zero());
                for &(r, c, w) in &sparse[ki] {
                    axpy(
                        &mut d_m[c * c_out..(c + 1) * c_out],
                        w,
                        &dy_plane[r * c_out..(r + 1) * c_out],
                    );
                }
                // dW_k += X^T dM ; dX += dM W_k^T
                for vi in 0..v {
                    let x_row = &x_plane[vi * c_in..(vi + 1) * c_in];
                    let dm_row = &d_m[vi * c_out..(vi + 1) * c_out];
                    for (ci, &a) in x_row.iter().enumerate() {
                        axpy(&mut d_w[ki][ci * c_out..(ci + 1) * c_out], a, dm_row);
                    }
                    let dx_row = &mut dx_plane[vi * c_in..(vi + 1) * c_in];
                    for (co, &g) in dm_row.iter().enumerate() {
                        axpy(dx_row, g, &w_t[ki][co * c_in..(co + 1) * c_in]);
                    }
                }
            }
        }
    }
    (d_x, d_w)
}

pub fn relu_forward<F: Real>(x: &Feat<F>) -> Feat<F> {
    let mut y = x.clone();
    for v in y.data.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    y
}

pub fn relu_backward<F: Real>(pre_activation: &Feat<F>, d_y: &Feat<F>) -> Feat<F> {
    let mut d_x = d_y.clone();
    for (g, &s) in d_x.data.iter_mut().zip(pre_activation.data.iter()) {
        if s <= F::zero() {
            *g = F::zero();
        }
    }
    d_x
}

/// Temporal convolution over the frame axis, same padding, channel mixing.
/// `kernel` is `tau x c_in x c_out` row-major (here c_in == c_out == x.c).
pub fn temporal_forward<F: Real>(x: &Feat<F>, kernel: &[F], tau: usize) -> Feat<F> {
    let (n, t, v, c) = (x.n, x.t, x.v, x.c);
    debug_assert_eq!(kernel.len(), tau * c * c);
    let pad = tau / 2;
    let mut y = Feat::zeros(n, t, v, c);
    for ni in 0..n {
        for ti in 0..t {
            for dt in 0..tau {
                let src = ti as isize + dt as isize - pad as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let k_plane = &kernel[dt * c * c..(dt + 1) * c * c];
                let x_plane = x.plane(ni, src as usize);
                let y_plane = y.plane_mut(ni, ti);
                for vi in 0..v {
                    let x_row = &x_plane[vi * c..(vi + 1) * c];
                    let y_row = &mut y_plane[vi * c..(vi + 1) * c];
                    for (ci, &a) in x_row.iter().enumerate() {
                        axpy(y_row, a, &k_plane[ci * c..(ci + 1) * c]);
                    }
                }
            }
        }
    }
    y
}

/// Gradients of [`temporal_forward`]: returns (d_input, d_kernel).
pub fn temporal_backward<F: Real>(
    x: &Feat<F>,
    kernel: &[F],
    tau: usize,
    d_y: &Feat<F>,
) -> (Feat<F>, Vec<F>) {
    let (n, t, v, c) = (x.n, x.t, x.v, x.c);
    let pad = tau / 2;
    let mut d_x = Feat::zeros(n, t, v, c);
    let mut d_k = vec![F::zero(); tau * c * c];
    // transposed kernel planes so the d_x inner loop is an axpy over c_in
    let mut k_t = vec![F::zero(); tau * c * c];
    for dt in 0..tau {
        for ci in 0..c {
            for co in 0..c {
                k_t[(dt * c + co) * c + ci] = kernel[(dt * c + ci) * c + co];
            }
        }
    }
    for ni in 0..n {
        for ti in 0..t {
            for dt in 0..tau {
                let src = ti as isize + dt as isize - pad as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let src = src as usize;
                let dy_plane = d_y.plane(ni, ti);
                let x_plane = x.plane(ni, src);
                let dx_plane = d_x.plane_mut(ni, src);
                let dk_plane = &mut d_k[dt * c * c..(dt + 1) * c * c];
                let kt_plane = &k_t[dt * c * c..(dt + 1) * c * c];
                for vi in 0..v {
                    let dy_row = &dy_plane[vi * c..(vi + 1) * c];
                    let x_row = &x_plane[vi * c..(vi + 1) * c];
                    let dx_row = &mut dx_plane[vi * c..(vi + 1) * c];
                    for (co, &g) in dy_row.iter().enumerate() {
                        axpy(dx_row, g, &kt_plane[co * c..(co + 1) * c]);
                    }
                    for (ci, &a) in x_row.iter().enumerate() {
                        axpy(&mut dk_plane[ci * c..(ci + 1) * c], a, dy_row);
                    }
                }
            }
        }
    }
    (d_x, d_k)
}

/// Per-channel affine `y = gamma * x + beta`.
pub fn affine_forward<F: Real>(x: &Feat<F>, gamma: &[F], beta: &[F]) -> Feat<F> {
    let c = x.c;
    let mut y = x.clone();
    for row in y.data.chunks_exact_mut(c) {
        for ((yi, &g), &b) in row.iter_mut().zip(gamma).zip(beta) {
            *yi = g * *yi + b;
        }
    }
    y
}

/// Gradients of [`affine_forward`]: returns (d_input, d_gamma, d_beta).
pub fn affine_backward<F: Real>(
    x: &Feat<F>,
    gamma: &[F],
    d_y: &Feat<F>,
) -> (Feat<F>, Vec<F>, Vec<F>) {
    let c = x.c;
    let mut d_x = d_y.clone();
    let mut d_gamma = vec![F::zero(); c];
    let mut d_beta = vec![F::zero(); c];
    for (dy_row, x_row) in d_y.data.chunks_exact(c).zip(x.data.chunks_exact(c)) {
        for ci in 0..c {
            d_gamma[ci] += dy_row[ci] * x_row[ci];
            d_beta[ci] += dy_row[ci];
        }
    }
    for row in d_x.data.chunks_exact_mut(c) {
        for (gi, &g) in row.iter_mut().zip(gamma) {
            *gi = *gi * g;
        }
    }
    (d_x, d_gamma, d_beta)
}

pub fn add_inplace<F: Real>(y: &mut Feat<F>, x: &Feat<F>) {
    for (yi, &xi) in y.data.iter_mut().zip(x.data.iter()) {
        *yi += xi;
    }
}

/// Global mean pool over (t, v): `n x t x v x c -> n x c`.
pub fn mean_pool<F: Real>(x: &Feat<F>) -> Vec<F> {
    let (n, t, v, c) = (x.n, x.t, x.v, x.c);
    let scale = F::one() / F::from_f64((t * v) as f64);
    let mut out = vec![F::zero(); n * c];
    for ni in 0..n {
        let acc = &mut out[ni * c..(ni + 1) * c];
        for ti in 0..t {
            for row in x.plane(ni, ti).chunks_exact(c) {
                for (a, &xi) in acc.iter_mut().zip(row) {
                    *a += xi;
                }
            }
        }
        for a in acc.iter_mut() {
            *a = *a * scale;
        }
    }
    out
}

pub fn mean_pool_backward<F: Real>(d_g: &[F], n: usize, t: usize, v: usize, c: usize) -> Feat<F> {
    let scale = F::one() / F::from_f64((t * v) as f64);
    let mut d_x = Feat::zeros(n, t, v, c);
    for ni in 0..n {
        let g_row: Vec<F> = d_g[ni * c..(ni + 1) * c].iter().map(|&g| g * scale).collect();
        for ti in 0..t {
            for row in d_x.plane_mut(ni, ti).chunks_exact_mut(c) {
                row.copy_from_slice(&g_row);
            }
        }
    }
    d_x
}

/// Linear projection `p = g W`, `g: n x c`, `w: c x d` row-major.
pub fn linear_forward<F: Real>(g: &[F], w: &[F], n: usize, c: usize, d: usize) -> Vec<F> {
    let mut p = vec![F::zero(); n * d];
    for ni in 0..n {
        let p_row = &mut p[ni * d..(ni + 1) * d];
        for ci in 0..c {
            axpy(p_row, g[ni * c + ci], &w[ci * d..(ci + 1) * d]);
        }
    }
    p
}

/// Gradients of [`linear_forward`]: returns (d_g, d_w).
pub fn linear_backward<F: Real>(
    g: &[F],
    w: &[F],
    n: usize,
    c: usize,
    d: usize,
    d_p: &[F],
) -> (Vec<F>, Vec<F>) {
    let mut d_g = vec![F::zero(); n * c];
    let mut d_w = vec![F::zero(); c * d];
    for ni in 0..n {
        let dp_row = &d_p[ni * d..(ni + 1) * d];
        for ci in 0..c {
            let mut acc = F::zero();
            for (wi, &gi) in w[ci * d..(ci + 1) * d].iter().zip(dp_row) {
                acc += *wi * gi;
            }
            d_g[ni * c + ci] = acc;
            axpy(&mut d_w[ci * d..(ci + 1) * d], g[ni * c + ci], dp_row);
        }
    }
    (d_g, d_w)
}

/// Row-wise L2 normalization with a zero-vector fallback.
///
/// Rows with norm below `eps` emit the first standard basis vector (so
/// retrieval stays well-defined on degenerate inputs) and propagate zero
/// gradient. Returns (normalized, norms, fallback mask).
pub fn l2norm_forward<F: Real>(p: &[F], n: usize, d: usize, eps: F) -> (Vec<F>, Vec<F>, Vec<bool>) {
    let mut z = vec![F::zero(); n * d];
    let mut norms = vec![F::zero(); n];
    let mut fallback = vec![false; n];
    for ni in 0..n {
        let row = &p[ni * d..(ni + 1) * d];
        let mut sq = F::zero();
        for &x in row {
            sq += x * x;
        }
        let norm = sq.sqrt();
        norms[ni] = norm;
        let out = &mut z[ni * d..(ni + 1) * d];
        if norm < eps {
            fallback[ni] = true;
            out[0] = F::one();
        } else {
            for (o, &x) in out.iter_mut().zip(row) {
                *o = x / norm;
            }
        }
    }
    (z, norms, fallback)
}

/// Gradient of [`l2norm_forward`]: `d_p = (d_z - (d_z . z) z) / norm`.
pub fn l2norm_backward<F: Real>(
    z: &[F],
    norms: &[F],
    fallback: &[bool],
    n: usize,
    d: usize,
    d_z: &[F],
) -> Vec<F> {
    let mut d_p = vec![F::zero(); n * d];
    for ni in 0..n {
        if fallback[ni] {
            continue;
        }
        let z_row = &z[ni * d..(ni + 1) * d];
        let g_row = &d_z[ni * d..(ni + 1) * d];
        let mut proj = F::zero();
        for (&g, &zi) in g_row.iter().zip(z_row) {
            proj += g * zi;
        }
        let inv = F::one() / norms[ni];
        for ((o, &g), &zi) in d_p[ni * d..(ni + 1) * d].iter_mut().zip(g_row).zip(z_row) {
            *o = (g - proj * zi) * inv;
        }
    }
    d_p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphConfig};
    use crate::rng::DetRng;

    fn random_feat(n: usize, t: usize, v: usize, c: usize, rng: &mut DetRng) -> Feat<f64> {
        let mut f = Feat::zeros(n, t, v, c);
        for x in f.data.iter_mut() {
            *x = rng.range_f64(-1.0, 1.0);
        }
        f
    }

    #[test]
    fn temporal_conv_fd_check() {
        let mut rng = DetRng::new(1);
        let (n, t, v, c, tau) = (2, 6, 3, 4, 3);
        let x = random_feat(n, t, v, c, &mut rng);
        let mut kernel: Vec<f64> = (0..tau * c * c).map(|_| rng.range_f64(-0.5, 0.5)).collect();
        // loss = sum(y * r) for fixed random r
        let y = temporal_forward(&x, &kernel, tau);
        let r: Vec<f64> = (0..y.data.len()).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let mut d_y = y.clone();
        d_y.data.copy_from_slice(&r);
        let (d_x, d_k) = temporal_backward(&x, &kernel, tau, &d_y);

        let loss = |x: &Feat<f64>, k: &[f64]| -> f64 {
            temporal_forward(x, k, tau)
                .data
                .iter()
                .zip(&r)
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut x2 = x.clone();
        for i in 0..x.data.len() {
            let orig = x2.data[i];
            x2.data[i] = orig + 1e-6;
            let up = loss(&x2, &kernel);
            x2.data[i] = orig - 1e-6;
            let down = loss(&x2, &kernel);
            x2.data[i] = orig;
            let want = (up - down) / 2e-6;
            assert!((d_x.data[i] - want).abs() < 1e-6, "d_x[{i}]");
        }
        for i in 0..kernel.len() {
            let orig = kernel[i];
            kernel[i] = orig + 1e-6;
            let up = loss(&x, &kernel);
            kernel[i] = orig - 1e-6;
            let down = loss(&x, &kernel);
            kernel[i] = orig;
            let want = (up - down) / 2e-6;
            assert!((d_k[i] - want).abs() < 1e-6, "d_k[{i}]");
        }
    }

    #[test]
    fn spatial_conv_fd_check() {
        let mut rng = DetRng::new(2);
        let graph = build_graph(&GraphConfig::default()).unwrap();
        let (n, t, v, c_in, c_out) = (1, 3, 17, 2, 4);
        let x = random_feat(n, t, v, c_in, &mut rng);
        let mut weights: Vec<Vec<f64>> = (0..graph.num_partitions())
            .map(|_| (0..c_in * c_out).map(|_| rng.range_f64(-0.5, 0.5)).collect())
            .collect();
        let y = spatial_forward(&x, &graph, &weights, c_out);
        let r: Vec<f64> = (0..y.data.len()).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let mut d_y = y.clone();
        d_y.data.copy_from_slice(&r);
        let (d_x, d_w) = spatial_backward(&x, &graph, &weights, c_out, &d_y);

        let loss = |x: &Feat<f64>, w: &[Vec<f64>]| -> f64 {
            spatial_forward(x, &graph, w, c_out)
                .data
                .iter()
                .zip(&r)
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut x2 = x.clone();
        for i in 0..x.data.len() {
            let orig = x2.data[i];
            x2.data[i] = orig + 1e-6;
            let up = loss(&x2, &weights);
            x2.data[i] = orig - 1e-6;
            let down = loss(&x2, &weights);
            x2.data[i] = orig;
            let want = (up - down) / 2e-6;
            assert!((d_x.data[i] - want).abs() < 1e-6, "d_x[{i}]");
        }
        for k in 0..weights.len() {
            for i in 0..weights[k].len() {
                let orig = weights[k][i];
                weights[k][i] = orig + 1e-6;
                let up = loss(&x, &weights);
                weights[k][i] = orig - 1e-6;
                let down = loss(&x, &weights);
                weights[k][i] = orig;
                let want = (up - down) / 2e-6;
                assert!((d_w[k][i] - want).abs() < 1e-6, "d_w[{k}][{i}]");
            }
        }
    }

    #[test]
    fn l2norm_gradient_orthogonal_to_output() {
        let mut rng = DetRng::new(3);
        let (n, d) = (6, 8);
        let p: Vec<f64> = (0..n * d).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let (z, norms, fallback) = l2norm_forward(&p, n, d, 1e-12);
        let g: Vec<f64> = (0..n * d).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let d_p = l2norm_backward(&z, &norms, &fallback, n, d, &g);
        for ni in 0..n {
            let dot: f64 = d_p[ni * d..(ni + 1) * d]
                .iter()
                .zip(&z[ni * d..(ni + 1) * d])
                .map(|(a, b)| a * b)
                .sum();
            assert!(dot.abs() < 1e-6, "row {ni} dot {dot}");
        }
    }

    #[test]
    fn l2norm_zero_row_fallback() {
        let p = vec![0.0f64; 4];
        let (z, _, fallback) = l2norm_forward(&p, 1, 4, 1e-12);
        assert!(fallback[0]);
        assert_eq!(z, vec![1.0, 0.0, 0.0, 0.0]);
        let d_p = l2norm_backward(&z, &[0.0], &fallback, 1, 4, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(d_p, vec![0.0; 4]);
    }

    #[test]
    fn mean_pool_roundtrip_gradient() {
        let mut rng = DetRng::new(4);
        let x = random_feat(2, 3, 4, 5, &mut rng);
        let g = mean_pool(&x);
        assert_eq!(g.len(), 2 * 5);
        // pooled mean of channel 0, item 0
        let mut manual = 0.0;
        for ti in 0..3 {
            for vi in 0..4 {
                manual += x.row(0, ti, vi)[0];
            }
        }
        manual /= 12.0;
        assert!((g[0] - manual).abs() < 1e-12);
        let d_g: Vec<f64> = (0..g.len()).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let d_x = mean_pool_backward(&d_g, 2, 3, 4, 5);
        assert!((d_x.row(0, 1, 2)[3] - d_g[3] / 12.0).abs() < 1e-12);
    }

    #[test]
    fn affine_and_relu_gradients() {
        let mut rng = DetRng::new(5);
        let x = random_feat(2, 3, 2, 4, &mut rng);
        let gamma: Vec<f64> = (0..4).map(|_| rng.range_f64(0.5, 1.5)).collect();
        let beta: Vec<f64> = (0..4).map(|_| rng.range_f64(-0.5, 0.5)).collect();
        let y = affine_forward(&x, &gamma, &beta);
        for (row_y, row_x) in y.data.chunks_exact(4).zip(x.data.chunks_exact(4)) {
            for ci in 0..4 {
                assert!((row_y[ci] - (gamma[ci] * row_x[ci] + beta[ci])).abs() < 1e-12);
            }
        }
        let d_y = random_feat(2, 3, 2, 4, &mut rng);
        let (d_x, d_gamma, d_beta) = affine_backward(&x, &gamma, &d_y);
        let mut want_beta = vec![0.0; 4];
        for row in d_y.data.chunks_exact(4) {
            for ci in 0..4 {
                want_beta[ci] += row[ci];
            }
        }
        for ci in 0..4 {
            assert!((d_beta[ci] - want_beta[ci]).abs() < 1e-12);
        }
        assert!((d_x.data[0] - gamma[0] * d_y.data[0]).abs() < 1e-12);
        assert_eq!(d_gamma.len(), 4);

        let r = relu_forward(&x);
        assert!(r.data.iter().all(|&v| v >= 0.0));
        let d_r = relu_backward(&x, &d_y);
        for i in 0..x.data.len() {
            let want = if x.data[i] > 0.0 { d_y.data[i] } else { 0.0 };
            assert_eq!(d_r.data[i], want);
        }
    }

    #[test]
    fn linear_gradients_match_fd() {
        let mut rng = DetRng::new(6);
        let (n, c, d) = (3, 4, 5);
        let g: Vec<f64> = (0..n * c).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let mut w: Vec<f64> = (0..c * d).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let r: Vec<f64> = (0..n * d).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let loss = |g: &[f64], w: &[f64]| -> f64 {
            linear_forward(g, w, n, c, d)
                .iter()
                .zip(&r)
                .map(|(a, b)| a * b)
                .sum()
        };
        let (d_g, d_w) = linear_backward(&g, &w, n, c, d, &r);
        let mut g2 = g.clone();
        for i in 0..g.len() {
            let orig = g2[i];
            g2[i] = orig + 1e-6;
            let up = loss(&g2, &w);
            g2[i] = orig - 1e-6;
            let down = loss(&g2, &w);
            g2[i] = orig;
            assert!((d_g[i] - (up - down) / 2e-6).abs() < 1e-6);
        }
        for i in 0..w.len() {
            let orig = w[i];
            w[i] = orig + 1e-6;
            let up = loss(&g, &w);
            w[i] = orig - 1e-6;
            let down = loss(&g, &w);
            w[i] = orig;
            assert!((d_w[i] - (up - down) / 2e-6).abs() < 1e-6);
        }
    }
}
