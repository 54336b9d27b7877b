//! Linear assignment between tracks and detections.
//!
//! `hungarian_max` solves the rectangular assignment problem exactly in
//! O(n^3) (potentials + augmenting paths, minimizing negated weights).
//! `greedy_max` is the bounded-latency fallback used for very crowded
//! frames: it scans pairs in decreasing-weight order.

/// Exact maximum-weight one-to-one assignment on an `n_rows x n_cols`
/// weight matrix (row-major). Returns `assigned[row] = Some(col)`.
/// Every row of the smaller side gets assigned (weights are assumed
/// nonnegative; zero-weight pads fill the rectangle internally).
pub fn hungarian_max(weights: &[f64], n_rows: usize, n_cols: usize) -> Vec<Option<usize>> {
    assert_eq!(weights.len(), n_rows * n_cols);
    if n_rows == 0 || n_cols == 0 {
        return vec![None; n_rows];
    }
    let n = n_rows.max(n_cols);
    // Square cost matrix, minimizing -weight; pads cost 0.
    let mut cost = vec![0.0f64; n * n];
    for r in 0..n_rows {
        for c in 0..n_cols {
            cost[r * n + c] = -weights[r * n_cols + c];
        }
    }

    // Potentials-based Hungarian algorithm on the square matrix
    // (1-indexed internally).
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[col] = row matched to col
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assigned = vec![None; n_rows];
    for j in 1..=n {
        let r = p[j];
        if r >= 1 && r <= n_rows && j <= n_cols {
            assigned[r - 1] = Some(j - 1);
        }
    }
    assigned
}

/// Greedy maximum-weight matching: pairs in decreasing weight order,
/// ties broken by (row, col). Only pairs with weight > 0 are considered.
pub fn greedy_max(weights: &[f64], n_rows: usize, n_cols: usize) -> Vec<Option<usize>> {
    assert_eq!(weights.len(), n_rows * n_cols);
    let mut pairs: Vec<(usize, usize)> = (0..n_rows)
        .flat_map(|r| (0..n_cols).map(move |c| (r, c)))
        .filter(|&(r, c)| weights[r * n_cols + c] > 0.0)
        .collect();
    pairs.sort_by(|&(r1, c1), &(r2, c2)| {
        let w1 = weights[r1 * n_cols + c1];
        let w2 = weights[r2 * n_cols + c2];
        w2.partial_cmp(&w1)
            .expect("finite weights")
            .then(r1.cmp(&r2))
            .then(c1.cmp(&c2))
    });
    let mut assigned = vec![None; n_rows];
    let mut col_used = vec![false; n_cols];
    let mut row_used = vec![false; n_rows];
    for (r, c) in pairs {
        if !row_used[r] && !col_used[c] {
            assigned[r] = Some(c);
            row_used[r] = true;
            col_used[c] = true;
        }
    }
    assigned
}
