//! The 17-node skeleton graph and its partitioned, normalized adjacency.
//!
//! Spatial graph convolutions aggregate neighbor features through K
//! adjacency matrices. The default partitioning (K = 3) splits, per node,
//! its closed neighborhood by hop distance from the hip-center node set
//! {11, 12}: self/same-distance edges, centripetal edges (neighbor closer to
//! the hips) and centrifugal edges (neighbor farther). The unnormalized
//! partitions sum exactly to A + I; each partition is then scaled as
//! lambda^-1/2 * A_k * lambda^-1/2 with the per-row degree floored at 1.

use thiserror::Error;

use crate::skeleton::NUM_JOINTS;

/// Default bone list over COCO-17.
pub const COCO_BONES: [(usize, usize); 18] = [
    (0, 1),
    (0, 2), // nose - eyes
    (1, 3),
    (2, 4), // eyes - ears
    (5, 7),
    (7, 9), // left arm
    (6, 8),
    (8, 10), // right arm
    (11, 13),
    (13, 15), // left leg
    (12, 14),
    (14, 16), // right leg
    (5, 6),  // shoulder - shoulder
    (11, 12), // hip - hip
    (5, 11),
    (6, 12), // shoulder - hip, same side
    (0, 5),
    (0, 6), // nose - shoulder midline
];

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    pub edges: Vec<(usize, usize)>,
    /// Number of adjacency partitions; 1 collapses to A + I, 3 is the
    /// distance partitioning described above.
    pub partitions: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            edges: COCO_BONES.to_vec(),
            partitions: 3,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a node outside 0..{NUM_JOINTS}")]
    InvalidGraph(usize, usize),
    #[error("partitions must be 1 or 3, got {0}")]
    InvalidPartitions(usize),
}

/// Partitioned, normalized adjacency stack for the skeleton graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub num_nodes: usize,
    /// Dense row-major V x V matrices, one per partition.
    pub partitions: Vec<Vec<f64>>,
    /// Sparse (row, col, weight) triplets per partition, row-major order;
    /// what the convolution kernels iterate.
    pub sparse: Vec<Vec<(usize, usize, f64)>>,
}

impl GraphSpec {
    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }
}

/// Build the partitioned adjacency from a bone list.
pub fn build_graph(config: &GraphConfig) -> Result<GraphSpec, GraphError> {
    let v = NUM_JOINTS;
    for &(a, b) in &config.edges {
        if a >= v || b >= v {
            return Err(GraphError::InvalidGraph(a, b));
        }
    }
    if config.partitions != 1 && config.partitions != 3 {
        return Err(GraphError::InvalidPartitions(config.partitions));
    }

    let mut adj = vec![false; v * v];
    for &(a, b) in &config.edges {
        adj[a * v + b] = true;
        adj[b * v + a] = true;
    }

    // hop distance from the hip-center set; unreachable stays None and
    // compares equal to other unreachable nodes
    let mut dist: Vec<Option<u32>> = vec![None; v];
    let mut queue = std::collections::VecDeque::new();
    for root in [11usize, 12] {
        dist[root] = Some(0);
        queue.push_back(root);
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for w in 0..v {
            if adj[u * v + w] && dist[w].is_none() {
                dist[w] = Some(du + 1);
                queue.push_back(w);
            }
        }
    }

    let k = config.partitions;
    let mut parts = vec![vec![0.0f64; v * v]; k];
    for node in 0..v {
        parts[0][node * v + node] = 1.0; // self loop
    }
    for row in 0..v {
        for col in 0..v {
            if !adj[row * v + col] {
                continue;
            }
            let slot = if k == 1 {
                0
            } else {
                match (dist[row], dist[col]) {
                    (Some(dr), Some(dc)) if dc < dr => 1, // centripetal
                    (Some(dr), Some(dc)) if dc > dr => 2, // centrifugal
                    _ => 0,                               // same distance (or both unreachable)
                }
            };
            parts[slot][row * v + col] = 1.0;
        }
    }

    // symmetric normalization with row-degree floor 1
    let mut normalized = Vec::with_capacity(k);
    for part in &parts {
        let mut degree = vec![0.0f64; v];
        for row in 0..v {
            degree[row] = part[row * v..(row + 1) * v].iter().sum::<f64>().max(1.0);
        }
        let mut out = vec![0.0f64; v * v];
        for row in 0..v {
            for col in 0..v {
                let a = part[row * v + col];
                if a != 0.0 {
                    out[row * v + col] = a / (degree[row] * degree[col]).sqrt();
                }
            }
        }
        normalized.push(out);
    }

    let sparse = normalized
        .iter()
        .map(|m| {
            let mut triplets = Vec::new();
            for row in 0..v {
                for col in 0..v {
                    let w = m[row * v + col];
                    if w != 0.0 {
                        triplets.push((row, col, w));
                    }
                }
            }
            triplets
        })
        .collect();

    Ok(GraphSpec {
        num_nodes: v,
        partitions: normalized,
        sparse,
    })
}
