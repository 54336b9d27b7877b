//! Shared fixtures for the pipeline benchmarks.

use gait_core::skeleton::NormalizedSequence;
use gait_core::synth::{generate_synthetic_walkers, SynthConfig};
use gait_core::train::{SequenceStore, TrackletStore};

/// A small deterministic store of synthetic walkers.
pub fn bench_store(n_ids: usize, frames: usize) -> TrackletStore {
    generate_synthetic_walkers(&SynthConfig {
        n_ids,
        runs_per_id: 1,
        frames,
        fps: 24.0,
        seed: 42,
    })
}

/// Normalized sequences for the same store.
pub fn bench_sequences(n_ids: usize, frames: usize) -> SequenceStore {
    SequenceStore::from_tracklets(&bench_store(n_ids, frames))
}

/// One normalized sequence.
pub fn bench_sequence(frames: usize) -> NormalizedSequence {
    bench_sequences(1, frames).items.remove(0).1
}
