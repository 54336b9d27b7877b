// temporary tuning harness for the synthetic retrieval benchmark
use std::time::Instant;

use gait_core::augment::AugmentConfig;
use gait_core::model::{init_params, ModelConfig};
use gait_core::rng::derive_seed;
use gait_core::synth::{generate_synthetic_walkers, SynthConfig};
use gait_core::train::{
    embed_store, rank_k, train, SequenceStore, TrackletStore, TrainConfig,
};

fn subset(store: &TrackletStore, keep: impl Fn(u32) -> bool) -> TrackletStore {
    TrackletStore {
        entries: store
            .entries
            .iter()
            .filter(|e| keep(e.run))
            .cloned()
            .collect(),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let ids_per_batch: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8);

    let synth_cfg = SynthConfig {
        n_ids: 32,
        runs_per_id: 4,
        frames: 108,
        fps: 24.0,
        seed,
    };
    let store = generate_synthetic_walkers(&synth_cfg);
    let train_store = SequenceStore::from_tracklets(&subset(&store, |r| r == 0));
    let gallery_store = train_store.clone();
    let probe_store = SequenceStore::from_tracklets(&subset(&store, |r| r != 0));
    println!("train {} gallery {} probe {}", train_store.len(), gallery_store.len(), probe_store.len());

    let model_cfg = ModelConfig::default();
    let aug_cfg = match args.get(4).map(|s| s.as_str()) {
        Some("light") => AugmentConfig {
            p_flip: 0.0,
            p_mirror: 0.0,
            p_joint_drop: 0.05,
            ..AugmentConfig::default()
        },
        _ => AugmentConfig::default(),
    };
    let train_cfg = TrainConfig { steps, seed, ids_per_batch, ..TrainConfig::default() };

    // untrained baseline
    let t0 = Instant::now();
    let untrained = init_params(&model_cfg, derive_seed(seed, 0x1217));
    let g0 = embed_store(&untrained, &model_cfg, &gallery_store);
    let p0 = embed_store(&untrained, &model_cfg, &probe_store);
    let baseline = rank_k(&g0, &p0, 1).unwrap();
    println!("untrained rank-1 {baseline:.4}  ({:.1?})", t0.elapsed());

    let t1 = Instant::now();
    let out = train(&train_store, &model_cfg, &aug_cfg, &train_cfg).unwrap();
    let train_time = t1.elapsed();
    for (i, chunk) in out.loss_curve.chunks(50).enumerate() {
        let mean: f64 = chunk.iter().sum::<f64>() / chunk.len() as f64;
        print!("[{}..]={mean:.3} ", i * 50);
    }
    println!();
    let first: f64 = out.loss_curve.iter().take(50).sum::<f64>() / 50.0f64.min(out.loss_curve.len() as f64);
    let last: f64 = out.loss_curve.iter().rev().take(50).sum::<f64>() / 50.0f64.min(out.loss_curve.len() as f64);
    println!("train {steps} steps in {train_time:.1?} ({:.0} ms/step), loss {first:.4} -> {last:.4}",
             train_time.as_millis() as f64 / steps as f64);

    let g = embed_store(&out.params, &model_cfg, &gallery_store);
    let p = embed_store(&out.params, &model_cfg, &probe_store);
    let r1 = rank_k(&g, &p, 1).unwrap();
    let r5 = rank_k(&g, &p, 5).unwrap();
    println!("trained rank-1 {r1:.4} rank-5 {r5:.4}");
}
