use criterion::{black_box, criterion_group, criterion_main, Criterion};

use gait_bench::{bench_sequence, bench_store};
use gait_core::augment::{make_views, AugmentConfig};
use gait_core::quality::{run_filters, FilterConfig};
use gait_core::rng::DetRng;
use gait_core::skeleton::normalize_tracklet;
use gait_core::synth::synthetic_detection_frames;
use gait_core::tracking::{track_stream, TrackerConfig};

fn bench_normalize(c: &mut Criterion) {
    let store = bench_store(1, 108);
    let tracklet = &store.entries[0].tracklet;
    c.bench_function("normalize_tracklet_108f", |b| {
        b.iter(|| normalize_tracklet(black_box(tracklet)).unwrap())
    });
}

fn bench_filters(c: &mut Criterion) {
    let store = bench_store(1, 108);
    let tracklet = &store.entries[0].tracklet;
    let cfg = FilterConfig::default();
    c.bench_function("run_filters_108f", |b| {
        b.iter(|| run_filters(black_box(tracklet), &cfg))
    });
}

fn bench_tracking(c: &mut Criterion) {
    let (frames, _) = synthetic_detection_frames(3, 120, 5);
    let cfg = TrackerConfig::default();
    c.bench_function("track_stream_3walkers_120f", |b| {
        b.iter(|| track_stream(black_box(frames.clone()), &cfg, "bench", 24.0).unwrap())
    });
}

fn bench_augment(c: &mut Criterion) {
    let ns = bench_sequence(108);
    let cfg = AugmentConfig::default();
    c.bench_function("make_views_108f", |b| {
        b.iter(|| {
            let mut rng = DetRng::new(9);
            make_views(black_box(&ns), &cfg, &mut rng).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_normalize,
    bench_filters,
    bench_tracking,
    bench_augment
);
criterion_main!(benches);
