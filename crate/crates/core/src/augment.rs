//! Random augmentation of normalized gait sequences.
//!
//! Training consumes fixed-length 54-frame views. A view is built by
//! sampling a window whose length encodes the pace factor, resampling it to
//! the window length, then optionally shuffling segments, squeezing,
//! temporally flipping, mirroring left/right, and dropping joints/frames.
//! Everything is a pure function of (sequence, config, rng stream).

use thiserror::Error;

use crate::rng::DetRng;
use crate::skeleton::{joints, NormalizedFrame, NormalizedSequence, NUM_JOINTS};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Frames per training view; about two gait cycles at 24 fps.
    pub window_len: usize,
    /// Pace (time dilation/contraction) factors, sampled uniformly.
    pub pace_factors: Vec<f64>,
    /// Number of near-equal contiguous segments to permute.
    pub shuffle_segments: usize,
    /// Uniform range for the X squeeze factor.
    pub squeeze_range: (f64, f64),
    pub p_shuffle: f64,
    pub p_squeeze: f64,
    pub p_flip: f64,
    pub p_mirror: f64,
    /// Per joint-frame zeroing probability.
    pub p_joint_drop: f64,
    /// Per frame predecessor-repetition probability.
    pub p_frame_drop: f64,
    /// Base seed mixed with per-sequence tags when deriving view streams.
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            window_len: 54,
            pace_factors: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            shuffle_segments: 3,
            squeeze_range: (0.8, 1.2),
            p_shuffle: 0.5,
            p_squeeze: 0.5,
            p_flip: 0.5,
            p_mirror: 0.5,
            p_joint_drop: 0.1,
            p_frame_drop: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("cannot sample a window from an empty sequence")]
    EmptySequence,
    #[error("sequence too short to resample ({len} frames, need at least 2)")]
    TooShort { len: usize },
}

fn with_frames(ns: &NormalizedSequence, frames: Vec<NormalizedFrame>) -> NormalizedSequence {
    NormalizedSequence {
        frames,
        source_track_id: ns.source_track_id,
    }
}

/// Uniform-random contiguous window of exactly `len` frames. Shorter
/// sequences are tiled from the start (frames 0, 1, ..., T-1, 0, 1, ...).
pub fn sample_window(
    ns: &NormalizedSequence,
    len: usize,
    rng: &mut DetRng,
) -> Result<NormalizedSequence, AugmentError> {
    if ns.is_empty() {
        return Err(AugmentError::EmptySequence);
    }
    let t = ns.len();
    let frames = if t >= len {
        let start = rng.below(t - len + 1);
        ns.frames[start..start + len].to_vec()
    } else {
        (0..len).map(|i| ns.frames[i % t]).collect()
    };
    Ok(with_frames(ns, frames))
}

/// Per-joint, per-coordinate 1-D linear resampling. Output frame `i` reads
/// the input at continuous time `i * factor * (T-1) / (out_len-1)`, clamped
/// to `[0, T-1]`.
pub fn pace_resample(
    ns: &NormalizedSequence,
    factor: f64,
    out_len: usize,
) -> Result<NormalizedSequence, AugmentError> {
    assert!(factor > 0.0, "pace factor must be positive");
    if ns.len() < 2 {
        return Err(AugmentError::TooShort { len: ns.len() });
    }
    let t = ns.len();
    let max_pos = (t - 1) as f64;
    let mut frames = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = if out_len == 1 {
            0.0
        } else {
            (i as f64 * factor * max_pos / (out_len - 1) as f64).clamp(0.0, max_pos)
        };
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(t - 1);
        let frac = pos - lo as f64;
        let mut frame = [[0.0; 2]; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            for c in 0..2 {
                let (a, b) = (ns.frames[lo][j][c], ns.frames[hi][j][c]);
                frame[j][c] = a + (b - a) * frac;
            }
        }
        frames.push(frame);
    }
    Ok(with_frames(ns, frames))
}

/// Split into `k` near-equal contiguous segments and permute their order
/// uniformly at random. Frame content is untouched.
pub fn shuffle_segments(ns: &NormalizedSequence, k: usize, rng: &mut DetRng) -> NormalizedSequence {
    let t = ns.len();
    let k = k.clamp(1, t.max(1));
    let mut order: Vec<usize> = (0..k).collect();
    rng.shuffle(&mut order);
    let bound = |s: usize| s * t / k;
    let mut frames = Vec::with_capacity(t);
    for s in order {
        frames.extend_from_slice(&ns.frames[bound(s)..bound(s + 1)]);
    }
    with_frames(ns, frames)
}

/// Left-right reflection: negate X and swap paired left/right joints.
pub fn mirror(ns: &NormalizedSequence) -> NormalizedSequence {
    let frames = ns
        .frames
        .iter()
        .map(|f| {
            let mut out = *f;
            for (l, r) in joints::LR_PAIRS {
                out.swap(l, r);
            }
            for j in out.iter_mut() {
                j[0] = -j[0];
            }
            out
        })
        .collect();
    with_frames(ns, frames)
}

/// Temporal reversal.
pub fn flip(ns: &NormalizedSequence) -> NormalizedSequence {
    let mut frames = ns.frames.clone();
    frames.reverse();
    with_frames(ns, frames)
}

/// Scale all X coordinates by `s`; Y is untouched.
pub fn squeeze(ns: &NormalizedSequence, s: f64) -> NormalizedSequence {
    let frames = ns
        .frames
        .iter()
        .map(|f| {
            let mut out = *f;
            for j in out.iter_mut() {
                j[0] *= s;
            }
            out
        })
        .collect();
    with_frames(ns, frames)
}

/// Random joint and frame dropout. Frames (except the first) are replaced by
/// their predecessor in the already-processed output with probability
/// `p_frame`; then each joint-frame is independently zeroed with probability
/// `p_joint`. Length is unchanged.
pub fn dropout(
    ns: &NormalizedSequence,
    p_joint: f64,
    p_frame: f64,
    rng: &mut DetRng,
) -> NormalizedSequence {
    let mut frames = ns.frames.clone();
    for t in 1..frames.len() {
        if rng.unit_f64() < p_frame {
            frames[t] = frames[t - 1];
        }
    }
    for frame in frames.iter_mut() {
        for j in frame.iter_mut() {
            if rng.unit_f64() < p_joint {
                *j = [0.0, 0.0];
            }
        }
    }
    with_frames(ns, frames)
}

/// Build one augmented view. Draw order is fixed: pace factor, window start,
/// shuffle gate (+permutation), squeeze gate (+factor), flip gate, mirror
/// gate, frame drops, joint drops.
pub fn make_view(
    ns: &NormalizedSequence,
    cfg: &AugmentConfig,
    rng: &mut DetRng,
) -> Result<NormalizedSequence, AugmentError> {
    let factor = cfg.pace_factors[rng.below(cfg.pace_factors.len())];
    let win_len = ((cfg.window_len as f64 * factor).round() as usize).max(2);
    let window = sample_window(ns, win_len, rng)?;
    let mut view = pace_resample(&window, 1.0, cfg.window_len)?;
    if rng.unit_f64() < cfg.p_shuffle {
        view = shuffle_segments(&view, cfg.shuffle_segments, rng);
    }
    if rng.unit_f64() < cfg.p_squeeze {
        let s = rng.range_f64(cfg.squeeze_range.0, cfg.squeeze_range.1);
        view = squeeze(&view, s);
    }
    if rng.unit_f64() < cfg.p_flip {
        view = flip(&view);
    }
    if rng.unit_f64() < cfg.p_mirror {
        view = mirror(&view);
    }
    Ok(dropout(&view, cfg.p_joint_drop, cfg.p_frame_drop, rng))
}

/// Two independently augmented views of the same sequence.
pub fn make_views(
    ns: &NormalizedSequence,
    cfg: &AugmentConfig,
    rng: &mut DetRng,
) -> Result<(NormalizedSequence, NormalizedSequence), AugmentError> {
    let a = make_view(ns, cfg, rng)?;
    let b = make_view(ns, cfg, rng)?;
    Ok((a, b))
}
