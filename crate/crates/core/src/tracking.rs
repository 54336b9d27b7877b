//! Intra-camera multi-object tracking of skeleton detections.
//!
//! SORT-style: a constant-velocity Kalman filter per track over the bounding
//! box (center, area, aspect), IoU association solved exactly with the
//! Hungarian algorithm (greedy fallback for very crowded frames), and simple
//! birth/death rules. Emitted tracklets have consecutive frame indices; short
//! occlusion gaps are filled by repeating the last observed skeleton, which
//! keeps the original confidences so downstream filters still see them.

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use crate::assignment::{greedy_max, hungarian_max};
use crate::skeleton::{Skeleton, Tracklet};

type Vec7 = SVector<f64, 7>;
type Mat7 = SMatrix<f64, 7, 7>;
type Vec4 = SVector<f64, 4>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat4x7 = SMatrix<f64, 4, 7>;

/// Minimum keypoint confidence for a joint to contribute to the detection box.
const BBOX_CONF_FLOOR: f64 = 0.05;

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }
}

/// Intersection-over-union of two boxes; symmetric, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One per-frame skeleton detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_idx: u64,
    pub skeleton: Skeleton,
    pub bbox: BBox,
}

impl Detection {
    /// Bounding box over joints with confidence >= 0.05; if no joint
    /// qualifies, all joints are used.
    pub fn from_skeleton(frame_idx: u64, skeleton: Skeleton) -> Self {
        let confident: Vec<_> = skeleton
            .joints
            .iter()
            .filter(|k| k.confidence >= BBOX_CONF_FLOOR)
            .collect();
        let points: Vec<_> = if confident.is_empty() {
            skeleton.joints.iter().collect()
        } else {
            confident
        };
        let mut bbox = BBox {
            x_min: f64::INFINITY,
            y_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for k in points {
            bbox.x_min = bbox.x_min.min(k.x);
            bbox.y_min = bbox.y_min.min(k.y);
            bbox.x_max = bbox.x_max.max(k.x);
            bbox.y_max = bbox.y_max.max(k.y);
        }
        Detection {
            frame_idx,
            skeleton,
            bbox,
        }
    }
}

// SORT noise model.
fn transition() -> Mat7 {
    let mut f = Mat7::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> Mat4x7 {
    let mut h = Mat4x7::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn process_noise() -> Mat7 {
    Mat7::from_diagonal(&Vec7::from_column_slice(&[
        1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4,
    ]))
}

fn measurement_noise() -> Mat4 {
    Mat4::from_diagonal(&Vec4::from_column_slice(&[1.0, 1.0, 10.0, 10.0]))
}

fn initial_covariance() -> Mat7 {
    Mat7::from_diagonal(&Vec7::from_column_slice(&[
        10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4,
    ]))
}

/// Box -> measurement (cx, cy, area, aspect). Degenerate extents are floored
/// so the aspect stays positive and finite.
fn bbox_to_measurement(b: &BBox) -> Vec4 {
    let w = (b.x_max - b.x_min).max(1e-3);
    let h = (b.y_max - b.y_min).max(1e-3);
    Vec4::from_column_slice(&[
        0.5 * (b.x_min + b.x_max),
        0.5 * (b.y_min + b.y_max),
        w * h,
        w / h,
    ])
}

fn state_to_bbox(x: &Vec7) -> BBox {
    let s = x[2].max(1e-6);
    let r = x[3].max(1e-6);
    let w = (s * r).sqrt();
    let h = s / w;
    BBox {
        x_min: x[0] - 0.5 * w,
        y_min: x[1] - 0.5 * h,
        x_max: x[0] + 0.5 * w,
        y_max: x[1] + 0.5 * h,
    }
}

/// Kalman state of one track: (cx, cy, area, aspect, vcx, vcy, varea) plus
/// bookkeeping counters.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub x: Vec7,
    pub covariance: Mat7,
    pub age: u64,
    pub time_since_update: u64,
    pub hit_streak: u64,
    pub track_id: u64,
}

impl TrackState {
    pub fn new(track_id: u64, bbox: &BBox) -> Self {
        let z = bbox_to_measurement(bbox);
        let mut x = Vec7::zeros();
        for i in 0..4 {
            x[i] = z[i];
        }
        TrackState {
            x,
            covariance: initial_covariance(),
            age: 0,
            time_since_update: 0,
            hit_streak: 0,
            track_id,
        }
    }

    /// Constant-velocity extrapolation; grows the covariance by the process
    /// noise and ages the track.
    pub fn predict(&mut self) {
        // keep the predicted area nonnegative
        if self.x[6] + self.x[2] <= 0.0 {
            self.x[6] = 0.0;
        }
        let f = transition();
        self.x = f * self.x;
        self.covariance = f * self.covariance * f.transpose() + process_noise();
        self.age += 1;
        if self.time_since_update > 0 {
            self.hit_streak = 0;
        }
        self.time_since_update += 1;
    }

    /// Standard Kalman measurement update on (cx, cy, area, aspect), in
    /// Joseph form so the covariance stays symmetric PSD.
    pub fn update(&mut self, bbox: &BBox) {
        let z = bbox_to_measurement(bbox);
        let h = observation();
        let r = measurement_noise();
        let innovation = z - h * self.x;
        let s = h * self.covariance * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance invertible");
        let k = self.covariance * h.transpose() * s_inv;
        self.x += k * innovation;
        let ikh = Mat7::identity() - k * h;
        self.covariance = ikh * self.covariance * ikh.transpose() + k * r * k.transpose();
        self.covariance = 0.5 * (self.covariance + self.covariance.transpose());
        self.time_since_update = 0;
        self.hit_streak += 1;
    }

    pub fn bbox(&self) -> BBox {
        state_to_bbox(&self.x)
    }
}

/// Association outcome between predicted tracks and detections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    pub matched: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Tracker parameters. Defaults follow the usual SORT settings.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub iou_threshold: f64,
    pub max_age: u64,
    pub min_hits: u64,
    /// Above this many tracks the exact solver is swapped for the greedy one.
    pub hungarian_limit: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_threshold: 0.3,
            max_age: 8,
            min_hits: 3,
            hungarian_limit: 64,
        }
    }
}

/// One-to-one assignment maximizing total IoU; pairs below `iou_threshold`
/// are rejected to the unmatched sets.
pub fn associate(
    track_boxes: &[BBox],
    det_boxes: &[BBox],
    iou_threshold: f64,
    hungarian_limit: usize,
) -> Association {
    let n_tracks = track_boxes.len();
    let n_dets = det_boxes.len();
    let mut weights = vec![0.0f64; n_tracks * n_dets];
    for (ti, tb) in track_boxes.iter().enumerate() {
        for (di, db) in det_boxes.iter().enumerate() {
            weights[ti * n_dets + di] = iou(tb, db);
        }
    }
    let assigned = if n_tracks <= hungarian_limit {
        hungarian_max(&weights, n_tracks, n_dets)
    } else {
        greedy_max(&weights, n_tracks, n_dets)
    };
    let mut matched = Vec::new();
    let mut det_taken = vec![false; n_dets];
    let mut unmatched_tracks = Vec::new();
    for (ti, slot) in assigned.iter().enumerate() {
        match slot {
            Some(di) if weights[ti * n_dets + di] >= iou_threshold => {
                matched.push((ti, *di));
                det_taken[*di] = true;
            }
            _ => unmatched_tracks.push(ti),
        }
    }
    let unmatched_detections = (0..n_dets).filter(|&d| !det_taken[d]).collect();
    Association {
        matched,
        unmatched_tracks,
        unmatched_detections,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("frame index decreased: {previous} -> {current}")]
    NonMonotonicFrames { previous: u64, current: u64 },
    #[error("detections within one frame list disagree on frame_idx")]
    MixedFrameIndices,
}

struct Track {
    state: TrackState,
    /// (frame_idx, skeleton) for frames with an associated detection.
    observations: Vec<(u64, Skeleton)>,
    confirmed: bool,
}

impl Track {
    fn finalize(self, camera: &str, fps: f64) -> Option<Tracklet> {
        if !self.confirmed || self.observations.is_empty() {
            return None;
        }
        let start = self.observations[0].0;
        let end = self.observations.last().unwrap().0;
        let mut frames = Vec::with_capacity((end - start + 1) as usize);
        let mut next = self.observations.iter().peekable();
        let mut last: Option<&Skeleton> = None;
        for f in start..=end {
            if let Some((of, skel)) = next.peek() {
                if *of == f {
                    last = Some(skel);
                    next.next();
                }
            }
            frames.push(last.expect("first frame observed").clone());
        }
        Some(Tracklet {
            track_id: self.state.track_id,
            camera: camera.to_string(),
            fps,
            start_frame: start,
            frames,
        })
    }
}

/// Stream tracker: feed per-frame detection lists in increasing frame order,
/// collect identity-consistent tracklets.
pub struct Tracker {
    config: TrackerConfig,
    camera: String,
    fps: f64,
    tracks: Vec<Track>,
    finished: Vec<Tracklet>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig, camera: impl Into<String>, fps: f64) -> Self {
        Tracker {
            config,
            camera: camera.into(),
            fps,
            tracks: Vec::new(),
            finished: Vec::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    /// Process one frame worth of detections. All detections must carry the
    /// same `frame_idx`, strictly greater than the previous frame's.
    pub fn step(&mut self, detections: &[Detection], frame_idx: u64) -> Result<(), TrackingError> {
        if detections.iter().any(|d| d.frame_idx != frame_idx) {
            return Err(TrackingError::MixedFrameIndices);
        }
        if let Some(prev) = self.last_frame {
            if frame_idx <= prev {
                return Err(TrackingError::NonMonotonicFrames {
                    previous: prev,
                    current: frame_idx,
                });
            }
            // age tracks across any skipped frames as well
            for _ in prev..frame_idx {
                self.predict_all();
            }
        } else {
            self.predict_all();
        }

        let track_boxes: Vec<BBox> = self.tracks.iter().map(|t| t.state.bbox()).collect();
        let det_boxes: Vec<BBox> = detections.iter().map(|d| d.bbox).collect();
        let assoc = associate(
            &track_boxes,
            &det_boxes,
            self.config.iou_threshold,
            self.config.hungarian_limit,
        );

        for (ti, di) in assoc.matched {
            let track = &mut self.tracks[ti];
            track.state.update(&detections[di].bbox);
            track
                .observations
                .push((frame_idx, detections[di].skeleton.clone()));
            if track.state.hit_streak >= self.config.min_hits {
                track.confirmed = true;
            }
        }
        for di in assoc.unmatched_detections {
            let mut state = TrackState::new(self.next_id, &detections[di].bbox);
            self.next_id += 1;
            state.hit_streak = 1;
            let confirmed = self.config.min_hits <= 1;
            self.tracks.push(Track {
                state,
                observations: vec![(frame_idx, detections[di].skeleton.clone())],
                confirmed,
            });
        }
        self.reap();
        self.last_frame = Some(frame_idx);
        Ok(())
    }

    fn predict_all(&mut self) {
        for t in self.tracks.iter_mut() {
            t.state.predict();
        }
    }

    fn reap(&mut self) {
        let max_age = self.config.max_age;
        let camera = self.camera.clone();
        let fps = self.fps;
        let mut kept = Vec::with_capacity(self.tracks.len());
        for t in self.tracks.drain(..) {
            if t.state.time_since_update > max_age {
                if let Some(tl) = t.finalize(&camera, fps) {
                    self.finished.push(tl);
                }
            } else {
                kept.push(t);
            }
        }
        self.tracks = kept;
    }

    /// Flush live tracks and return every emitted tracklet, ordered by id.
    pub fn finish(mut self) -> Vec<Tracklet> {
        for t in self.tracks.drain(..) {
            if let Some(tl) = t.finalize(&self.camera, self.fps) {
                self.finished.push(tl);
            }
        }
        self.finished.sort_by_key(|t| t.track_id);
        self.finished
    }
}

/// Track a whole stream of per-frame detection lists.
///
/// A track is born once it reaches `min_hits` consecutive matches (the
/// frames before confirmation are kept) and is killed after `max_age` frames
/// without an update. Frames inside a surviving gap repeat the last observed
/// skeleton so the tracklet's frame indices stay consecutive.
pub fn track_stream<I>(
    frames: I,
    config: &TrackerConfig,
    camera: &str,
    fps: f64,
) -> Result<Vec<Tracklet>, TrackingError>
where
    I: IntoIterator<Item = Vec<Detection>>,
{
    let mut tracker = Tracker::new(config.clone(), camera, fps);
    let mut implicit_next = 0u64;
    for dets in frames {
        let frame_idx = dets.first().map(|d| d.frame_idx).unwrap_or(implicit_next);
        tracker.step(&dets, frame_idx)?;
        implicit_next = frame_idx + 1;
    }
    Ok(tracker.finish())
}
