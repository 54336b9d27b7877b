//! Skeleton domain types and the height/translation-invariant normalization.
//!
//! A [`Skeleton`] is one frame of 17 COCO-ordered keypoints. Sequences of
//! skeletons attributed to one tracked person form a [`Tracklet`]. The
//! normalization zero-centers every frame on the pelvis and divides X by the
//! shoulder width and Y by the trunk (neck-pelvis) length, which removes
//! position, height and camera-scale information while keeping the motion.

use thiserror::Error;

/// Number of COCO keypoints per skeleton.
pub const NUM_JOINTS: usize = 17;

/// COCO-17 joint indices.
pub mod joints {
    pub const NOSE: usize = 0;
    pub const L_EYE: usize = 1;
    pub const R_EYE: usize = 2;
    pub const L_EAR: usize = 3;
    pub const R_EAR: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const R_SHOULDER: usize = 6;
    pub const L_ELBOW: usize = 7;
    pub const R_ELBOW: usize = 8;
    pub const L_WRIST: usize = 9;
    pub const R_WRIST: usize = 10;
    pub const L_HIP: usize = 11;
    pub const R_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const R_KNEE: usize = 14;
    pub const L_ANKLE: usize = 15;
    pub const R_ANKLE: usize = 16;

    /// Leg joints used by the walking-activity heuristic (knees and ankles).
    pub const LEGS: [usize; 4] = [L_KNEE, R_KNEE, L_ANKLE, R_ANKLE];

    /// Left/right joint pairs, swapped when a skeleton is mirrored.
    pub const LR_PAIRS: [(usize, usize); 8] = [
        (L_EYE, R_EYE),
        (L_EAR, R_EAR),
        (L_SHOULDER, R_SHOULDER),
        (L_ELBOW, R_ELBOW),
        (L_WRIST, R_WRIST),
        (L_HIP, R_HIP),
        (L_KNEE, R_KNEE),
        (L_ANKLE, R_ANKLE),
    ];
}

/// One detected joint: pixel position plus detector confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Keypoint { x, y, confidence }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && (0.0..=1.0).contains(&self.confidence)
    }
}

/// One frame of 17 COCO-ordered keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub joints: [Keypoint; NUM_JOINTS],
}

impl Skeleton {
    pub fn new(joints: [Keypoint; NUM_JOINTS]) -> Self {
        Skeleton { joints }
    }

    pub fn is_valid(&self) -> bool {
        self.joints.iter().all(Keypoint::is_valid)
    }

    /// Mean detector confidence over all 17 joints.
    pub fn mean_confidence(&self) -> f64 {
        self.joints.iter().map(|k| k.confidence).sum::<f64>() / NUM_JOINTS as f64
    }

    /// Mean ankle confidence; the per-frame "feet confidence".
    pub fn feet_confidence(&self) -> f64 {
        0.5 * (self.joints[joints::L_ANKLE].confidence + self.joints[joints::R_ANKLE].confidence)
    }
}

/// Pelvis/neck positions and body scales synthesized from a skeleton.
///
/// COCO-17 has no pelvis or neck joint; the pelvis is taken as the hip
/// midpoint and the neck as the shoulder midpoint. Reads only joints
/// 5, 6, 11 and 12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedJoints {
    pub pelvis: (f64, f64),
    pub neck: (f64, f64),
    pub shoulder_width: f64,
    pub trunk_length: f64,
}

pub fn derived_joints(s: &Skeleton) -> DerivedJoints {
    let lh = s.joints[joints::L_HIP];
    let rh = s.joints[joints::R_HIP];
    let ls = s.joints[joints::L_SHOULDER];
    let rs = s.joints[joints::R_SHOULDER];
    let pelvis = (0.5 * (lh.x + rh.x), 0.5 * (lh.y + rh.y));
    let neck = (0.5 * (ls.x + rs.x), 0.5 * (ls.y + rs.y));
    DerivedJoints {
        pelvis,
        neck,
        shoulder_width: (rs.x - ls.x).abs(),
        trunk_length: (neck.1 - pelvis.1).abs(),
    }
}

/// Normalized coordinates for one frame: 17 joints x (x, y), unitless.
pub type NormalizedFrame = [[f64; 2]; NUM_JOINTS];

/// A tracklet after normalization: pelvis at the origin in every frame,
/// X in shoulder-width units and Y in trunk-length units.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSequence {
    pub frames: Vec<NormalizedFrame>,
    pub source_track_id: u64,
}

impl NormalizedSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// An identity-consistent, single-camera time series of skeletons on
/// consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub track_id: u64,
    pub camera: String,
    pub fps: f64,
    pub start_frame: u64,
    pub frames: Vec<Skeleton>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    /// Median body scales are too small to normalize against; the caller
    /// drops the tracklet.
    #[error(
        "degenerate tracklet {track_id}: median shoulder width {median_width:.3} px, \
         median trunk length {median_trunk:.3} px"
    )]
    DegenerateTracklet {
        track_id: u64,
        median_width: f64,
        median_trunk: f64,
    },
}

/// Fraction of the fallback scale below which a per-frame denominator is
/// considered collapsed (e.g. a profile view) and replaced by the fallback.
const DENOMINATOR_FLOOR_RATIO: f64 = 0.1;

/// Minimum usable median scale in pixels; below this the tracklet is rejected.
const MIN_MEDIAN_SCALE_PX: f64 = 1.0;

/// Normalize one skeleton: zero-center on the pelvis, divide X by the
/// shoulder width and Y by the trunk length. A per-frame denominator below
/// 10% of its fallback is replaced by the fallback, so profile-view frames
/// do not blow up the coordinates.
pub fn normalize_skeleton(
    s: &Skeleton,
    fallback_width: f64,
    fallback_trunk: f64,
) -> NormalizedFrame {
    debug_assert!(fallback_width > 0.0 && fallback_trunk > 0.0);
    let d = derived_joints(s);
    let w = if d.shoulder_width >= DENOMINATOR_FLOOR_RATIO * fallback_width {
        d.shoulder_width
    } else {
        fallback_width
    };
    let l = if d.trunk_length >= DENOMINATOR_FLOOR_RATIO * fallback_trunk {
        d.trunk_length
    } else {
        fallback_trunk
    };
    let mut out = [[0.0; 2]; NUM_JOINTS];
    for (o, k) in out.iter_mut().zip(s.joints.iter()) {
        o[0] = (k.x - d.pelvis.0) / w;
        o[1] = (k.y - d.pelvis.1) / l;
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Normalize every frame of a tracklet, using the tracklet's median shoulder
/// width and trunk length as the fallback denominators.
pub fn normalize_tracklet(t: &Tracklet) -> Result<NormalizedSequence, NormalizeError> {
    let mut widths: Vec<f64> = Vec::with_capacity(t.len());
    let mut trunks: Vec<f64> = Vec::with_capacity(t.len());
    for s in &t.frames {
        let d = derived_joints(s);
        widths.push(d.shoulder_width);
        trunks.push(d.trunk_length);
    }
    let median_width = median(&mut widths);
    let median_trunk = median(&mut trunks);
    if median_width < MIN_MEDIAN_SCALE_PX || median_trunk < MIN_MEDIAN_SCALE_PX {
        return Err(NormalizeError::DegenerateTracklet {
            track_id: t.track_id,
            median_width,
            median_trunk,
        });
    }
    let frames = t
        .frames
        .iter()
        .map(|s| normalize_skeleton(s, median_width, median_trunk))
        .collect();
    Ok(NormalizedSequence {
        frames,
        source_track_id: t.track_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Skeleton with hips at (90,200)/(110,200), shoulders at (95,150)/(105,150)
    /// and everything else at the pelvis.
    fn boxy_skeleton() -> Skeleton {
        let mut j = [Keypoint::new(100.0, 200.0, 0.9); NUM_JOINTS];
        j[joints::L_HIP] = Keypoint::new(90.0, 200.0, 0.9);
        j[joints::R_HIP] = Keypoint::new(110.0, 200.0, 0.9);
        j[joints::L_SHOULDER] = Keypoint::new(95.0, 150.0, 0.9);
        j[joints::R_SHOULDER] = Keypoint::new(105.0, 150.0, 0.9);
        Skeleton::new(j)
    }

    fn transformed(s: &Skeleton, scale: f64, tx: f64, ty: f64) -> Skeleton {
        let mut out = s.clone();
        for k in out.joints.iter_mut() {
            k.x = k.x * scale + tx;
            k.y = k.y * scale + ty;
        }
        out
    }

    #[test]
    fn derived_joints_midpoints() {
        let d = derived_joints(&boxy_skeleton());
        assert_eq!(d.pelvis, (100.0, 200.0));
        assert_eq!(d.neck, (100.0, 150.0));
        assert_eq!(d.shoulder_width, 10.0);
        assert_eq!(d.trunk_length, 50.0);
    }

    #[test]
    fn derived_joints_all_zero() {
        let s = Skeleton::new([Keypoint::new(0.0, 0.0, 0.5); NUM_JOINTS]);
        let d = derived_joints(&s);
        assert_eq!(d.pelvis, (0.0, 0.0));
        assert_eq!(d.neck, (0.0, 0.0));
        assert_eq!(d.shoulder_width, 0.0);
        assert_eq!(d.trunk_length, 0.0);
    }

    #[test]
    fn derived_joints_mirror_symmetry() {
        let s = boxy_skeleton();
        let mut m = s.clone();
        for k in m.joints.iter_mut() {
            k.x = 200.0 - k.x; // reflect about x = 100
        }
        let d = derived_joints(&s);
        let dm = derived_joints(&m);
        assert!((d.pelvis.0 - 100.0).abs() < 1e-12 && (dm.pelvis.0 - 100.0).abs() < 1e-12);
        assert!((d.neck.0 - dm.neck.0).abs() < 1e-12);
        assert!((d.shoulder_width - dm.shoulder_width).abs() < 1e-12);
    }

    #[test]
    fn derived_joints_reads_only_hips_and_shoulders() {
        let mut a = boxy_skeleton();
        let d0 = derived_joints(&a);
        for i in 0..NUM_JOINTS {
            if [
                joints::L_HIP,
                joints::R_HIP,
                joints::L_SHOULDER,
                joints::R_SHOULDER,
            ]
            .contains(&i)
            {
                continue;
            }
            a.joints[i] = Keypoint::new(1e6, -1e6, 0.0);
        }
        assert_eq!(derived_joints(&a), d0);
    }

    #[test]
    fn normalize_hand_computed_point() {
        // pelvis (100,200), shoulders x 90/110 so W = 20, neck y 150 so L = 50
        let mut j = [Keypoint::new(100.0, 200.0, 0.9); NUM_JOINTS];
        j[joints::L_HIP] = Keypoint::new(95.0, 200.0, 0.9);
        j[joints::R_HIP] = Keypoint::new(105.0, 200.0, 0.9);
        j[joints::L_SHOULDER] = Keypoint::new(90.0, 150.0, 0.9);
        j[joints::R_SHOULDER] = Keypoint::new(110.0, 150.0, 0.9);
        j[joints::NOSE] = Keypoint::new(110.0, 175.0, 0.9);
        let s = Skeleton::new(j);
        let out = normalize_skeleton(&s, 20.0, 50.0);
        assert!((out[joints::NOSE][0] - 0.5).abs() < 1e-12);
        assert!((out[joints::NOSE][1] + 0.5).abs() < 1e-12);
        // joints sitting exactly on the pelvis map to the origin
        assert_eq!(out[joints::L_WRIST], [0.0, 0.0]);
    }

    #[test]
    fn normalize_similarity_invariant() {
        let s = boxy_skeleton();
        let t = transformed(&s, 3.0, 7.0, -4.0);
        let a = normalize_skeleton(&s, 10.0, 50.0);
        let b = normalize_skeleton(&t, 30.0, 150.0);
        for (fa, fb) in a.iter().zip(b.iter()) {
            assert!((fa[0] - fb[0]).abs() < 1e-9);
            assert!((fa[1] - fb[1]).abs() < 1e-9);
        }
    }

    fn tracklet_of(frames: Vec<Skeleton>) -> Tracklet {
        Tracklet {
            track_id: 1,
            camera: "cam0".into(),
            fps: 24.0,
            start_frame: 0,
            frames,
        }
    }

    #[test]
    fn normalize_tracklet_deterministic_identical_frames() {
        let t = tracklet_of(vec![boxy_skeleton(); 54]);
        let ns = normalize_tracklet(&t).unwrap();
        assert_eq!(ns.len(), 54);
        for f in &ns.frames {
            assert_eq!(f, &ns.frames[0]);
        }
    }

    #[test]
    fn profile_frame_uses_median_fallback() {
        // 11 frames; one has shoulders collapsed to 0.5 px (5% of the 10 px median)
        let mut frames = vec![boxy_skeleton(); 11];
        let mut profile = boxy_skeleton();
        profile.joints[joints::L_SHOULDER].x = 99.75;
        profile.joints[joints::R_SHOULDER].x = 100.25;
        profile.joints[joints::NOSE] = Keypoint::new(105.0, 200.0, 0.9);
        frames[5] = profile.clone();
        let ns = normalize_tracklet(&tracklet_of(frames)).unwrap();
        // median width stays 10 (6 of 11 frames are intact), so the collapsed
        // frame is normalized with W = 10, not W = 0.5: x = (105-100)/10
        assert!((ns.frames[5][joints::NOSE][0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn all_zero_skeletons_are_degenerate() {
        let z = Skeleton::new([Keypoint::new(0.0, 0.0, 0.0); NUM_JOINTS]);
        let err = normalize_tracklet(&tracklet_of(vec![z; 10])).unwrap_err();
        assert!(matches!(err, NormalizeError::DegenerateTracklet { .. }));
    }

    #[test]
    fn normalized_pelvis_is_origin() {
        let t = tracklet_of(vec![boxy_skeleton(); 5]);
        let ns = normalize_tracklet(&t).unwrap();
        for f in &ns.frames {
            let px = 0.5 * (f[joints::L_HIP][0] + f[joints::R_HIP][0]);
            let py = 0.5 * (f[joints::L_HIP][1] + f[joints::R_HIP][1]);
            assert!(px.abs() < 1e-9 && py.abs() < 1e-9);
        }
    }
}
