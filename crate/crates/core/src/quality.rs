//! Tracklet admission filters.
//!
//! Wild surveillance tracklets are noisy: poorly extracted poses, occluded
//! feet, people standing around. Admission requires, in order: acceptable
//! length, mean joint confidence strictly over 60%, no run of more than 3
//! consecutive frames with feet confidence under 50%, a normalizable
//! geometry, and average leg movement of at least 0.01 normalized units per
//! frame. The first failed rule names the rejection.

use thiserror::Error;

use crate::skeleton::{joints, normalize_tracklet, NormalizedSequence, Tracklet};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Mean joint confidence must be strictly above this.
    pub min_mean_conf: f64,
    /// Per-frame feet confidence below this counts as a low-feet frame.
    pub feet_conf_floor: f64,
    /// Longest tolerated run of consecutive low-feet frames.
    pub max_consec_low_feet: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Minimum mean leg displacement per frame, in normalized units.
    pub min_leg_velocity: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_mean_conf: 0.60,
            feet_conf_floor: 0.50,
            max_consec_low_feet: 3,
            min_len: 54,
            max_len: 900,
            min_leg_velocity: 0.01,
        }
    }
}

/// Why a tracklet was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    LowConfidence,
    FeetOcclusion,
    TooShort,
    TooLong,
    NotWalking,
    Degenerate,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        RejectReason::LowConfidence,
        RejectReason::FeetOcclusion,
        RejectReason::TooShort,
        RejectReason::TooLong,
        RejectReason::NotWalking,
        RejectReason::Degenerate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::LowConfidence => "LowConfidence",
            RejectReason::FeetOcclusion => "FeetOcclusion",
            RejectReason::TooShort => "TooShort",
            RejectReason::TooLong => "TooLong",
            RejectReason::NotWalking => "NotWalking",
            RejectReason::Degenerate => "Degenerate",
        }
    }
}

/// Per-tracklet verdict. A passing tracklet carries its normalized sequence
/// so callers do not normalize twice.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass(NormalizedSequence),
    Reject(RejectReason),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass(_))
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            Verdict::Pass(_) => None,
            Verdict::Reject(r) => Some(*r),
        }
    }
}

/// Aggregate pass/reject counts over a batch of tracklets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterReport {
    pub total: usize,
    pub passed: usize,
    pub rejected: Vec<(RejectReason, usize)>,
}

impl FilterReport {
    pub fn tally<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> Self {
        let mut report = FilterReport::default();
        let mut counts = std::collections::HashMap::new();
        for v in verdicts {
            report.total += 1;
            match v.reason() {
                None => report.passed += 1,
                Some(r) => *counts.entry(r).or_insert(0usize) += 1,
            }
        }
        for r in RejectReason::ALL {
            if let Some(&c) = counts.get(&r) {
                report.rejected.push((r, c));
            }
        }
        report
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VelocityError {
    #[error("sequence too short for velocity ({len} frames, need at least 2)")]
    TooShort { len: usize },
}

/// Kahan-compensated mean; keeps threshold comparisons exact when every
/// value is the same constant.
fn compensated_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut n = 0usize;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// True iff the mean confidence over all frames and joints is strictly
/// above `cfg.min_mean_conf`.
pub fn mean_confidence_ok(t: &Tracklet, cfg: &FilterConfig) -> bool {
    let mean = compensated_mean(
        t.frames
            .iter()
            .flat_map(|s| s.joints.iter().map(|k| k.confidence)),
    );
    mean > cfg.min_mean_conf
}

/// True iff no run of more than `cfg.max_consec_low_feet` consecutive frames
/// has feet confidence below `cfg.feet_conf_floor`.
pub fn feet_visibility_ok(t: &Tracklet, cfg: &FilterConfig) -> bool {
    let mut run = 0usize;
    for s in &t.frames {
        if s.feet_confidence() < cfg.feet_conf_floor {
            run += 1;
            if run > cfg.max_consec_low_feet {
                return false;
            }
        } else {
            run = 0;
        }
    }
    true
}

pub fn length_ok(t: &Tracklet, cfg: &FilterConfig) -> bool {
    (cfg.min_len..=cfg.max_len).contains(&t.len())
}

/// Mean over consecutive-frame steps of the mean Euclidean displacement of
/// the four leg joints (knees and ankles), in normalized units per frame.
pub fn leg_velocity(ns: &NormalizedSequence) -> Result<f64, VelocityError> {
    if ns.len() < 2 {
        return Err(VelocityError::TooShort { len: ns.len() });
    }
    let mut total = 0.0f64;
    for w in ns.frames.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let mut step = 0.0f64;
        for j in joints::LEGS {
            let dx = cur[j][0] - prev[j][0];
            let dy = cur[j][1] - prev[j][1];
            step += (dx * dx + dy * dy).sqrt();
        }
        total += step / joints::LEGS.len() as f64;
    }
    Ok(total / (ns.len() - 1) as f64)
}

/// True iff the tracklet is actually walking: leg velocity at or above the
/// configured minimum (strictly-below rejects).
pub fn walking_ok(ns: &NormalizedSequence, cfg: &FilterConfig) -> Result<bool, VelocityError> {
    Ok(leg_velocity(ns)? >= cfg.min_leg_velocity)
}

/// Apply every admission rule, cheapest first. The first failure names the
/// rejection reason.
pub fn run_filters(t: &Tracklet, cfg: &FilterConfig) -> Verdict {
    if t.len() < cfg.min_len {
        return Verdict::Reject(RejectReason::TooShort);
    }
    if t.len() > cfg.max_len {
        return Verdict::Reject(RejectReason::TooLong);
    }
    if !mean_confidence_ok(t, cfg) {
        return Verdict::Reject(RejectReason::LowConfidence);
    }
    if !feet_visibility_ok(t, cfg) {
        return Verdict::Reject(RejectReason::FeetOcclusion);
    }
    let ns = match normalize_tracklet(t) {
        Ok(ns) => ns,
        Err(_) => return Verdict::Reject(RejectReason::Degenerate),
    };
    match walking_ok(&ns, cfg) {
        Ok(true) => Verdict::Pass(ns),
        // min_len >= 2 makes TooShort unreachable here, but a custom config
        // with min_len < 2 degrades to a NotWalking reject.
        Ok(false) | Err(_) => Verdict::Reject(RejectReason::NotWalking),
    }
}
