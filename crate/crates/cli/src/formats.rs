//! On-disk formats: pose estimator output, tracklet stores, embeddings,
//! filter reports and preview dumps.
//!
//! Stores are line-delimited JSON: streamable, diffable, and byte-stable
//! because serde_json prints floats with shortest round-trip formatting.
//! The pose input is a single JSON array in the usual pose-estimator
//! export shape (`image_id`, 51 keypoint numbers, `score`).

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use gait_core::skeleton::{Keypoint, Skeleton, Tracklet, NUM_JOINTS};
use gait_core::tracking::Detection;
use gait_core::train::{EmbeddingTable, StoreEntry, TrackletStore};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("input contains no records")]
    EmptyInput,
    #[error("every record failed validation ({skipped} skipped)")]
    AllRecordsInvalid { skipped: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One pose-estimator detection: a frame key, 17 x (x, y, confidence), and
/// an overall instance score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub image_id: String,
    pub keypoints: Vec<f64>,
    #[serde(default)]
    pub score: f64,
}

impl PoseRecord {
    /// Validate arity, finiteness and confidence range.
    pub fn to_skeleton(&self) -> Option<Skeleton> {
        if self.keypoints.len() != 3 * NUM_JOINTS {
            return None;
        }
        let mut joints = [Keypoint::default(); NUM_JOINTS];
        for (j, chunk) in self.keypoints.chunks_exact(3).enumerate() {
            let kp = Keypoint::new(chunk[0], chunk[1], chunk[2]);
            if !kp.is_valid() {
                return None;
            }
            joints[j] = kp;
        }
        Some(Skeleton::new(joints))
    }
}

/// Order image ids lexicographically with embedded digit runs compared
/// numerically, so `img_9` sorts before `img_10`.
pub fn image_id_cmp(a: &str, b: &str) -> Ordering {
    let mut ai = a.chars().peekable();
    let mut bi = b.chars().peekable();
    loop {
        match (ai.peek().copied(), bi.peek().copied()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(ca), Some(cb)) => {
                if ca.is_ascii_digit() && cb.is_ascii_digit() {
                    let mut da = String::new();
                    while let Some(&c) = ai.peek() {
                        if c.is_ascii_digit() {
                            da.push(c);
                            ai.next();
                        } else {
                            break;
                        }
                    }
                    let mut db = String::new();
                    while let Some(&c) = bi.peek() {
                        if c.is_ascii_digit() {
                            db.push(c);
                            bi.next();
                        } else {
                            break;
                        }
                    }
                    let sa = da.trim_start_matches('0');
                    let sb = db.trim_start_matches('0');
                    let numeric = sa
                        .len()
                        .cmp(&sb.len())
                        .then_with(|| sa.cmp(sb))
                        // leading zeros break numeric ties deterministically
                        .then_with(|| da.cmp(&db));
                    if numeric != Ordering::Equal {
                        return numeric;
                    }
                } else {
                    if ca != cb {
                        return ca.cmp(&cb);
                    }
                    ai.next();
                    bi.next();
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub frames: usize,
    pub detections: usize,
    pub skipped: usize,
}

/// Parse a pose JSON array into per-frame detection lists. Records are
/// grouped by `image_id` in natural order; the frame index is the ordinal
/// of the image id in that order. Malformed records are counted and
/// skipped; the ingest only fails when every record is malformed.
pub fn ingest_poses(json: &str) -> Result<(Vec<Vec<Detection>>, IngestStats), FormatError> {
    let values: Vec<serde_json::Value> =
        serde_json::from_str(json).map_err(|e| FormatError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    if values.is_empty() {
        return Err(FormatError::EmptyInput);
    }
    let mut skipped = 0usize;
    let mut records: Vec<(String, Skeleton)> = Vec::new();
    for value in values {
        let Ok(record) = serde_json::from_value::<PoseRecord>(value) else {
            skipped += 1;
            continue;
        };
        match record.to_skeleton() {
            Some(skeleton) => records.push((record.image_id, skeleton)),
            None => skipped += 1,
        }
    }
    if records.is_empty() {
        return Err(FormatError::AllRecordsInvalid { skipped });
    }

    let mut frame_ids: Vec<&str> = records.iter().map(|(id, _)| id.as_str()).collect();
    frame_ids.sort_by(|a, b| image_id_cmp(a, b));
    frame_ids.dedup();
    let index_of = |id: &str| frame_ids.binary_search_by(|x| image_id_cmp(x, id)).unwrap();

    let mut frames: Vec<Vec<Detection>> = vec![Vec::new(); frame_ids.len()];
    // stable grouping: records keep file order within a frame
    for (id, skeleton) in &records {
        let idx = index_of(id);
        frames[idx].push(Detection::from_skeleton(idx as u64, skeleton.clone()));
    }
    let stats = IngestStats {
        frames: frames.len(),
        detections: records.len(),
        skipped,
    };
    Ok((frames, stats))
}

/// One stored tracklet line: identity label, optional run index and the
/// raw frames as nested `[x, y, confidence]` triplets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackletRecord {
    pub track_id: u64,
    pub label: i64,
    #[serde(default)]
    pub run: u32,
    pub camera: String,
    pub fps: f64,
    pub start_frame: u64,
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl TrackletRecord {
    pub fn from_entry(entry: &StoreEntry) -> Self {
        let t = &entry.tracklet;
        TrackletRecord {
            track_id: t.track_id,
            label: entry.label,
            run: entry.run,
            camera: t.camera.clone(),
            fps: t.fps,
            start_frame: t.start_frame,
            frames: t
                .frames
                .iter()
                .map(|s| s.joints.iter().map(|k| [k.x, k.y, k.confidence]).collect())
                .collect(),
        }
    }

    pub fn into_entry(self, line: usize) -> Result<StoreEntry, FormatError> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            if f.len() != NUM_JOINTS {
                return Err(FormatError::Parse {
                    line,
                    message: format!("frame has {} joints, expected {NUM_JOINTS}", f.len()),
                });
            }
            let mut joints = [Keypoint::default(); NUM_JOINTS];
            for (j, kp) in f.iter().enumerate() {
                joints[j] = Keypoint::new(kp[0], kp[1], kp[2]);
            }
            frames.push(Skeleton::new(joints));
        }
        if frames.is_empty() {
            return Err(FormatError::Parse {
                line,
                message: "tracklet has no frames".into(),
            });
        }
        Ok(StoreEntry {
            label: self.label,
            run: self.run,
            tracklet: Tracklet {
                track_id: self.track_id,
                camera: self.camera,
                fps: self.fps,
                start_frame: self.start_frame,
                frames,
            },
        })
    }
}

pub fn write_store<W: Write>(w: &mut W, store: &TrackletStore) -> Result<(), FormatError> {
    for entry in &store.entries {
        let record = TrackletRecord::from_entry(entry);
        serde_json::to_writer(&mut *w, &record).map_err(io_from_json)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_store<R: BufRead>(r: R) -> Result<TrackletStore, FormatError> {
    let mut entries = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrackletRecord =
            serde_json::from_str(&line).map_err(|e| FormatError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        entries.push(record.into_entry(i + 1)?);
    }
    Ok(TrackletStore { entries })
}

/// One embedding line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub track_id: u64,
    pub label: i64,
    pub embedding: Vec<f32>,
}

pub fn write_embeddings<W: Write>(w: &mut W, table: &EmbeddingTable) -> Result<(), FormatError> {
    for i in 0..table.n {
        let record = EmbeddingRecord {
            track_id: table.track_ids[i],
            label: table.labels[i],
            embedding: table.row(i).to_vec(),
        };
        serde_json::to_writer(&mut *w, &record).map_err(io_from_json)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_embeddings<R: BufRead>(r: R) -> Result<EmbeddingTable, FormatError> {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    let mut track_ids = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| FormatError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        match dim {
            None => dim = Some(record.embedding.len()),
            Some(d) if d == record.embedding.len() => {}
            Some(d) => {
                return Err(FormatError::Parse {
                    line: i + 1,
                    message: format!(
                        "embedding dimension {} differs from {d}",
                        record.embedding.len()
                    ),
                })
            }
        }
        vectors.extend_from_slice(&record.embedding);
        labels.push(record.label);
        track_ids.push(record.track_id);
    }
    let d = dim.unwrap_or(0);
    Ok(EmbeddingTable {
        n: labels.len(),
        vectors,
        labels,
        track_ids,
        d,
    })
}

/// One per-tracklet filter verdict line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRecord {
    pub track_id: u64,
    pub label: i64,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// One augment-preview line: the source window or one of the two views.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRecord {
    pub track_id: u64,
    pub kind: String,
    pub frames: Vec<Vec<[f64; 2]>>,
}

fn io_from_json(e: serde_json::Error) -> FormatError {
    FormatError::Io(std::io::Error::other(e))
}
