//! File formats and configuration for the gait pipeline CLI.

pub mod config;
pub mod formats;

pub use config::{ConfigError, PipelineConfig};
pub use formats::{
    ingest_poses, read_embeddings, read_store, write_embeddings, write_store, EmbeddingRecord,
    FormatError, IngestStats, PoseRecord, TrackletRecord, VerdictRecord, ViewRecord,
};
