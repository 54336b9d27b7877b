//! Pipeline configuration: a TOML document with defaults for every key.
//!
//! Unknown keys are rejected so typos fail loudly instead of silently
//! running with defaults.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use gait_core::augment::AugmentConfig;
use gait_core::graph::GraphConfig;
use gait_core::model::ModelConfig;
use gait_core::quality::FilterConfig;
use gait_core::tracking::TrackerConfig;
use gait_core::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub tracker: TrackerSection,
    pub filter: FilterSection,
    pub augment: AugmentSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

macro_rules! section {
    ($name:ident from $core:ty { $($field:ident : $ty:ty),+ $(,)? }) => {
        #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
        #[serde(deny_unknown_fields, default)]
        pub struct $name {
            $(pub $field: $ty),+
        }

        impl Default for $name {
            fn default() -> Self {
                let core = <$core>::default();
                $name { $($field: core.$field),+ }
            }
        }
    };
}

section!(TrackerSection from TrackerConfig {
    iou_threshold: f64,
    max_age: u64,
    min_hits: u64,
    hungarian_limit: usize,
});

impl TrackerSection {
    pub fn to_core(&self) -> TrackerConfig {
        TrackerConfig {
            iou_threshold: self.iou_threshold,
            max_age: self.max_age,
            min_hits: self.min_hits,
            hungarian_limit: self.hungarian_limit,
        }
    }
}

section!(FilterSection from FilterConfig {
    min_mean_conf: f64,
    feet_conf_floor: f64,
    max_consec_low_feet: usize,
    min_len: usize,
    max_len: usize,
    min_leg_velocity: f64,
});

impl FilterSection {
    pub fn to_core(&self) -> FilterConfig {
        FilterConfig {
            min_mean_conf: self.min_mean_conf,
            feet_conf_floor: self.feet_conf_floor,
            max_consec_low_feet: self.max_consec_low_feet,
            min_len: self.min_len,
            max_len: self.max_len,
            min_leg_velocity: self.min_leg_velocity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub window_len: usize,
    pub pace_factors: Vec<f64>,
    pub shuffle_segments: usize,
    pub squeeze_range: (f64, f64),
    pub p_shuffle: f64,
    pub p_squeeze: f64,
    pub p_flip: f64,
    pub p_mirror: f64,
    pub p_joint_drop: f64,
    pub p_frame_drop: f64,
    pub seed: u64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let core = AugmentConfig::default();
        AugmentSection {
            window_len: core.window_len,
            pace_factors: core.pace_factors,
            shuffle_segments: core.shuffle_segments,
            squeeze_range: core.squeeze_range,
            p_shuffle: core.p_shuffle,
            p_squeeze: core.p_squeeze,
            p_flip: core.p_flip,
            p_mirror: core.p_mirror,
            p_joint_drop: core.p_joint_drop,
            p_frame_drop: core.p_frame_drop,
            seed: core.seed,
        }
    }
}

impl AugmentSection {
    pub fn to_core(&self) -> AugmentConfig {
        AugmentConfig {
            window_len: self.window_len,
            pace_factors: self.pace_factors.clone(),
            shuffle_segments: self.shuffle_segments,
            squeeze_range: self.squeeze_range,
            p_shuffle: self.p_shuffle,
            p_squeeze: self.p_squeeze,
            p_flip: self.p_flip,
            p_mirror: self.p_mirror,
            p_joint_drop: self.p_joint_drop,
            p_frame_drop: self.p_frame_drop,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub in_channels: usize,
    pub block_channels: Vec<usize>,
    pub temporal_kernel: usize,
    pub embedding_dim: usize,
    pub frames: usize,
    pub partitions: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let core = ModelConfig::default();
        ModelSection {
            in_channels: core.in_channels,
            block_channels: core.block_channels,
            temporal_kernel: core.temporal_kernel,
            embedding_dim: core.embedding_dim,
            frames: core.frames,
            partitions: core.graph.partitions,
        }
    }
}

impl ModelSection {
    pub fn to_core(&self) -> ModelConfig {
        ModelConfig {
            in_channels: self.in_channels,
            block_channels: self.block_channels.clone(),
            temporal_kernel: self.temporal_kernel,
            embedding_dim: self.embedding_dim,
            frames: self.frames,
            graph: GraphConfig {
                partitions: self.partitions,
                ..GraphConfig::default()
            },
        }
    }
}

section!(TrainSection from TrainConfig {
    ids_per_batch: usize,
    steps: usize,
    learning_rate: f32,
    beta1: f32,
    beta2: f32,
    epsilon: f32,
    temperature: f64,
    seed: u64,
});

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            ids_per_batch: self.ids_per_batch,
            steps: self.steps,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            temperature: self.temperature,
            seed: self.seed,
        }
    }
}
