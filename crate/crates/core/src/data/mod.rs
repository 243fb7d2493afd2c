//! Labels, annotated videos, ingestion, synthetic generation and the
//! on-disk dataset layout.

pub mod cholec80;
pub mod io;
pub mod label;
pub mod synthetic;

pub use io::{load_dataset, read_video_jsonl, video_to_jsonl, write_dataset, Dataset, Manifest};
pub use label::{FrameLabel, NO_TOOL, N_PHASES, N_PHYSICAL_TOOLS, N_TOOLS, PHASE_NAMES, TOOL_NAMES};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One video's 1 fps labels and, optionally, its per-frame feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnnotation {
    video_id: String,
    fps: f64,
    labels: Vec<FrameLabel>,
    features: Option<Vec<Vec<f64>>>,
}

impl VideoAnnotation {
    pub fn new(video_id: String, labels: Vec<FrameLabel>, features: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyAnnotation);
        }
        if let Some(f) = &features {
            if f.len() != labels.len() {
                return Err(Error::Dimension(format!(
                    "video {video_id}: {} feature vectors for {} labels",
                    f.len(),
                    labels.len()
                )));
            }
            let d = f[0].len();
            if d == 0 || f.iter().any(|v| v.len() != d) {
                return Err(Error::Dimension(format!("video {video_id}: ragged or empty feature vectors")));
            }
        }
        Ok(Self { video_id, fps: 1.0, labels, features })
    }

    pub fn id(&self) -> &str {
        &self.video_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn labels(&self) -> &[FrameLabel] {
        &self.labels
    }

    pub fn features(&self) -> Option<&[Vec<f64>]> {
        self.features.as_deref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f[0].len())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// First `ceil(n/2)` ids train, the rest test, in the given order.
pub fn split_first_half<S: AsRef<str>>(ids: &[S]) -> Result<Split> {
    if ids.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 videos to split, got {}", ids.len())));
    }
    let n_train = ids.len().div_ceil(2);
    let owned: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect();
    Ok(Split { train: owned[..n_train].to_vec(), test: owned[n_train..].to_vec() })
}
