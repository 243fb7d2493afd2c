//! Median filtering of phase predictions, per-class metrics, AP/mAP and
//! report generation.

pub mod metrics;
pub mod report;

pub use metrics::{
    average_precision, median_filter_labels, median_filter_scores, precision_recall_accuracy, AveragePrecision,
    Confusion, Prf,
};
pub use report::{
    build_report, predict, predict_scores, reference_rows, ClassMetrics, EvalConfig, EvalReport, ReferenceRow,
    TaskMetrics, REFERENCE_SOURCE,
};

use serde::{Deserialize, Serialize};

use crate::data::{FrameLabel, NO_TOOL, N_PHASES, N_PHYSICAL_TOOLS, N_TOOLS};
use crate::error::{Error, Result};
use crate::tensor::{argmax, sigmoid_scalar, Matrix};

/// How tool scores are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSpace {
    #[default]
    Probability,
    Logit,
}

/// Per-frame scores and ground truth of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrediction {
    pub video_id: String,
    /// T × 7.
    pub phase_scores: Matrix,
    /// T × 8.
    pub tool_scores: Matrix,
    pub truth: Vec<FrameLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub videos: Vec<VideoPrediction>,
    pub tool_space: ScoreSpace,
}

impl PredictionSet {
    pub fn new(videos: Vec<VideoPrediction>, tool_space: ScoreSpace) -> Result<Self> {
        for v in &videos {
            let t = v.truth.len();
            if v.phase_scores.rows() != t || v.tool_scores.rows() != t {
                return Err(Error::Dimension(format!("video {}: score rows do not match {t} labels", v.video_id)));
            }
            if v.phase_scores.cols() != N_PHASES || v.tool_scores.cols() != N_TOOLS {
                return Err(Error::Dimension(format!("video {}: expected 7 phase and 8 tool columns", v.video_id)));
            }
            if !v.phase_scores.is_finite() || !v.tool_scores.is_finite() {
                return Err(Error::Numeric(format!("video {}: non-finite scores", v.video_id)));
            }
        }
        Ok(Self { videos, tool_space })
    }

    /// Tool probability of frame `t`, class `c`.
    fn tool_probability(&self, v: &VideoPrediction, t: usize, c: usize) -> f64 {
        let s = v.tool_scores.get(t, c);
        match self.tool_space {
            ScoreSpace::Probability => s,
            ScoreSpace::Logit => sigmoid_scalar(s),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.videos.iter().map(|v| v.truth.len()).sum()
    }
}

/// A predicted frame. Unlike [`FrameLabel`] it places no cap on the number
/// of tools; the no-tool bit is set iff no physical tool passes the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub phase: usize,
    pub tools: [bool; N_TOOLS],
}

pub fn classify_from_scores(pred: &PredictionSet, tool_threshold: f64) -> Result<Vec<Vec<FramePrediction>>> {
    pred.videos
        .iter()
        .map(|v| {
            (0..v.truth.len())
                .map(|t| {
                    let mut tools = [false; N_TOOLS];
                    for (c, slot) in tools.iter_mut().enumerate().take(N_PHYSICAL_TOOLS) {
                        *slot = pred.tool_probability(v, t, c) >= tool_threshold;
                    }
                    tools[NO_TOOL] = !tools[..N_PHYSICAL_TOOLS].iter().any(|&b| b);
                    Ok(FramePrediction { phase: argmax(v.phase_scores.row(t))?, tools })
                })
                .collect()
        })
        .collect()
}
