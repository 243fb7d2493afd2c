use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, median_filter_labels, median_filter_scores, Confusion};
use super::{classify_from_scores, FramePrediction, PredictionSet, ScoreSpace, VideoPrediction};
use crate::data::{VideoAnnotation, N_PHASES, N_PHYSICAL_TOOLS, N_TOOLS, PHASE_NAMES, TOOL_NAMES};
use crate::error::{Error, Result};
use crate::losses::MultitaskWeights;
use crate::model::{bilstm_forward, encoder_forward};
use crate::stats::apply_whitening;
use crate::tensor::{sigmoid, softmax, Matrix};
use crate::train::{Ablation, Stage, TrainState};

pub const REFERENCE_SOURCE: &str = "paper-table-2";
const REPORT_FORMAT: &str = "surgflow-eval-report";
const AP_DEFINITION: &str =
    "mean precision at the rank of each positive; descending score, ties by ascending frame index; frames pooled over videos in id order";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Median filter window in frames (odd).
    pub smooth_window: usize,
    pub tool_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { smooth_window: 9, tool_threshold: 0.5 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smooth_window == 0 || self.smooth_window % 2 == 0 {
            return Err(Error::config(
                "eval.smooth_window",
                format!("must be odd and positive, got {}", self.smooth_window),
            ));
        }
        if !(0.0..=1.0).contains(&self.tool_threshold) {
            return Err(Error::config("eval.tool_threshold", format!("must be in [0,1], got {}", self.tool_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub ap: f64,
    /// Positive frames in the ground truth; classes with none are excluded from mAP.
    pub positives: usize,
    /// Whether the class enters the macro averages.
    pub in_average: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub classes: Vec<ClassMetrics>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_accuracy: f64,
    pub map: f64,
    pub map_excluded: Vec<String>,
    /// Fraction of frames whose predicted phase is correct (phase task only).
    pub frame_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub method: String,
    pub task: String,
    pub avg_precision: Option<f64>,
    pub avg_recall: Option<f64>,
    pub avg_accuracy: Option<f64>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub ablation: Ablation,
    pub alphas: MultitaskWeights,
    pub ap_definition: String,
    pub smoothing_window: usize,
    pub tool_threshold: f64,
    pub n_videos: usize,
    pub n_frames: usize,
    pub tool: Option<TaskMetrics>,
    pub phase_raw: Option<TaskMetrics>,
    pub phase_smoothed: Option<TaskMetrics>,
    pub reference: Vec<ReferenceRow>,
}

/// Static reference numbers from the published comparison table.
pub fn reference_rows() -> Vec<ReferenceRow> {
    let row = |method: &str, task: &str, p: Option<f64>, r: Option<f64>, a: Option<f64>| ReferenceRow {
        method: method.into(),
        task: task.into(),
        avg_precision: p,
        avg_recall: r,
        avg_accuracy: a,
        source: REFERENCE_SOURCE.into(),
    };
    vec![
        row("BL1", "tool", Some(0.955), Some(0.928), Some(0.958)),
        row("BL2", "tool", Some(0.963), Some(0.936), Some(0.964)),
        row("BL3", "phase", Some(0.515), Some(0.63), Some(0.88)),
        row("BL4", "phase", Some(0.63), Some(0.717), Some(0.92)),
        row("BL5", "tool", Some(0.974), Some(0.88), Some(0.938)),
        row("BL5", "phase", Some(0.705), Some(0.6944), Some(0.935)),
        row("BL6", "tool", Some(0.81), None, None),
        row("BL6", "phase", Some(0.848), Some(0.883), Some(0.92)),
        row("BL7", "tool", Some(0.9789), None, None),
        row("proposed", "tool", Some(0.99), Some(0.912), Some(0.9353)),
        row("proposed", "phase", Some(0.857), Some(0.835), Some(0.966)),
    ]
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn summarize(classes: Vec<ClassMetrics>, frame_accuracy: Option<f64>) -> TaskMetrics {
    let avg = || classes.iter().filter(|c| c.in_average);
    let map_excluded = avg().filter(|c| c.positives == 0).map(|c| c.name.clone()).collect();
    TaskMetrics {
        mean_precision: mean(avg().map(|c| c.precision)),
        mean_recall: mean(avg().map(|c| c.recall)),
        mean_accuracy: mean(avg().map(|c| c.accuracy)),
        map: mean(avg().filter(|c| c.positives > 0).map(|c| c.ap)),
        map_excluded,
        frame_accuracy,
        classes,
    }
}

fn class_metrics(name: &str, pred: &[bool], truth: &[bool], scores: &[f64], in_average: bool) -> Result<ClassMetrics> {
    let prf = Confusion::from_bits(pred, truth)?.prf();
    let ap = average_precision(scores, truth)?;
    Ok(ClassMetrics {
        name: name.into(),
        precision: prf.precision,
        recall: prf.recall,
        accuracy: prf.accuracy,
        ap: ap.value,
        positives: ap.positives,
        in_average,
    })
}

fn tool_metrics(
    pred: &PredictionSet,
    videos: &[&VideoPrediction],
    frames: &[&[FramePrediction]],
) -> Result<TaskMetrics> {
    let mut classes = Vec::with_capacity(N_TOOLS);
    for c in 0..N_TOOLS {
        let mut p = Vec::new();
        let mut t = Vec::new();
        let mut s = Vec::new();
        for (v, f) in videos.iter().zip(frames) {
            for (k, fr) in f.iter().enumerate() {
                p.push(fr.tools[c]);
                t.push(v.truth[k].has_tool(c));
                s.push(pred.tool_probability(v, k, c));
            }
        }
        classes.push(class_metrics(TOOL_NAMES[c], &p, &t, &s, c < N_PHYSICAL_TOOLS)?);
    }
    Ok(summarize(classes, None))
}

fn phase_metrics(videos: &[&VideoPrediction], window: usize) -> Result<TaskMetrics> {
    let mut labels = Vec::new();
    let mut truth = Vec::new();
    let mut scores = vec![Vec::new(); N_PHASES];
    for v in videos {
        let raw: Vec<usize> =
            (0..v.truth.len()).map(|t| crate::tensor::argmax(v.phase_scores.row(t))).collect::<Result<_>>()?;
        labels.extend(median_filter_labels(&raw, window)?);
        truth.extend(v.truth.iter().map(|l| l.phase()));
        for (c, track) in scores.iter_mut().enumerate() {
            let col: Vec<f64> = (0..v.truth.len()).map(|t| v.phase_scores.get(t, c)).collect();
            track.extend(median_filter_scores(&col, window)?);
        }
    }
    let frame_accuracy = labels.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64;
    let classes = (0..N_PHASES)
        .map(|c| {
            let p: Vec<bool> = labels.iter().map(|&x| x == c).collect();
            let t: Vec<bool> = truth.iter().map(|&x| x == c).collect();
            class_metrics(PHASE_NAMES[c], &p, &t, &scores[c], true)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(classes, Some(frame_accuracy)))
}

/// Pooled metrics over every frame of the prediction set. Videos are
/// visited in id order so the result does not depend on their order.
pub fn build_report(
    pred: &PredictionSet,
    cfg: &EvalConfig,
    ablation: Ablation,
    alphas: MultitaskWeights,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut videos: Vec<&VideoPrediction> = pred.videos.iter().collect();
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let classified = classify_from_scores(pred, cfg.tool_threshold)?;
    let mut by_id: Vec<(&str, &[FramePrediction])> =
        pred.videos.iter().zip(&classified).map(|(v, f)| (v.video_id.as_str(), f.as_slice())).collect();
    by_id.sort_by(|a, b| a.0.cmp(b.0));
    let frames: Vec<&[FramePrediction]> = by_id.into_iter().map(|(_, f)| f).collect();

    let tool = if ablation.trains_tool() { Some(tool_metrics(pred, &videos, &frames)?) } else { None };
    let (phase_raw, phase_smoothed) = if ablation.trains_phase() {
        (Some(phase_metrics(&videos, 1)?), Some(phase_metrics(&videos, cfg.smooth_window)?))
    } else {
        (None, None)
    };
    Ok(EvalReport {
        format: REPORT_FORMAT.into(),
        ablation,
        alphas: ablation.mask(alphas),
        ap_definition: AP_DEFINITION.into(),
        smoothing_window: cfg.smooth_window,
        tool_threshold: cfg.tool_threshold,
        n_videos: pred.videos.len(),
        n_frames: pred.n_frames(),
        tool,
        phase_raw,
        phase_smoothed,
        reference: reference_rows(),
    })
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `method,task,class,metric,smoothing,value,source`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,task,class,metric,smoothing,value,source\n");
        let method = self.ablation.name();
        let mut task_rows = |task: &str, smoothing: &str, m: &TaskMetrics| {
            for c in &m.classes {
                for (metric, v) in
                    [("precision", c.precision), ("recall", c.recall), ("accuracy", c.accuracy), ("ap", c.ap)]
                {
                    out.push_str(&format!(
                        "{method},{task},{},{metric},{smoothing},{},measured\n",
                        c.name,
                        fmt_value(v)
                    ));
                }
            }
            let mut means = vec![
                ("precision", m.mean_precision),
                ("recall", m.mean_recall),
                ("accuracy", m.mean_accuracy),
                ("map", m.map),
            ];
            if let Some(a) = m.frame_accuracy {
                means.push(("frame_accuracy", a));
            }
            for (metric, v) in means {
                out.push_str(&format!("{method},{task},average,{metric},{smoothing},{},measured\n", fmt_value(v)));
            }
        };
        if let Some(m) = &self.tool {
            task_rows("tool", "none", m);
        }
        if let Some(m) = &self.phase_raw {
            task_rows("phase", "raw", m);
        }
        if let Some(m) = &self.phase_smoothed {
            task_rows("phase", &format!("median{}", self.smoothing_window), m);
        }
        for r in &self.reference {
            for (metric, v) in [("precision", r.avg_precision), ("recall", r.avg_recall), ("accuracy", r.avg_accuracy)]
            {
                if let Some(v) = v {
                    out.push_str(&format!(
                        "{},{},average,{metric},n/a,{},{}\n",
                        r.method,
                        r.task,
                        fmt_value(v),
                        r.source
                    ));
                }
            }
        }
        out
    }
}

/// Phase (softmax, T × 7) and tool (sigmoid, T × 8) probabilities for one
/// feature sequence, from the Bi-LSTM when the run has one and from the
/// encoder heads otherwise.
pub fn predict_scores(state: &TrainState, features: &[Vec<f64>]) -> Result<(Matrix, Matrix)> {
    let input = state.input_dim();
    if let Some(x) = features.iter().find(|x| x.len() != input) {
        return Err(Error::Mismatch(format!("feature dimension {}, the model expects {input}", x.len())));
    }
    let n = features.len();
    let mut ps = Matrix::zeros(n, N_PHASES);
    let mut ts = Matrix::zeros(n, N_TOOLS);
    let mut put = |t: usize, phase_logits: &[f64], tool_logits: &[f64]| -> Result<()> {
        ps.row_mut(t).copy_from_slice(&softmax(phase_logits)?);
        ts.row_mut(t).copy_from_slice(&sigmoid(tool_logits));
        Ok(())
    };
    match (&state.bilstm, state.stage) {
        (Some(params), Stage::Done) => {
            let whitening = state
                .whitening
                .as_ref()
                .ok_or_else(|| Error::Mismatch("checkpoint has a Bi-LSTM but no whitening".into()))?;
            let mut seq = Vec::with_capacity(n);
            for x in features {
                let h = encoder_forward(&state.encoder, x)?.features;
                seq.push(apply_whitening(whitening, &h)?);
            }
            let o = bilstm_forward(params, &seq)?;
            for t in 0..n {
                put(t, o.phase_logits.row(t), o.tool_logits.row(t))?;
            }
        }
        _ => {
            for (t, x) in features.iter().enumerate() {
                let o = encoder_forward(&state.encoder, x)?;
                put(t, &o.phase_logits, &o.tool_logits)?;
            }
        }
    }
    Ok((ps, ts))
}

/// Scores of a trained model on `videos`; see [`predict_scores`].
pub fn predict(state: &TrainState, videos: &[&VideoAnnotation]) -> Result<PredictionSet> {
    let mut out = Vec::with_capacity(videos.len());
    for v in videos {
        let features =
            v.features().ok_or_else(|| Error::Mismatch(format!("video {} has no feature vectors", v.id())))?;
        let (phase_scores, tool_scores) = predict_scores(state, features).map_err(|e| match e {
            Error::Mismatch(m) => Error::Mismatch(format!("video {}: {m}", v.id())),
            e => e,
        })?;
        out.push(VideoPrediction { video_id: v.id().into(), phase_scores, tool_scores, truth: v.labels().to_vec() });
    }
    PredictionSet::new(out, ScoreSpace::Probability)
}
