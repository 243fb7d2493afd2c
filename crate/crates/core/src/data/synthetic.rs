//! Semi-Markov synthetic workflow generator.
//!
//! Each video walks the phases in order, holding each phase for a
//! normally distributed number of seconds. Every frame draws tools from
//! per-phase emission probabilities and gets a feature vector built from
//! fixed phase/tool embeddings plus isotropic noise.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::label::{FrameLabel, MAX_TOOLS_PER_FRAME, N_PHASES, N_PHYSICAL_TOOLS, N_TOOLS};
use super::VideoAnnotation;
use crate::error::{Error, Result};
use crate::tensor::SeededRng;

/// Mean phase durations in seconds (Cholec80 training statistics).
pub const PHASE_DURATION_MEAN: [f64; N_PHASES] = [125.0, 954.0, 168.0, 857.0, 98.0, 178.0, 83.0];
pub const PHASE_DURATION_STD: [f64; N_PHASES] = [95.0, 538.0, 152.0, 551.0, 53.0, 166.0, 56.0];

/// Artifact-chosen tool emission probabilities, `[tool][phase]`. These are
/// illustrative values shaped like typical cholecystectomy tool usage,
/// not measured statistics.
pub const DEFAULT_TOOL_EMISSION: [[f64; N_PHASES]; N_PHYSICAL_TOOLS] = [
    // Grasper
    [0.50, 0.90, 0.60, 0.90, 0.80, 0.60, 0.70],
    // Bipolar
    [0.02, 0.08, 0.05, 0.10, 0.03, 0.50, 0.05],
    // Hook
    [0.05, 0.95, 0.05, 0.90, 0.03, 0.10, 0.02],
    // Scissors
    [0.01, 0.02, 0.30, 0.02, 0.01, 0.02, 0.01],
    // Clipper
    [0.01, 0.02, 0.85, 0.02, 0.01, 0.05, 0.01],
    // Irrigator
    [0.02, 0.05, 0.05, 0.08, 0.05, 0.60, 0.10],
    // SpecimenBag
    [0.01, 0.01, 0.01, 0.02, 0.90, 0.10, 0.85],
];

const EMBEDDING_TAG: u64 = 0xE3BE_D000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_videos: usize,
    pub phase_order: Vec<usize>,
    pub duration_mean: Vec<f64>,
    pub duration_std: Vec<f64>,
    /// Multiplies every duration mean and std (1.0 keeps the Cholec80 statistics in seconds).
    pub time_scale: f64,
    /// Probability of swapping the packaging and cleaning phases.
    pub swap_p5_p6_prob: f64,
    /// `[tool][phase]` emission probabilities for the 7 physical tools.
    pub tool_emission: Vec<Vec<f64>>,
    pub feature_dim: usize,
    pub embedding_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_videos: 80,
            phase_order: (0..N_PHASES).collect(),
            duration_mean: PHASE_DURATION_MEAN.to_vec(),
            duration_std: PHASE_DURATION_STD.to_vec(),
            time_scale: 1.0,
            swap_p5_p6_prob: 0.0,
            tool_emission: DEFAULT_TOOL_EMISSION.iter().map(|r| r.to_vec()).collect(),
            feature_dim: 64,
            embedding_scale: 1.0,
            noise_sigma: 0.5,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    /// Desk-scale variant: 40 videos of roughly 300 frames.
    pub fn desk() -> Self {
        Self { n_videos: 40, time_scale: 300.0 / PHASE_DURATION_MEAN.iter().sum::<f64>(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let p = "synthetic";
        if self.n_videos == 0 {
            return Err(Error::config(format!("{p}.n_videos"), "must be positive"));
        }
        if self.phase_order.is_empty() {
            return Err(Error::config(format!("{p}.phase_order"), "must not be empty"));
        }
        for (i, &ph) in self.phase_order.iter().enumerate() {
            if ph >= N_PHASES {
                return Err(Error::config(format!("{p}.phase_order[{i}]"), format!("phase {ph} out of range")));
            }
        }
        for (name, v) in [("duration_mean", &self.duration_mean), ("duration_std", &self.duration_std)] {
            if v.len() != N_PHASES {
                return Err(Error::config(
                    format!("{p}.{name}"),
                    format!("expected {N_PHASES} entries, got {}", v.len()),
                ));
            }
        }
        for (i, &m) in self.duration_mean.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::config(format!("{p}.duration_mean[{i}]"), format!("must be positive, got {m}")));
            }
        }
        for (i, &s) in self.duration_std.iter().enumerate() {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config(format!("{p}.duration_std[{i}]"), format!("must be non-negative, got {s}")));
            }
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::config(format!("{p}.time_scale"), "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.swap_p5_p6_prob) {
            return Err(Error::config(format!("{p}.swap_p5_p6_prob"), "probability outside [0, 1]"));
        }
        if self.tool_emission.len() != N_PHYSICAL_TOOLS {
            return Err(Error::config(
                format!("{p}.tool_emission"),
                format!("expected {N_PHYSICAL_TOOLS} tool rows, got {}", self.tool_emission.len()),
            ));
        }
        for (t, row) in self.tool_emission.iter().enumerate() {
            if row.len() != N_PHASES {
                return Err(Error::config(
                    format!("{p}.tool_emission[{t}]"),
                    format!("expected {N_PHASES} phase columns, got {}", row.len()),
                ));
            }
            for (ph, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(
                        format!("{p}.tool_emission[{t}][{ph}]"),
                        format!("probability {v} outside [0, 1]"),
                    ));
                }
            }
        }
        if self.feature_dim == 0 {
            return Err(Error::config(format!("{p}.feature_dim"), "must be positive"));
        }
        if !(self.embedding_scale >= 0.0 && self.embedding_scale.is_finite()) {
            return Err(Error::config(format!("{p}.embedding_scale"), "must be non-negative"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!("{p}.noise_sigma"), "must be non-negative"));
        }
        Ok(())
    }

    pub fn video_id(index: usize) -> String {
        format!("video{:02}", index + 1)
    }
}

/// Fixed per-class embedding vectors shared by all videos of one seed.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub phase: Vec<Vec<f64>>,
    pub tool: Vec<Vec<f64>>,
}

impl Embeddings {
    pub fn new(cfg: &SyntheticConfig) -> Self {
        let mut rng = SeededRng::new(cfg.seed).child(EMBEDDING_TAG);
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| {
                    (0..cfg.feature_dim)
                        .map(|_| cfg.embedding_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                        .collect()
                })
                .collect()
        };
        let phase = draw(N_PHASES);
        let tool = draw(N_TOOLS);
        Self { phase, tool }
    }
}

/// Keeps at most three sampled tools, preferring higher emission
/// probability (ties go to the lower tool index).
fn truncate_tools(sampled: u8, probs: &[f64; N_PHYSICAL_TOOLS]) -> u8 {
    if sampled.count_ones() as usize <= MAX_TOOLS_PER_FRAME {
        return sampled;
    }
    let mut present: Vec<usize> = (0..N_PHYSICAL_TOOLS).filter(|&t| sampled & (1 << t) != 0).collect();
    present.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    present[..MAX_TOOLS_PER_FRAME].iter().fold(0u8, |m, &t| m | (1 << t))
}

fn phase_sequence(cfg: &SyntheticConfig, rng: &mut SeededRng) -> Vec<usize> {
    let mut order = cfg.phase_order.clone();
    if cfg.swap_p5_p6_prob > 0.0 && rng.gen_bool(cfg.swap_p5_p6_prob) {
        if let (Some(a), Some(b)) = (order.iter().position(|&p| p == 4), order.iter().position(|&p| p == 5)) {
            order.swap(a, b);
        }
    }
    order
}

fn generate_video(cfg: &SyntheticConfig, emb: &Embeddings, index: usize) -> Result<VideoAnnotation> {
    let mut rng = SeededRng::new(cfg.seed).child(index as u64 + 1);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::config("synthetic.noise_sigma", e.to_string()))?;
    let mut labels = Vec::new();
    let mut features = Vec::new();
    for phase in phase_sequence(cfg, &mut rng) {
        let mean = cfg.duration_mean[phase] * cfg.time_scale;
        let std = cfg.duration_std[phase] * cfg.time_scale;
        let raw = mean + std * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let duration = raw.round().max(1.0) as usize;
        let mut probs = [0.0; N_PHYSICAL_TOOLS];
        for (t, p) in probs.iter_mut().enumerate() {
            *p = cfg.tool_emission[t][phase];
        }
        for _ in 0..duration {
            let mut sampled = 0u8;
            for (t, &p) in probs.iter().enumerate() {
                // one uniform draw per tool keeps the stream layout fixed
                if rng.gen::<f64>() < p {
                    sampled |= 1 << t;
                }
            }
            let label = FrameLabel::new(phase, truncate_tools(sampled, &probs))?;
            let mut f = emb.phase[phase].clone();
            for t in label.tools() {
                f.iter_mut().zip(&emb.tool[t]).for_each(|(a, b)| *a += b);
            }
            for v in f.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            labels.push(label);
            features.push(f);
        }
    }
    VideoAnnotation::new(SyntheticConfig::video_id(index), labels, Some(features))
}

/// Generates `cfg.n_videos` videos; video `i` depends only on
/// `(cfg.seed, i)`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<VideoAnnotation>> {
    cfg.validate()?;
    let emb = Embeddings::new(cfg);
    (0..cfg.n_videos).map(|i| generate_video(cfg, &emb, i)).collect()
}

/// Expected column-normalised co-occurrence `[tool][phase]` under the
/// generator, by enumerating every subset of physical tools.
pub fn expected_cooccurrence(cfg: &SyntheticConfig) -> Vec<[f64; N_PHASES]> {
    let mut out = vec![[0.0; N_PHASES]; N_TOOLS];
    for phase in 0..N_PHASES {
        let mut probs = [0.0; N_PHYSICAL_TOOLS];
        for (t, p) in probs.iter_mut().enumerate() {
            *p = cfg.tool_emission[t][phase];
        }
        let mut expected = [0.0; N_TOOLS];
        for subset in 0u8..(1 << N_PHYSICAL_TOOLS) {
            let p: f64 =
                (0..N_PHYSICAL_TOOLS).map(|t| if subset & (1 << t) != 0 { probs[t] } else { 1.0 - probs[t] }).product();
            let kept = truncate_tools(subset, &probs);
            if kept == 0 {
                expected[N_TOOLS - 1] += p;
            }
            for (t, e) in expected.iter_mut().take(N_PHYSICAL_TOOLS).enumerate() {
                if kept & (1 << t) != 0 {
                    *e += p;
                }
            }
        }
        let total: f64 = expected.iter().sum();
        for t in 0..N_TOOLS {
            out[t][phase] = expected[t] / total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig { n_videos: 3, feature_dim: 4, time_scale: 0.05, ..SyntheticConfig::default() }
    }

    #[test]
    fn deterministic_by_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticConfig { seed: 7, ..small() }).unwrap();
        let bounds = |v: &VideoAnnotation| v.labels().windows(2).position(|w| w[0].phase() != w[1].phase());
        assert!(a.iter().zip(&c).any(|(x, y)| bounds(x) != bounds(y) || x.len() != y.len()));
    }

    #[test]
    fn zero_std_gives_fixed_durations() {
        let cfg = SyntheticConfig { duration_std: vec![0.0; N_PHASES], ..small() };
        let videos = generate_synthetic(&cfg).unwrap();
        let expect: Vec<usize> =
            PHASE_DURATION_MEAN.iter().map(|m| (m * cfg.time_scale).round().max(1.0) as usize).collect();
        for v in &videos {
            let mut counts = [0usize; N_PHASES];
            v.labels().iter().for_each(|l| counts[l.phase()] += 1);
            assert_eq!(counts.to_vec(), expect);
        }
    }

    #[test]
    fn deterministic_emission() {
        let mut emission = vec![vec![0.0; N_PHASES]; N_PHYSICAL_TOOLS];
        emission[2][1] = 1.0;
        let cfg = SyntheticConfig { tool_emission: emission, ..small() };
        for v in generate_synthetic(&cfg).unwrap() {
            for l in v.labels() {
                if l.phase() == 1 {
                    assert_eq!(l.tools().collect::<Vec<_>>(), vec![2]);
                } else {
                    assert_eq!(l.tools().collect::<Vec<_>>(), vec![N_TOOLS - 1]);
                }
            }
        }
    }

    #[test]
    fn truncation_keeps_highest_probabilities() {
        let probs = [0.9, 0.1, 0.8, 0.5, 0.5, 0.2, 0.3];
        assert_eq!(truncate_tools(0b1111111, &probs), 0b0001101);
        assert_eq!(truncate_tools(0b11, &probs), 0b11);
    }

    #[test]
    fn labels_respect_invariants() {
        let cfg = SyntheticConfig { tool_emission: vec![vec![0.9; N_PHASES]; N_PHYSICAL_TOOLS], ..small() };
        for v in generate_synthetic(&cfg).unwrap() {
            assert!(v.labels().iter().all(|l| l.is_consistent()));
            assert!(v.labels().iter().all(|l| l.tools().count() == 3));
        }
    }

    #[test]
    fn invalid_probability_names_field() {
        let mut cfg = small();
        cfg.tool_emission[3][2] = 1.5;
        match cfg.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "synthetic.tool_emission[3][2]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn expected_cooccurrence_columns_normalised() {
        let e = expected_cooccurrence(&SyntheticConfig::default());
        for p in 0..N_PHASES {
            let s: f64 = (0..N_TOOLS).map(|t| e[t][p]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_phase_duration_matches_table() {
        let cfg = SyntheticConfig { n_videos: 5, feature_dim: 1, ..SyntheticConfig::default() };
        let videos = generate_synthetic(&cfg).unwrap();
        assert!(videos.iter().map(|v| v.len()).sum::<usize>() >= 10_000);
        let durations: Vec<f64> =
            videos.iter().map(|v| v.labels().iter().filter(|l| l.phase() == 0).count() as f64).collect();
        let n = durations.len() as f64;
        let mean = durations.iter().sum::<f64>() / n;
        let se = PHASE_DURATION_STD[0] / n.sqrt();
        assert!((mean - PHASE_DURATION_MEAN[0]).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn cooccurrence_converges_to_emission_table() {
        let cfg = SyntheticConfig { n_videos: 21, feature_dim: 1, ..SyntheticConfig::default() };
        let videos = generate_synthetic(&cfg).unwrap();
        let labels: Vec<FrameLabel> = videos.iter().flat_map(|v| v.labels().iter().copied()).collect();
        assert!(labels.len() >= 50_000, "{}", labels.len());
        let co = crate::stats::build_cooccurrence(&labels, crate::stats::DEFAULT_EPSILON).unwrap();
        let expected = expected_cooccurrence(&cfg);
        let mut worst = 0.0f64;
        for t in 0..N_TOOLS {
            for p in 0..N_PHASES {
                worst = worst.max((co.c_hat().get(t, p) - expected[t][p]).abs());
            }
        }
        assert!(worst < 0.02, "max deviation {worst}");
    }
}
