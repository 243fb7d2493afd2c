//! Statistics derived from the training split: median-frequency class
//! weights, the tool/phase co-occurrence model and feature whitening.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::codec::{decode_f64s, encode_f64s};
use crate::data::label::{FrameLabel, N_PHASES, N_TOOLS, PHASE_NAMES, TOOL_NAMES};
use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

/// Default co-occurrence epsilon; caps IF at 1e8.
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Machine epsilon, for runs that want the literal "smallest value" reading.
pub const STRICT_EPSILON: f64 = f64::EPSILON;
pub const DEFAULT_WHITENING_LAMBDA: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassFrequencies {
    counts: Vec<u64>,
    names: Vec<String>,
}

impl ClassFrequencies {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let names = (0..counts.len()).map(|i| format!("class{i}")).collect();
        Self::with_names(counts, names)
    }

    pub fn with_names(counts: Vec<u64>, names: Vec<String>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidArgument("no classes".into()));
        }
        if names.len() != counts.len() {
            return Err(Error::Dimension(format!("{} class names for {} classes", names.len(), counts.len())));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidArgument("all class counts are zero".into()));
        }
        Ok(Self { counts, names })
    }

    pub fn phases<'a>(labels: impl IntoIterator<Item = &'a FrameLabel>) -> Result<Self> {
        let mut counts = vec![0u64; N_PHASES];
        for l in labels {
            counts[l.phase()] += 1;
        }
        Self::with_names(counts, PHASE_NAMES.iter().map(|s| s.to_string()).collect())
    }

    pub fn tools<'a>(labels: impl IntoIterator<Item = &'a FrameLabel>) -> Result<Self> {
        let mut counts = vec![0u64; N_TOOLS];
        for l in labels {
            for t in l.tools() {
                counts[t] += 1;
            }
        }
        Self::with_names(counts, TOOL_NAMES.iter().map(|s| s.to_string()).collect())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidArgument("class weights must be positive and finite".into()));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Median frequency balancing: `w[c] = median(f) / f[c]`.
///
/// The frequency normaliser cancels in the ratio, so weights are computed
/// from raw counts directly.
pub fn compute_class_weights(freq: &ClassFrequencies) -> Result<ClassWeights> {
    if let Some(c) = freq.counts.iter().position(|&c| c == 0) {
        return Err(Error::ZeroFrequency { class: c, name: freq.names[c].clone() });
    }
    let mut sorted: Vec<f64> = freq.counts.iter().map(|&c| c as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    ClassWeights::new(freq.counts.iter().map(|&c| med / c as f64).collect())
}

/// Tool × phase co-occurrence counts with the derived column-normalised
/// matrix and its inverse-frequency penalty table.
///
/// Rows are tools (including the no-tool row), columns are phases.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceModel {
    n_tools: usize,
    n_phases: usize,
    epsilon: f64,
    counts: Vec<u64>,
    c_hat: Matrix,
    inv_freq: Matrix,
    unobserved_phases: Vec<usize>,
    tool_names: Vec<String>,
    phase_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CooccurrenceDoc {
    n_tools: usize,
    n_phases: usize,
    epsilon: f64,
    counts: Vec<u64>,
    tool_names: Vec<String>,
    phase_names: Vec<String>,
}

impl CooccurrenceModel {
    pub fn from_counts(n_tools: usize, n_phases: usize, counts: Vec<u64>, epsilon: f64) -> Result<Self> {
        let tool_names = if n_tools == N_TOOLS {
            TOOL_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..n_tools).map(|i| format!("tool{i}")).collect()
        };
        let phase_names = if n_phases == N_PHASES {
            PHASE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..n_phases).map(|j| format!("phase{j}")).collect()
        };
        Self::from_parts(n_tools, n_phases, counts, epsilon, tool_names, phase_names)
    }

    fn from_parts(
        n_tools: usize,
        n_phases: usize,
        counts: Vec<u64>,
        epsilon: f64,
        tool_names: Vec<String>,
        phase_names: Vec<String>,
    ) -> Result<Self> {
        if n_tools == 0 || n_phases == 0 {
            return Err(Error::Dimension("co-occurrence needs at least one tool and phase".into()));
        }
        if counts.len() != n_tools * n_phases {
            return Err(Error::Dimension(format!(
                "{} counts for a {n_tools}x{n_phases} co-occurrence matrix",
                counts.len()
            )));
        }
        if tool_names.len() != n_tools || phase_names.len() != n_phases {
            return Err(Error::Dimension("co-occurrence name lists do not match dims".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut c_hat = Matrix::zeros(n_tools, n_phases);
        let mut inv_freq = Matrix::zeros(n_tools, n_phases);
        let mut unobserved_phases = Vec::new();
        for j in 0..n_phases {
            let total: u64 = (0..n_tools).map(|i| counts[i * n_phases + j]).sum();
            if total == 0 {
                warn!("phase column {j} has no frames; using a uniform tool distribution");
                unobserved_phases.push(j);
            }
            for i in 0..n_tools {
                let v = if total == 0 { 1.0 / n_tools as f64 } else { counts[i * n_phases + j] as f64 / total as f64 };
                c_hat.set(i, j, v);
                inv_freq.set(i, j, 1.0 / (v + epsilon));
            }
        }
        Ok(Self { n_tools, n_phases, epsilon, counts, c_hat, inv_freq, unobserved_phases, tool_names, phase_names })
    }

    /// Counts from `(phase, tools present)` pairs.
    pub fn from_pairs<I, T>(n_tools: usize, n_phases: usize, frames: I, epsilon: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, T)>,
        T: IntoIterator<Item = usize>,
    {
        let mut counts = vec![0u64; n_tools * n_phases];
        let mut any = false;
        for (phase, tools) in frames {
            if phase >= n_phases {
                return Err(Error::Dimension(format!("phase {phase} out of range")));
            }
            any = true;
            for t in tools {
                if t >= n_tools {
                    return Err(Error::Dimension(format!("tool {t} out of range")));
                }
                counts[t * n_phases + phase] += 1;
            }
        }
        if !any {
            return Err(Error::InvalidArgument("no labelled frames".into()));
        }
        Self::from_counts(n_tools, n_phases, counts, epsilon)
    }

    pub fn n_tools(&self) -> usize {
        self.n_tools
    }

    pub fn n_phases(&self) -> usize {
        self.n_phases
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn count(&self, tool: usize, phase: usize) -> u64 {
        self.counts[tool * self.n_phases + phase]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Column-normalised co-occurrence (each phase column sums to 1).
    pub fn c_hat(&self) -> &Matrix {
        &self.c_hat
    }

    /// `1 / (ĉ + ε)` per (tool, phase).
    pub fn inverse_frequency(&self) -> &Matrix {
        &self.inv_freq
    }

    pub fn unobserved_phases(&self) -> &[usize] {
        &self.unobserved_phases
    }

    pub fn tool_names(&self) -> &[String] {
        &self.tool_names
    }

    pub fn phase_names(&self) -> &[String] {
        &self.phase_names
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CooccurrenceDoc {
            n_tools: self.n_tools,
            n_phases: self.n_phases,
            epsilon: self.epsilon,
            counts: self.counts.clone(),
            tool_names: self.tool_names.clone(),
            phase_names: self.phase_names.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CooccurrenceDoc = serde_json::from_str(text)?;
        Self::from_parts(doc.n_tools, doc.n_phases, doc.counts, doc.epsilon, doc.tool_names, doc.phase_names)
    }

    /// Aligned text table of raw counts, tools down, phases across.
    pub fn format_table(&self) -> String {
        let name_w = self.tool_names.iter().map(String::len).max().unwrap_or(4).max(4);
        let col_w: Vec<usize> = (0..self.n_phases)
            .map(|j| {
                let max_count = (0..self.n_tools).map(|i| self.count(i, j)).max().unwrap_or(0);
                self.phase_names[j].len().max(max_count.to_string().len())
            })
            .collect();
        let mut out = format!("{:name_w$}", "tool");
        for (j, w) in col_w.iter().enumerate() {
            out.push_str(&format!("  {:>w$}", self.phase_names[j], w = *w));
        }
        out.push('\n');
        for i in 0..self.n_tools {
            out.push_str(&format!("{:name_w$}", self.tool_names[i]));
            for (j, w) in col_w.iter().enumerate() {
                out.push_str(&format!("  {:>w$}", self.count(i, j), w = *w));
            }
            out.push('\n');
        }
        out
    }
}

/// Co-occurrence model of the full label space (8 tool rows × 7 phases).
pub fn build_cooccurrence<'a>(
    labels: impl IntoIterator<Item = &'a FrameLabel>,
    epsilon: f64,
) -> Result<CooccurrenceModel> {
    CooccurrenceModel::from_pairs(
        N_TOOLS,
        N_PHASES,
        labels.into_iter().map(|l| (l.phase(), l.tools().collect::<Vec<_>>())),
        epsilon,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WhiteningMode {
    #[default]
    Zca,
    Standardize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningModel {
    mean: Vec<f64>,
    transform: Matrix,
    lambda: f64,
    mode: WhiteningMode,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhiteningDoc {
    dim: usize,
    mode: WhiteningMode,
    lambda: f64,
    mean: String,
    transform: String,
}

impl WhiteningModel {
    pub fn new(mean: Vec<f64>, transform: Matrix, lambda: f64, mode: WhiteningMode) -> Result<Self> {
        if transform.rows() != mean.len() || transform.cols() != mean.len() {
            return Err(Error::Dimension(format!(
                "whitening transform {}x{} does not match mean of length {}",
                transform.rows(),
                transform.cols(),
                mean.len()
            )));
        }
        if !transform.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("whitening parameters are not finite".into()));
        }
        Ok(Self { mean, transform, lambda, mode })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], transform: Matrix::identity(dim), lambda: 0.0, mode: WhiteningMode::Zca }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn transform(&self) -> &Matrix {
        &self.transform
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mode(&self) -> WhiteningMode {
        self.mode
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&WhiteningDoc {
            dim: self.dim(),
            mode: self.mode,
            lambda: self.lambda,
            mean: encode_f64s(&self.mean),
            transform: encode_f64s(self.transform.as_slice()),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WhiteningDoc = serde_json::from_str(text)?;
        let mean = decode_f64s(&doc.mean)?;
        if mean.len() != doc.dim {
            return Err(Error::Mismatch(format!("mean has {} entries, dim is {}", mean.len(), doc.dim)));
        }
        let transform = Matrix::from_vec(doc.dim, doc.dim, decode_f64s(&doc.transform)?)?;
        Self::new(mean, transform, doc.lambda, doc.mode)
    }
}

/// Sample mean and unbiased covariance.
pub fn mean_and_covariance(features: &[Vec<f64>]) -> Result<(Vec<f64>, Matrix)> {
    let n = features.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 feature vectors, got {n}")));
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::Dimension("zero-dimensional features".into()));
    }
    let mut mean = vec![0.0; d];
    for (k, f) in features.iter().enumerate() {
        if f.len() != d {
            return Err(Error::Dimension(format!("feature {k} has dimension {}, expected {d}", f.len())));
        }
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for f in features {
        for ((c, x), m) in centered.iter_mut().zip(f).zip(&mean) {
            *c = x - m;
        }
        cov.add_outer(&centered, &centered);
    }
    cov.as_mut_slice().iter_mut().for_each(|v| *v /= (n - 1) as f64);
    Ok((mean, cov))
}

/// Fits a whitening transform on `features`.
///
/// ZCA: `(Cov + λI)^(-1/2)` through a symmetric eigendecomposition.
/// Standardize: diagonal `1 / sqrt(var + λ)`.
pub fn fit_whitening(features: &[Vec<f64>], lambda: f64, mode: WhiteningMode) -> Result<WhiteningModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let (mean, cov) = mean_and_covariance(features)?;
    let d = mean.len();
    let transform = match mode {
        WhiteningMode::Standardize => {
            let mut t = Matrix::zeros(d, d);
            for i in 0..d {
                let denom = (cov.get(i, i) + lambda).sqrt();
                if denom <= 0.0 {
                    return Err(Error::Numeric(format!("feature {i} has zero variance and lambda is 0")));
                }
                t.set(i, i, 1.0 / denom);
            }
            t
        }
        WhiteningMode::Zca => {
            let m = DMatrix::from_row_slice(d, d, cov.as_slice());
            let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
                .ok_or_else(|| Error::Numeric("eigendecomposition did not converge".into()))?;
            let mut scale = Vec::with_capacity(d);
            for &e in eig.eigenvalues.iter() {
                let denom = (e.max(0.0) + lambda).sqrt();
                if denom <= 0.0 {
                    return Err(Error::Numeric("singular covariance with lambda = 0".into()));
                }
                scale.push(1.0 / denom);
            }
            let v = &eig.eigenvectors;
            let mut t = Matrix::zeros(d, d);
            for r in 0..d {
                for c in r..d {
                    let s: f64 = (0..d).map(|k| v[(r, k)] * scale[k] * v[(c, k)]).sum();
                    t.set(r, c, s);
                    t.set(c, r, s);
                }
            }
            t
        }
    };
    WhiteningModel::new(mean, transform, lambda, mode)
}

/// `transform · (x − mean)`.
pub fn apply_whitening(model: &WhiteningModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "feature of dimension {} for a {}-dimensional whitening model",
            x.len(),
            model.dim()
        )));
    }
    let centered: Vec<f64> = x.iter().zip(&model.mean).map(|(a, m)| a - m).collect();
    Ok((0..model.dim()).map(|r| dot(model.transform.row(r), &centered)).collect())
}
