use serde::{Deserialize, Serialize};

use super::{glorot_uniform, relu_in_place, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub input: usize,
    pub hidden: usize,
    pub feature: usize,
    pub n_phases: usize,
    pub n_tools: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    dims: EncoderDims,
    pub w_in: Matrix,
    pub b_in: Vec<f64>,
    pub w_feat: Matrix,
    pub b_feat: Vec<f64>,
    pub w_phase: Matrix,
    pub b_phase: Vec<f64>,
    pub w_tool: Matrix,
    pub b_tool: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(dims: EncoderDims) -> Result<Self> {
        let EncoderDims { input, hidden, feature, n_phases, n_tools } = dims;
        if [input, hidden, feature, n_phases, n_tools].contains(&0) {
            return Err(Error::InvalidArgument(format!("encoder dims must be positive: {dims:?}")));
        }
        Ok(Self {
            dims,
            w_in: Matrix::zeros(hidden, input),
            b_in: vec![0.0; hidden],
            w_feat: Matrix::zeros(feature, hidden),
            b_feat: vec![0.0; feature],
            w_phase: Matrix::zeros(n_phases, feature),
            b_phase: vec![0.0; n_phases],
            w_tool: Matrix::zeros(n_tools, feature),
            b_tool: vec![0.0; n_tools],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: EncoderDims, rng: &mut SeededRng) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        p.w_in = glorot_uniform(dims.hidden, dims.input, rng);
        p.w_feat = glorot_uniform(dims.feature, dims.hidden, rng);
        p.w_phase = glorot_uniform(dims.n_phases, dims.feature, rng);
        p.w_tool = glorot_uniform(dims.n_tools, dims.feature, rng);
        Ok(p)
    }

    pub fn dims(&self) -> EncoderDims {
        self.dims
    }
}

impl ParamSet for EncoderParams {
    fn blobs(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_in", self.w_in.as_slice()),
            ("b_in", &self.b_in),
            ("w_feat", self.w_feat.as_slice()),
            ("b_feat", &self.b_feat),
            ("w_phase", self.w_phase.as_slice()),
            ("b_phase", &self.b_phase),
            ("w_tool", self.w_tool.as_slice()),
            ("b_tool", &self.b_tool),
        ]
    }

    fn blobs_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_in", self.w_in.as_mut_slice()),
            ("b_in", &mut self.b_in),
            ("w_feat", self.w_feat.as_mut_slice()),
            ("b_feat", &mut self.b_feat),
            ("w_phase", self.w_phase.as_mut_slice()),
            ("b_phase", &mut self.b_phase),
            ("w_tool", self.w_tool.as_mut_slice()),
            ("b_tool", &mut self.b_tool),
        ]
    }
}

/// Activations kept from the forward pass (post-relu values).
#[derive(Debug, Clone)]
pub struct EncoderCache {
    dims: EncoderDims,
    input: Vec<f64>,
    hidden: Vec<f64>,
    features: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub features: Vec<f64>,
    pub phase_logits: Vec<f64>,
    pub tool_logits: Vec<f64>,
    pub cache: EncoderCache,
}

pub fn encoder_forward(params: &EncoderParams, x: &[f64]) -> Result<EncoderOutput> {
    let d = params.dims;
    if x.len() != d.input {
        return Err(Error::Dimension(format!("encoder input has {} values, expected {}", x.len(), d.input)));
    }
    let mut hidden = vec![0.0; d.hidden];
    params.w_in.matvec_into(x, Some(&params.b_in), &mut hidden);
    relu_in_place(&mut hidden);
    let mut features = vec![0.0; d.feature];
    params.w_feat.matvec_into(&hidden, Some(&params.b_feat), &mut features);
    relu_in_place(&mut features);
    let mut phase_logits = vec![0.0; d.n_phases];
    params.w_phase.matvec_into(&features, Some(&params.b_phase), &mut phase_logits);
    let mut tool_logits = vec![0.0; d.n_tools];
    params.w_tool.matvec_into(&features, Some(&params.b_tool), &mut tool_logits);
    Ok(EncoderOutput {
        features: features.clone(),
        phase_logits,
        tool_logits,
        cache: EncoderCache { dims: d, input: x.to_vec(), hidden, features },
    })
}

/// Accumulates parameter gradients into `grads` given logit gradients.
pub fn encoder_backward(
    params: &EncoderParams,
    cache: &EncoderCache,
    grad_phase_logits: &[f64],
    grad_tool_logits: &[f64],
    grads: &mut EncoderParams,
) -> Result<()> {
    let d = params.dims;
    if cache.dims != d || grads.dims != d {
        return Err(Error::Mismatch("encoder cache or gradient buffer does not match parameters".into()));
    }
    if grad_phase_logits.len() != d.n_phases || grad_tool_logits.len() != d.n_tools {
        return Err(Error::Dimension("encoder logit gradient has the wrong length".into()));
    }

    grads.w_phase.add_outer(grad_phase_logits, &cache.features);
    add_assign(&mut grads.b_phase, grad_phase_logits);
    grads.w_tool.add_outer(grad_tool_logits, &cache.features);
    add_assign(&mut grads.b_tool, grad_tool_logits);

    let mut d_feat = vec![0.0; d.feature];
    params.w_phase.matvec_transpose_acc(grad_phase_logits, &mut d_feat);
    params.w_tool.matvec_transpose_acc(grad_tool_logits, &mut d_feat);
    for (g, &f) in d_feat.iter_mut().zip(&cache.features) {
        if f <= 0.0 {
            *g = 0.0;
        }
    }
    grads.w_feat.add_outer(&d_feat, &cache.hidden);
    add_assign(&mut grads.b_feat, &d_feat);

    let mut d_hidden = vec![0.0; d.hidden];
    params.w_feat.matvec_transpose_acc(&d_feat, &mut d_hidden);
    for (g, &h) in d_hidden.iter_mut().zip(&cache.hidden) {
        if h <= 0.0 {
            *g = 0.0;
        }
    }
    grads.w_in.add_outer(&d_hidden, &cache.input);
    add_assign(&mut grads.b_in, &d_hidden);
    Ok(())
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}
