use serde::{Deserialize, Serialize};

use super::{glorot_uniform, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{dot, sigmoid_scalar, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiLstmDims {
    pub input: usize,
    pub hidden: usize,
    pub n_phases: usize,
    pub n_tools: usize,
}

/// One recurrent direction. Gate blocks are stacked as `[i, f, g, o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl LstmDirection {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self { w: Matrix::zeros(4 * hidden, input), u: Matrix::zeros(4 * hidden, hidden), b: vec![0.0; 4 * hidden] }
    }

    fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        Self { w: glorot_uniform(4 * hidden, input, rng), u: glorot_uniform(4 * hidden, hidden, rng), b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    dims: BiLstmDims,
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
    /// Heads read `[h_fwd, h_bwd]` (2H columns).
    pub w_phase: Matrix,
    pub b_phase: Vec<f64>,
    pub w_tool: Matrix,
    pub b_tool: Vec<f64>,
}

impl BiLstmParams {
    pub fn zeros(dims: BiLstmDims) -> Result<Self> {
        let BiLstmDims { input, hidden, n_phases, n_tools } = dims;
        if [input, hidden, n_phases, n_tools].contains(&0) {
            return Err(Error::InvalidArgument(format!("Bi-LSTM dims must be positive: {dims:?}")));
        }
        Ok(Self {
            dims,
            fwd: LstmDirection::zeros(input, hidden),
            bwd: LstmDirection::zeros(input, hidden),
            w_phase: Matrix::zeros(n_phases, 2 * hidden),
            b_phase: vec![0.0; n_phases],
            w_tool: Matrix::zeros(n_tools, 2 * hidden),
            b_tool: vec![0.0; n_tools],
        })
    }

    /// Glorot-uniform weights, zero biases except forget gates at 1.0.
    pub fn init(dims: BiLstmDims, rng: &mut SeededRng) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        p.fwd = LstmDirection::init(dims.input, dims.hidden, rng);
        p.bwd = LstmDirection::init(dims.input, dims.hidden, rng);
        p.w_phase = glorot_uniform(dims.n_phases, 2 * dims.hidden, rng);
        p.w_tool = glorot_uniform(dims.n_tools, 2 * dims.hidden, rng);
        Ok(p)
    }

    pub fn dims(&self) -> BiLstmDims {
        self.dims
    }

    /// Swaps the two directions together with the head column blocks that
    /// read them. Running the result on a reversed sequence yields the
    /// time-reversed outputs of the original.
    pub fn mirrored(&self) -> Self {
        let h = self.dims.hidden;
        let swap_cols = |m: &Matrix| {
            let mut out = m.clone();
            for r in 0..m.rows() {
                let row = out.row_mut(r);
                let (a, b) = row.split_at_mut(h);
                a.swap_with_slice(b);
            }
            out
        };
        Self {
            dims: self.dims,
            fwd: self.bwd.clone(),
            bwd: self.fwd.clone(),
            w_phase: swap_cols(&self.w_phase),
            b_phase: self.b_phase.clone(),
            w_tool: swap_cols(&self.w_tool),
            b_tool: self.b_tool.clone(),
        }
    }
}

impl ParamSet for BiLstmParams {
    fn blobs(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("fwd.w", self.fwd.w.as_slice()),
            ("fwd.u", self.fwd.u.as_slice()),
            ("fwd.b", &self.fwd.b),
            ("bwd.w", self.bwd.w.as_slice()),
            ("bwd.u", self.bwd.u.as_slice()),
            ("bwd.b", &self.bwd.b),
            ("w_phase", self.w_phase.as_slice()),
            ("b_phase", &self.b_phase),
            ("w_tool", self.w_tool.as_slice()),
            ("b_tool", &self.b_tool),
        ]
    }

    fn blobs_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("fwd.w", self.fwd.w.as_mut_slice()),
            ("fwd.u", self.fwd.u.as_mut_slice()),
            ("fwd.b", &mut self.fwd.b),
            ("bwd.w", self.bwd.w.as_mut_slice()),
            ("bwd.u", self.bwd.u.as_mut_slice()),
            ("bwd.b", &mut self.bwd.b),
            ("w_phase", self.w_phase.as_mut_slice()),
            ("b_phase", &mut self.b_phase),
            ("w_tool", self.w_tool.as_mut_slice()),
            ("b_tool", &mut self.b_tool),
        ]
    }
}

/// Per-time-step activations of one direction, indexed by frame time.
#[derive(Debug, Clone)]
struct DirectionCache {
    /// T × 4H post-activation gates `[i, f, g, o]`.
    gates: Vec<f64>,
    /// T × H cell states.
    cell: Vec<f64>,
    /// T × H `tanh(c_t)`.
    tanh_cell: Vec<f64>,
    /// T × H hidden states.
    hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    dims: BiLstmDims,
    inputs: Vec<Vec<f64>>,
    fwd: DirectionCache,
    bwd: DirectionCache,
}

impl BiLstmCache {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// `[h_fwd[t], h_bwd[t]]`.
    pub fn combined_state(&self, t: usize) -> Vec<f64> {
        let h = self.dims.hidden;
        let mut v = Vec::with_capacity(2 * h);
        v.extend_from_slice(&self.fwd.hidden[t * h..(t + 1) * h]);
        v.extend_from_slice(&self.bwd.hidden[t * h..(t + 1) * h]);
        v
    }
}

#[derive(Debug, Clone)]
pub struct SequenceOutput {
    /// T × N1.
    pub phase_logits: Matrix,
    /// T × N2.
    pub tool_logits: Matrix,
    pub cache: BiLstmCache,
}

fn time_order(len: usize, reverse: bool) -> Vec<usize> {
    if reverse {
        (0..len).rev().collect()
    } else {
        (0..len).collect()
    }
}

fn run_direction(dir: &LstmDirection, inputs: &[Vec<f64>], hidden: usize, reverse: bool) -> DirectionCache {
    let t_len = inputs.len();
    let h = hidden;
    let mut cache = DirectionCache {
        gates: vec![0.0; t_len * 4 * h],
        cell: vec![0.0; t_len * h],
        tanh_cell: vec![0.0; t_len * h],
        hidden: vec![0.0; t_len * h],
    };
    let mut z = vec![0.0; 4 * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for t in time_order(t_len, reverse) {
        dir.w.matvec_into(&inputs[t], Some(&dir.b), &mut z);
        for (r, zr) in z.iter_mut().enumerate() {
            *zr += dot(dir.u.row(r), &h_prev);
        }
        let gates = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..h {
            let i = sigmoid_scalar(z[k]);
            let f = sigmoid_scalar(z[h + k]);
            let g = z[2 * h + k].tanh();
            let o = sigmoid_scalar(z[3 * h + k]);
            gates[k] = i;
            gates[h + k] = f;
            gates[2 * h + k] = g;
            gates[3 * h + k] = o;
            let c = f * c_prev[k] + i * g;
            let tc = c.tanh();
            cache.cell[t * h + k] = c;
            cache.tanh_cell[t * h + k] = tc;
            cache.hidden[t * h + k] = o * tc;
        }
        h_prev.copy_from_slice(&cache.hidden[t * h..(t + 1) * h]);
        c_prev.copy_from_slice(&cache.cell[t * h..(t + 1) * h]);
    }
    cache
}

pub fn bilstm_forward(params: &BiLstmParams, seq: &[Vec<f64>]) -> Result<SequenceOutput> {
    let d = params.dims;
    if seq.is_empty() {
        return Err(Error::Dimension("empty feature sequence".into()));
    }
    if let Some((t, f)) = seq.iter().enumerate().find(|(_, f)| f.len() != d.input) {
        return Err(Error::Dimension(format!("frame {t} has {} features, expected {}", f.len(), d.input)));
    }
    let fwd = run_direction(&params.fwd, seq, d.hidden, false);
    let bwd = run_direction(&params.bwd, seq, d.hidden, true);
    let cache = BiLstmCache { dims: d, inputs: seq.to_vec(), fwd, bwd };
    let t_len = seq.len();
    let mut phase_logits = Matrix::zeros(t_len, d.n_phases);
    let mut tool_logits = Matrix::zeros(t_len, d.n_tools);
    for t in 0..t_len {
        let state = cache.combined_state(t);
        params.w_phase.matvec_into(&state, Some(&params.b_phase), phase_logits.row_mut(t));
        params.w_tool.matvec_into(&state, Some(&params.b_tool), tool_logits.row_mut(t));
    }
    Ok(SequenceOutput { phase_logits, tool_logits, cache })
}

/// Backpropagation through time for one direction; `d_hidden` holds the
/// T × H loss gradient arriving at each hidden state from the heads.
fn backprop_direction(
    dir: &LstmDirection,
    cache: &DirectionCache,
    inputs: &[Vec<f64>],
    d_hidden: &[f64],
    hidden: usize,
    reverse: bool,
    grads: &mut LstmDirection,
) {
    let h = hidden;
    let order = time_order(inputs.len(), reverse);
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let zeros = vec![0.0; h];
    for step in (0..order.len()).rev() {
        let t = order[step];
        let prev = if step > 0 { Some(order[step - 1]) } else { None };
        let c_prev = prev.map_or(&zeros[..], |p| &cache.cell[p * h..(p + 1) * h]);
        let h_prev = prev.map_or(&zeros[..], |p| &cache.hidden[p * h..(p + 1) * h]);
        let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = cache.tanh_cell[t * h + k];
            let dh = d_hidden[t * h + k] + dh_next[k];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            dz[k] = dc * g * i * (1.0 - i);
            dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * h + k] = dc * i * (1.0 - g * g);
            dz[3 * h + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        grads.w.add_outer(&dz, &inputs[t]);
        grads.u.add_outer(&dz, h_prev);
        grads.b.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        dir.u.matvec_transpose_acc(&dz, &mut dh_next);
    }
}

/// Accumulates BPTT gradients into `grads`; logit gradients are T × N1 and
/// T × N2.
pub fn bilstm_backward(
    params: &BiLstmParams,
    cache: &BiLstmCache,
    grad_phase_logits: &Matrix,
    grad_tool_logits: &Matrix,
    grads: &mut BiLstmParams,
) -> Result<()> {
    let d = params.dims;
    if cache.dims != d || grads.dims != d {
        return Err(Error::Mismatch("Bi-LSTM cache or gradient buffer does not match parameters".into()));
    }
    let t_len = cache.len();
    if grad_phase_logits.rows() != t_len
        || grad_phase_logits.cols() != d.n_phases
        || grad_tool_logits.rows() != t_len
        || grad_tool_logits.cols() != d.n_tools
    {
        return Err(Error::Dimension("Bi-LSTM logit gradients do not match the cached sequence".into()));
    }
    let h = d.hidden;
    let mut d_fwd = vec![0.0; t_len * h];
    let mut d_bwd = vec![0.0; t_len * h];
    let mut d_state = vec![0.0; 2 * h];
    for t in 0..t_len {
        let gp = grad_phase_logits.row(t);
        let gt = grad_tool_logits.row(t);
        let state = cache.combined_state(t);
        grads.w_phase.add_outer(gp, &state);
        grads.b_phase.iter_mut().zip(gp).for_each(|(a, b)| *a += b);
        grads.w_tool.add_outer(gt, &state);
        grads.b_tool.iter_mut().zip(gt).for_each(|(a, b)| *a += b);
        d_state.iter_mut().for_each(|v| *v = 0.0);
        params.w_phase.matvec_transpose_acc(gp, &mut d_state);
        params.w_tool.matvec_transpose_acc(gt, &mut d_state);
        d_fwd[t * h..(t + 1) * h].copy_from_slice(&d_state[..h]);
        d_bwd[t * h..(t + 1) * h].copy_from_slice(&d_state[h..]);
    }
    backprop_direction(&params.fwd, &cache.fwd, &cache.inputs, &d_fwd, h, false, &mut grads.fwd);
    backprop_direction(&params.bwd, &cache.bwd, &cache.inputs, &d_bwd, h, true, &mut grads.bwd);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dims() -> BiLstmDims {
        BiLstmDims { input: 3, hidden: 4, n_phases: 7, n_tools: 8 }
    }

    fn random_seq(rng: &mut SeededRng, t: usize, f: usize) -> Vec<Vec<f64>> {
        (0..t).map(|_| (0..f).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let p = BiLstmParams::zeros(dims()).unwrap();
        let mut rng = SeededRng::new(0);
        let out = bilstm_forward(&p, &random_seq(&mut rng, 6, 3)).unwrap();
        assert!(out.phase_logits.as_slice().iter().all(|&v| v == 0.0));
        assert!(out.tool_logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_sequence() {
        let mut rng = SeededRng::new(3);
        let p = BiLstmParams::init(dims(), &mut rng).unwrap();
        let out = bilstm_forward(&p, &random_seq(&mut rng, 1, 3)).unwrap();
        assert_eq!((out.phase_logits.rows(), out.phase_logits.cols()), (1, 7));
        assert_eq!((out.tool_logits.rows(), out.tool_logits.cols()), (1, 8));
        assert!(bilstm_forward(&p, &[]).is_err());
        assert!(bilstm_forward(&p, &[vec![0.0; 2]]).is_err());
    }

    #[test]
    fn init_is_seeded_with_forget_bias() {
        let a = BiLstmParams::init(dims(), &mut SeededRng::new(9)).unwrap();
        let b = BiLstmParams::init(dims(), &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
        for dir in [&a.fwd, &a.bwd] {
            assert!(dir.b[4..8].iter().all(|&v| v == 1.0));
            assert!(dir.b[..4].iter().chain(&dir.b[8..]).all(|&v| v == 0.0));
            let bound = (6.0f64 / (16.0 + 3.0)).sqrt();
            assert!(dir.w.as_slice().iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn reversal_symmetry() {
        let mut rng = SeededRng::new(17);
        for _ in 0..10 {
            let p = BiLstmParams::init(dims(), &mut rng).unwrap();
            let seq = random_seq(&mut rng, 7, 3);
            let rev: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
            let a = bilstm_forward(&p, &seq).unwrap();
            let b = bilstm_forward(&p.mirrored(), &rev).unwrap();
            for t in 0..7 {
                for (x, y) in a.phase_logits.row(t).iter().zip(b.phase_logits.row(6 - t)) {
                    assert!((x - y).abs() < 1e-12);
                }
                for (x, y) in a.tool_logits.row(t).iter().zip(b.tool_logits.row(6 - t)) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hidden_states_bounded() {
        let mut rng = SeededRng::new(23);
        let mut p = BiLstmParams::init(dims(), &mut rng).unwrap();
        p.fwd.w.as_mut_slice().iter_mut().for_each(|v| *v *= 20.0);
        let out = bilstm_forward(&p, &random_seq(&mut rng, 12, 3)).unwrap();
        for t in 0..12 {
            assert!(out.cache.combined_state(t).iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = SeededRng::new(4);
        let p = BiLstmParams::init(dims(), &mut rng).unwrap();
        let out = bilstm_forward(&p, &random_seq(&mut rng, 5, 3)).unwrap();
        let mut g = p.zeros_like();
        bilstm_backward(&p, &out.cache, &Matrix::zeros(5, 7), &Matrix::zeros(5, 8), &mut g).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(matches!(
            bilstm_backward(&p, &out.cache, &Matrix::zeros(4, 7), &Matrix::zeros(5, 8), &mut g),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn single_frame_directions_mirror() {
        // With T=1 both directions see the same frame from a zero state, so
        // mirrored parameters must produce mirrored gradients.
        let mut rng = SeededRng::new(8);
        let p = BiLstmParams::init(dims(), &mut rng).unwrap();
        let seq = random_seq(&mut rng, 1, 3);
        let gp = Matrix::from_vec(1, 7, (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let gt = Matrix::from_vec(1, 8, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut ga = p.zeros_like();
        bilstm_backward(&p, &bilstm_forward(&p, &seq).unwrap().cache, &gp, &gt, &mut ga).unwrap();
        let m = p.mirrored();
        let mut gb = m.zeros_like();
        bilstm_backward(&m, &bilstm_forward(&m, &seq).unwrap().cache, &gp, &gt, &mut gb).unwrap();
        for (x, y) in ga.fwd.w.as_slice().iter().zip(gb.bwd.w.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
        for (x, y) in ga.bwd.b.iter().zip(&gb.fwd.b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
