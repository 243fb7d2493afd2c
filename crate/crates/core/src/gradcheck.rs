//! Central finite-difference verification of every analytic gradient.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::losses::{
    joint_loss, multitask_loss, phase_loss, sequence_loss, tool_loss, JointActivation, LossContext, LossResult,
    MultitaskWeights, PhaseTarget, ToolTarget,
};
use crate::model::{
    bilstm_backward, bilstm_forward, encoder_backward, encoder_forward, BiLstmDims, BiLstmParams, EncoderDims,
    EncoderParams, ParamSet,
};
use crate::stats::{ClassWeights, CooccurrenceModel, DEFAULT_EPSILON};
use crate::tensor::SeededRng;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Negates one analytic gradient; the suite must then fail.
    pub inject_sign_flip: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { trials: 100, seed: 0x5eed, step: DEFAULT_STEP, tolerance: DEFAULT_TOLERANCE, inject_sign_flip: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentResult {
    pub name: String,
    pub trials: usize,
    pub worst_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub components: Vec<ComponentResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(|c| c.passed)
    }

    pub fn worst(&self) -> f64 {
        self.components.iter().map(|c| c.worst_rel_err).fold(0.0, f64::max)
    }
}

/// `max_i |a_i − n_i| / max(1, |a_i|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let e = (a - n).abs() / a.abs().max(1.0);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max)
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn uniform_vec(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

struct Problem {
    co: CooccurrenceModel,
    pw: ClassWeights,
    tw: ClassWeights,
}

impl Problem {
    fn random(rng: &mut SeededRng, n_phases: usize, n_tools: usize) -> Result<Self> {
        let counts = (0..n_tools * n_phases).map(|_| rng.gen_range(1..40)).collect();
        Ok(Self {
            co: CooccurrenceModel::from_counts(n_tools, n_phases, counts, DEFAULT_EPSILON)?,
            pw: ClassWeights::new(uniform_vec(rng, n_phases, 0.2, 3.0))?,
            tw: ClassWeights::new(uniform_vec(rng, n_tools, 0.2, 3.0))?,
        })
    }

    fn ctx(&self, activation: JointActivation) -> LossContext<'_> {
        LossContext {
            phase_weights: &self.pw,
            tool_weights: &self.tw,
            cooccurrence: &self.co,
            alphas: MultitaskWeights::default(),
            activation,
        }
    }
}

fn random_targets(rng: &mut SeededRng, n_phases: usize, n_tools: usize) -> Result<(PhaseTarget, ToolTarget)> {
    let pt = PhaseTarget::new(rng.gen_range(0..n_phases), n_phases)?;
    let tt = ToolTarget::new((0..n_tools).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect())?;
    Ok((pt, tt))
}

struct Tracker {
    name: &'static str,
    trials: usize,
    worst: f64,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self { name, trials: 0, worst: 0.0 }
    }

    fn record(&mut self, analytic: &[f64], numeric: &[f64]) {
        self.trials += 1;
        self.worst = self.worst.max(max_relative_error(analytic, numeric));
    }

    fn finish(self, tol: f64) -> ComponentResult {
        ComponentResult {
            name: self.name.to_string(),
            trials: self.trials,
            worst_rel_err: self.worst,
            passed: self.worst < tol,
        }
    }
}

/// Runs the full suite: the three losses (both joint-loss activation
/// assignments), the encoder and the Bi-LSTM.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut rng = SeededRng::new(opts.seed);
    let h = opts.step;
    let (n1, n2) = (7, 8);

    let mut t_phase = Tracker::new("phase_loss");
    let mut t_tool = Tracker::new("tool_loss");
    let mut t_joint = Tracker::new("joint_loss[sigmoid-phase,softmax-tool]");
    let mut t_joint_swap = Tracker::new("joint_loss[softmax-phase,sigmoid-tool]");
    let mut t_enc = Tracker::new("encoder_backward");
    let mut t_lstm = Tracker::new("bilstm_backward");

    let value = |r: Result<LossResult>| r.map(|r| r.value).unwrap_or(f64::NAN);

    for trial in 0..opts.trials {
        let prob = Problem::random(&mut rng, n1, n2)?;
        let zp = uniform_vec(&mut rng, n1, -5.0, 5.0);
        let zt = uniform_vec(&mut rng, n2, -5.0, 5.0);
        let (pt, tt) = random_targets(&mut rng, n1, n2)?;

        let mut g = phase_loss(&zp, &pt, &prob.pw)?.grad_phase.expect("phase grad");
        if opts.inject_sign_flip && trial == 0 {
            g[pt.class()] = -g[pt.class()];
        }
        let num = central_difference(|z| value(phase_loss(z, &pt, &prob.pw)), &zp, h);
        t_phase.record(&g, &num);

        let g = tool_loss(&zt, &tt, &prob.tw)?.grad_tool.expect("tool grad");
        let num = central_difference(|z| value(tool_loss(z, &tt, &prob.tw)), &zt, h);
        t_tool.record(&g, &num);

        for (tracker, act) in [
            (&mut t_joint, JointActivation::SigmoidPhaseSoftmaxTool),
            (&mut t_joint_swap, JointActivation::SoftmaxPhaseSigmoidTool),
        ] {
            let r = joint_loss(&zp, &zt, &prob.co, act)?;
            let num_p = central_difference(|z| value(joint_loss(z, &zt, &prob.co, act)), &zp, h);
            let num_t = central_difference(|z| value(joint_loss(&zp, z, &prob.co, act)), &zt, h);
            let mut a = r.grad_phase.expect("grad");
            a.extend(r.grad_tool.expect("grad"));
            let mut n = num_p;
            n.extend(num_t);
            tracker.record(&a, &n);
        }

        let act = if trial % 2 == 0 {
            JointActivation::SigmoidPhaseSoftmaxTool
        } else {
            JointActivation::SoftmaxPhaseSigmoidTool
        };
        check_encoder(&mut rng, &prob, act, h, &mut t_enc)?;
        check_bilstm(&mut rng, &prob, act, h, &mut t_lstm)?;
    }

    let tol = opts.tolerance;
    Ok(GradcheckReport {
        step: h,
        tolerance: tol,
        components: vec![
            t_phase.finish(tol),
            t_tool.finish(tol),
            t_joint.finish(tol),
            t_joint_swap.finish(tol),
            t_enc.finish(tol),
            t_lstm.finish(tol),
        ],
    })
}

fn with_flat<P: ParamSet>(template: &P, flat: &[f64]) -> P {
    let mut p = template.clone();
    let mut offset = 0;
    for (_, blob) in p.blobs_mut() {
        let n = blob.len();
        blob.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    p
}

fn check_encoder(
    rng: &mut SeededRng,
    prob: &Problem,
    act: JointActivation,
    h: f64,
    tracker: &mut Tracker,
) -> Result<()> {
    let dims = EncoderDims { input: 3, hidden: 4, feature: 4, n_phases: 7, n_tools: 8 };
    let mut params = EncoderParams::init(dims, rng)?;
    // non-zero biases keep relu units away from the all-dead corner
    for (_, b) in params.blobs_mut() {
        if b.len() <= 8 {
            b.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
    let x = uniform_vec(rng, dims.input, -2.0, 2.0);
    let (pt, tt) = random_targets(rng, dims.n_phases, dims.n_tools)?;
    let ctx = prob.ctx(act);

    let out = encoder_forward(&params, &x)?;
    let loss = multitask_loss(&out.phase_logits, &out.tool_logits, &pt, &tt, &ctx)?;
    let mut grads = params.zeros_like();
    encoder_backward(
        &params,
        &out.cache,
        loss.grad_phase.as_deref().expect("grad"),
        loss.grad_tool.as_deref().expect("grad"),
        &mut grads,
    )?;
    let f = |flat: &[f64]| {
        let p = with_flat(&params, flat);
        encoder_forward(&p, &x)
            .and_then(|o| multitask_loss(&o.phase_logits, &o.tool_logits, &pt, &tt, &ctx))
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    };
    let numeric = central_difference(f, &params.flatten(), h);
    tracker.record(&grads.flatten(), &numeric);
    Ok(())
}

/// Mean per-frame multitask loss of a sequence and its logit gradients.
fn check_bilstm(
    rng: &mut SeededRng,
    prob: &Problem,
    act: JointActivation,
    h: f64,
    tracker: &mut Tracker,
) -> Result<()> {
    let dims = BiLstmDims { input: 3, hidden: 4, n_phases: 7, n_tools: 8 };
    let t_len = 5;
    let mut params = BiLstmParams::init(dims, rng)?;
    for (_, b) in params.blobs_mut() {
        b.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
    }
    let seq: Vec<Vec<f64>> = (0..t_len).map(|_| uniform_vec(rng, dims.input, -2.0, 2.0)).collect();
    let targets: Vec<_> =
        (0..t_len).map(|_| random_targets(rng, dims.n_phases, dims.n_tools)).collect::<Result<_>>()?;
    let ctx = prob.ctx(act);

    let out = bilstm_forward(&params, &seq)?;
    let (_, gp, gt) = sequence_loss(&out.phase_logits, &out.tool_logits, &targets, &ctx)?;
    let mut grads = params.zeros_like();
    bilstm_backward(&params, &out.cache, &gp, &gt, &mut grads)?;
    let f = |flat: &[f64]| {
        let p = with_flat(&params, flat);
        bilstm_forward(&p, &seq)
            .and_then(|o| sequence_loss(&o.phase_logits, &o.tool_logits, &targets, &ctx))
            .map(|(v, _, _)| v)
            .unwrap_or(f64::NAN)
    };
    let numeric = central_difference(f, &params.flatten(), h);
    tracker.record(&grads.flatten(), &numeric);
    Ok(())
}
