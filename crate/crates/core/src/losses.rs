//! Per-frame multitask losses with analytic gradients w.r.t. logits.
//!
//! * phase: class-weighted softmax cross-entropy,
//! * tool: class-weighted multi-label soft margin (sigmoid BCE),
//! * joint: expected inverse co-occurrence frequency of the predicted
//!   (tool, phase) pair, penalising combinations rarely seen in training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ClassWeights, CooccurrenceModel};
use crate::tensor::{log_sum_exp, sigmoid, sigmoid_scalar, softmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseTarget {
    class: usize,
    n_classes: usize,
}

impl PhaseTarget {
    pub fn new(class: usize, n_classes: usize) -> Result<Self> {
        if class >= n_classes {
            return Err(Error::InvalidArgument(format!("phase target {class} out of range 0..{n_classes}")));
        }
        Ok(Self { class, n_classes })
    }

    pub fn from_one_hot(v: &[f64]) -> Result<Self> {
        let ones: Vec<usize> = v.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i).collect();
        if ones.len() != 1 || v.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::InvalidArgument(format!("malformed one-hot phase target {v:?}")));
        }
        Self::new(ones[0], v.len())
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn len(&self) -> usize {
        self.n_classes
    }

    pub fn is_empty(&self) -> bool {
        self.n_classes == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolTarget(Vec<f64>);

impl ToolTarget {
    pub fn new(multi_hot: Vec<f64>) -> Result<Self> {
        if multi_hot.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::InvalidArgument(format!("tool target must be binary, got {multi_hot:?}")));
        }
        Ok(Self(multi_hot))
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

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossResult {
    pub value: f64,
    pub grad_phase: Option<Vec<f64>>,
    pub grad_tool: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultitaskWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for MultitaskWeights {
    fn default() -> Self {
        Self { alpha1: 1.0, alpha2: 1.0, alpha3: 1.0 }
    }
}

impl MultitaskWeights {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        let w = Self { alpha1, alpha2, alpha3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let a = [self.alpha1, self.alpha2, self.alpha3];
        if a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument(format!("loss weights must be non-negative, got {a:?}")));
        }
        if a.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidArgument("all loss weights are zero".into()));
        }
        Ok(())
    }
}

/// Which activation the joint loss applies to which head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointActivation {
    /// Sigmoid on phase logits, softmax on tool logits.
    #[default]
    SigmoidPhaseSoftmaxTool,
    /// Softmax on phase logits, sigmoid on tool logits.
    SoftmaxPhaseSigmoidTool,
}

impl JointActivation {
    pub fn from_swap(swap: bool) -> Self {
        if swap {
            Self::SoftmaxPhaseSigmoidTool
        } else {
            Self::SigmoidPhaseSoftmaxTool
        }
    }
}

fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension(format!("{what}: length {got}, expected {expected}")));
    }
    Ok(())
}

/// Weighted cross-entropy on the ground-truth phase.
pub fn phase_loss(logits: &[f64], target: &PhaseTarget, w1: &ClassWeights) -> Result<LossResult> {
    check_len("phase target", target.len(), logits.len())?;
    check_len("phase weights", w1.len(), logits.len())?;
    let c = target.class();
    let w = w1.as_slice()[c];
    let value = w * (log_sum_exp(logits)? - logits[c]);
    let mut grad = softmax(logits)?;
    grad[c] -= 1.0;
    grad.iter_mut().for_each(|g| *g *= w);
    Ok(LossResult { value: value.max(0.0), grad_phase: Some(grad), grad_tool: None })
}

/// Weighted multi-label soft margin loss.
pub fn tool_loss(logits: &[f64], target: &ToolTarget, w2: &ClassWeights) -> Result<LossResult> {
    check_len("tool target", target.len(), logits.len())?;
    check_len("tool weights", w2.len(), logits.len())?;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for ((&z, &y), &w) in logits.iter().zip(target.as_slice()).zip(w2.as_slice()) {
        value += w * (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
        grad.push(w * (sigmoid_scalar(z) - y));
    }
    Ok(LossResult { value, grad_phase: None, grad_tool: Some(grad) })
}

/// Joint co-occurrence loss `Σ_t Σ_p x_phase[p] · x_tool[t] · IF[t][p]`.
pub fn joint_loss(
    phase_logits: &[f64],
    tool_logits: &[f64],
    co: &CooccurrenceModel,
    activation: JointActivation,
) -> Result<LossResult> {
    let n_phases = co.n_phases();
    let n_tools = co.n_tools();
    check_len("joint loss phase logits", phase_logits.len(), n_phases)?;
    check_len("joint loss tool logits", tool_logits.len(), n_tools)?;
    let inv = co.inverse_frequency();

    let (xp, xt) = match activation {
        JointActivation::SigmoidPhaseSoftmaxTool => (sigmoid(phase_logits), softmax(tool_logits)?),
        JointActivation::SoftmaxPhaseSigmoidTool => (softmax(phase_logits)?, sigmoid(tool_logits)),
    };
    // a[p] = Σ_t xt[t]·IF[t][p],  b[t] = Σ_p xp[p]·IF[t][p]
    let mut a = vec![0.0; n_phases];
    let mut b = vec![0.0; n_tools];
    for t in 0..n_tools {
        let row = inv.row(t);
        for p in 0..n_phases {
            a[p] += xt[t] * row[p];
            b[t] += xp[p] * row[p];
        }
    }
    let value: f64 = xp.iter().zip(&a).map(|(x, y)| x * y).sum();

    let (grad_phase, grad_tool) = match activation {
        JointActivation::SigmoidPhaseSoftmaxTool => {
            let gp = xp.iter().zip(&a).map(|(&s, &ap)| s * (1.0 - s) * ap).collect();
            let mean_b: f64 = xt.iter().zip(&b).map(|(x, y)| x * y).sum();
            let gt = xt.iter().zip(&b).map(|(&s, &bt)| s * (bt - mean_b)).collect();
            (gp, gt)
        }
        JointActivation::SoftmaxPhaseSigmoidTool => {
            let mean_a: f64 = xp.iter().zip(&a).map(|(x, y)| x * y).sum();
            let gp = xp.iter().zip(&a).map(|(&s, &ap)| s * (ap - mean_a)).collect();
            let gt = xt.iter().zip(&b).map(|(&s, &bt)| s * (1.0 - s) * bt).collect();
            (gp, gt)
        }
    };
    Ok(LossResult { value, grad_phase: Some(grad_phase), grad_tool: Some(grad_tool) })
}

/// Everything besides the logits needed to evaluate the multitask loss.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub phase_weights: &'a ClassWeights,
    pub tool_weights: &'a ClassWeights,
    pub cooccurrence: &'a CooccurrenceModel,
    pub alphas: MultitaskWeights,
    pub activation: JointActivation,
}

/// `α1·L_phase + α2·L_tool + α3·L_joint`; terms with a zero weight are not
/// evaluated, so their gradient contribution is exactly zero.
pub fn multitask_loss(
    phase_logits: &[f64],
    tool_logits: &[f64],
    phase_target: &PhaseTarget,
    tool_target: &ToolTarget,
    ctx: &LossContext<'_>,
) -> Result<LossResult> {
    let alphas = ctx.alphas;
    alphas.validate()?;
    let mut value = 0.0;
    let mut gp = vec![0.0; phase_logits.len()];
    let mut gt = vec![0.0; tool_logits.len()];
    let mut accumulate = |alpha: f64, r: LossResult| {
        value += alpha * r.value;
        if let Some(g) = r.grad_phase {
            gp.iter_mut().zip(g).for_each(|(a, b)| *a += alpha * b);
        }
        if let Some(g) = r.grad_tool {
            gt.iter_mut().zip(g).for_each(|(a, b)| *a += alpha * b);
        }
    };
    if alphas.alpha1 != 0.0 {
        accumulate(alphas.alpha1, phase_loss(phase_logits, phase_target, ctx.phase_weights)?);
    }
    if alphas.alpha2 != 0.0 {
        accumulate(alphas.alpha2, tool_loss(tool_logits, tool_target, ctx.tool_weights)?);
    }
    if alphas.alpha3 != 0.0 {
        accumulate(alphas.alpha3, joint_loss(phase_logits, tool_logits, ctx.cooccurrence, ctx.activation)?);
    }
    Ok(LossResult { value, grad_phase: Some(gp), grad_tool: Some(gt) })
}

/// Mean per-frame multitask loss over a sequence, with T × N logit
/// gradients already scaled by `1/T`.
pub fn sequence_loss(
    phase_logits: &Matrix,
    tool_logits: &Matrix,
    targets: &[(PhaseTarget, ToolTarget)],
    ctx: &LossContext<'_>,
) -> Result<(f64, Matrix, Matrix)> {
    if targets.is_empty() || phase_logits.rows() != targets.len() || tool_logits.rows() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} targets for {} / {} logit rows",
            targets.len(),
            phase_logits.rows(),
            tool_logits.rows()
        )));
    }
    let t_len = targets.len() as f64;
    let mut gp = Matrix::zeros(phase_logits.rows(), phase_logits.cols());
    let mut gt = Matrix::zeros(tool_logits.rows(), tool_logits.cols());
    let mut total = 0.0;
    for (t, (pt, tt)) in targets.iter().enumerate() {
        let r = multitask_loss(phase_logits.row(t), tool_logits.row(t), pt, tt, ctx)?;
        total += r.value;
        for (a, b) in gp.row_mut(t).iter_mut().zip(r.grad_phase.expect("grad")) {
            *a = b / t_len;
        }
        for (a, b) in gt.row_mut(t).iter_mut().zip(r.grad_tool.expect("grad")) {
            *a = b / t_len;
        }
    }
    Ok((total / t_len, gp, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::DEFAULT_EPSILON;
    use crate::tensor::SeededRng;
    use rand::Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn w(v: &[f64]) -> ClassWeights {
        ClassWeights::new(v.to_vec()).unwrap()
    }

    // Reference values straight from the textbook formulas, no stabilisation.
    fn naive_phase(z: &[f64], c: usize, w: &[f64]) -> f64 {
        let s: f64 = z.iter().map(|x| x.exp()).sum();
        -w[c] * (z[c].exp() / s).ln()
    }

    fn naive_tool(z: &[f64], y: &[f64], w: &[f64]) -> f64 {
        z.iter()
            .zip(y)
            .zip(w)
            .map(|((&z, &y), &w)| {
                let s = 1.0 / (1.0 + (-z).exp());
                -w * (y * s.ln() + (1.0 - y) * (1.0 - s).ln())
            })
            .sum()
    }

    fn naive_joint(zp: &[f64], zt: &[f64], co: &CooccurrenceModel, swap: bool) -> f64 {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let sm = |v: &[f64]| {
            let s: f64 = v.iter().map(|x| x.exp()).sum();
            v.iter().map(|x| x.exp() / s).collect::<Vec<_>>()
        };
        let (xp, xt): (Vec<f64>, Vec<f64>) = if swap {
            (sm(zp), zt.iter().map(|&x| sig(x)).collect())
        } else {
            (zp.iter().map(|&x| sig(x)).collect(), sm(zt))
        };
        let mut v = 0.0;
        for t in 0..co.n_tools() {
            for p in 0..co.n_phases() {
                v += xp[p] * xt[t] * co.inverse_frequency().get(t, p);
            }
        }
        v
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(1.0)).fold(0.0, f64::max)
    }

    fn toy_cooccurrence(rng: &mut SeededRng, n_tools: usize, n_phases: usize) -> CooccurrenceModel {
        let counts = (0..n_tools * n_phases).map(|_| rng.gen_range(1..40)).collect();
        CooccurrenceModel::from_counts(n_tools, n_phases, counts, DEFAULT_EPSILON).unwrap()
    }

    #[test]
    fn phase_loss_examples() {
        let r = phase_loss(&[0.0, 0.0], &PhaseTarget::new(0, 2).unwrap(), &w(&[1.0, 1.0])).unwrap();
        assert!((r.value - LN2).abs() < 1e-9);
        assert_eq!(r.grad_phase.unwrap(), vec![-0.5, 0.5]);

        let r = phase_loss(&[10.0, -10.0], &PhaseTarget::new(0, 2).unwrap(), &w(&[1.0, 1.0])).unwrap();
        assert!((r.value - (-20f64).exp().ln_1p()).abs() < 1e-9);
        assert!((r.value - 2.061e-9).abs() < 1e-12);

        let t = PhaseTarget::new(1, 3).unwrap();
        let z = [0.3, -1.2, 2.0];
        let a = phase_loss(&z, &t, &w(&[1.0, 1.5, 1.0])).unwrap();
        let b = phase_loss(&z, &t, &w(&[1.0, 3.0, 1.0])).unwrap();
        assert_eq!(b.value, 2.0 * a.value);
        for (x, y) in a.grad_phase.unwrap().iter().zip(b.grad_phase.unwrap()) {
            assert_eq!(y, 2.0 * x);
        }
    }

    #[test]
    fn phase_loss_errors() {
        assert!(matches!(
            phase_loss(&[0.0, 0.0, 0.0], &PhaseTarget::new(0, 2).unwrap(), &w(&[1.0, 1.0])),
            Err(Error::Dimension(_))
        ));
        assert!(PhaseTarget::from_one_hot(&[1.0, 1.0]).is_err());
        assert!(PhaseTarget::from_one_hot(&[0.0, 0.5]).is_err());
        assert_eq!(PhaseTarget::from_one_hot(&[0.0, 1.0, 0.0]).unwrap().class(), 1);
    }

    #[test]
    fn tool_loss_examples() {
        let y = ToolTarget::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let r = tool_loss(&[0.0; 8], &y, &ClassWeights::uniform(8)).unwrap();
        assert!((r.value - 8.0 * LN2).abs() < 1e-9);
        assert!((r.value - 5.5451774).abs() < 1e-7);

        let r = tool_loss(&[50.0], &ToolTarget::new(vec![1.0]).unwrap(), &ClassWeights::uniform(1)).unwrap();
        assert!(r.value < 1e-20);

        let r = tool_loss(&[0.0, 0.0], &ToolTarget::new(vec![1.0, 0.0]).unwrap(), &w(&[2.0, 1.0])).unwrap();
        assert!((r.value - 3.0 * LN2).abs() < 1e-9);
        assert_eq!(r.grad_tool.unwrap(), vec![-1.0, 0.5]);
        assert!(ToolTarget::new(vec![2.0]).is_err());
    }

    #[test]
    fn joint_loss_examples() {
        let co = CooccurrenceModel::from_counts(2, 2, vec![5, 5, 5, 5], DEFAULT_EPSILON).unwrap();
        let r = joint_loss(&[0.0, 0.0], &[1.3, -0.4], &co, JointActivation::SigmoidPhaseSoftmaxTool).unwrap();
        assert!((r.value - 2.0).abs() < 1e-6);

        // constant IF: value = k·Σσ(phase), tool gradient vanishes
        let k = 1.0 / (0.5 + DEFAULT_EPSILON);
        let zp = [0.7, -2.0];
        let r = joint_loss(&zp, &[3.0, -1.0], &co, JointActivation::SigmoidPhaseSoftmaxTool).unwrap();
        let expect: f64 = k * zp.iter().map(|&x| sigmoid_scalar(x)).sum::<f64>();
        assert!((r.value - expect).abs() < 1e-9);
        assert!(r.grad_tool.unwrap().iter().all(|g| g.abs() < 1e-12));

        // mass on a zero co-occurrence cell
        let co = CooccurrenceModel::from_counts(2, 2, vec![4, 0, 0, 4], DEFAULT_EPSILON).unwrap();
        let zp = [-30.0, 30.0];
        let zt = [30.0, -30.0];
        let r = joint_loss(&zp, &zt, &co, JointActivation::SigmoidPhaseSoftmaxTool).unwrap();
        let xp = sigmoid(&zp);
        let xt = softmax(&zt).unwrap();
        let pair = xp[1] * xt[0];
        assert!((r.value / (1e8 * pair) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn multitask_combination() {
        let co = CooccurrenceModel::from_counts(2, 2, vec![5, 5, 5, 5], DEFAULT_EPSILON).unwrap();
        let pw = w(&[1.0, 1.0]);
        let tw = w(&[2.0, 1.0]);
        let zp = [0.0, 0.0];
        let zt = [0.0, 0.0];
        let pt = PhaseTarget::new(0, 2).unwrap();
        let tt = ToolTarget::new(vec![1.0, 0.0]).unwrap();
        let ctx = |a: MultitaskWeights| LossContext {
            phase_weights: &pw,
            tool_weights: &tw,
            cooccurrence: &co,
            alphas: a,
            activation: JointActivation::default(),
        };
        let l1 = phase_loss(&zp, &pt, &pw).unwrap();
        let l2 = tool_loss(&zt, &tt, &tw).unwrap();
        let l3 = joint_loss(&zp, &zt, &co, JointActivation::default()).unwrap();

        let only1 = multitask_loss(&zp, &zt, &pt, &tt, &ctx(MultitaskWeights::new(1.0, 0.0, 0.0).unwrap())).unwrap();
        assert_eq!(only1.value, l1.value);
        assert_eq!(only1.grad_phase.as_ref().unwrap(), l1.grad_phase.as_ref().unwrap());
        assert!(only1.grad_tool.unwrap().iter().all(|&g| g == 0.0));

        let only3 = multitask_loss(&zp, &zt, &pt, &tt, &ctx(MultitaskWeights::new(0.0, 0.0, 1.0).unwrap())).unwrap();
        assert_eq!(only3.value, l3.value);

        let all = multitask_loss(&zp, &zt, &pt, &tt, &ctx(MultitaskWeights::default())).unwrap();
        assert!((all.value - (l1.value + l2.value + l3.value)).abs() < 1e-12);

        assert!(MultitaskWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(MultitaskWeights::new(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeededRng::new(2024);
        let h = 1e-5;
        let mut worst = [0.0f64; 4];
        for _ in 0..100 {
            let n1 = 7;
            let n2 = 8;
            let zp: Vec<f64> = (0..n1).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let zt: Vec<f64> = (0..n2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let c = rng.gen_range(0..n1);
            let y: Vec<f64> = (0..n2).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
            let pw: Vec<f64> = (0..n1).map(|_| rng.gen_range(0.2..3.0)).collect();
            let tw: Vec<f64> = (0..n2).map(|_| rng.gen_range(0.2..3.0)).collect();
            let co = toy_cooccurrence(&mut rng, n2, n1);

            let r = phase_loss(&zp, &PhaseTarget::new(c, n1).unwrap(), &w(&pw)).unwrap();
            assert!((r.value - naive_phase(&zp, c, &pw)).abs() < 1e-9);
            let num = central_diff(|z| naive_phase(z, c, &pw), &zp, h);
            worst[0] = worst[0].max(max_rel_err(r.grad_phase.as_ref().unwrap(), &num));

            let r = tool_loss(&zt, &ToolTarget::new(y.clone()).unwrap(), &w(&tw)).unwrap();
            assert!((r.value - naive_tool(&zt, &y, &tw)).abs() < 1e-9);
            let num = central_diff(|z| naive_tool(z, &y, &tw), &zt, h);
            worst[1] = worst[1].max(max_rel_err(r.grad_tool.as_ref().unwrap(), &num));

            for (k, swap) in [(2, false), (3, true)] {
                let act = JointActivation::from_swap(swap);
                let r = joint_loss(&zp, &zt, &co, act).unwrap();
                assert!((r.value - naive_joint(&zp, &zt, &co, swap)).abs() < 1e-9 * r.value.max(1.0));
                let num_p = central_diff(|z| naive_joint(z, &zt, &co, swap), &zp, h);
                let num_t = central_diff(|z| naive_joint(&zp, z, &co, swap), &zt, h);
                worst[k] = worst[k]
                    .max(max_rel_err(r.grad_phase.as_ref().unwrap(), &num_p))
                    .max(max_rel_err(r.grad_tool.as_ref().unwrap(), &num_t));
            }
        }
        for (k, e) in worst.iter().enumerate() {
            assert!(*e < 1e-6, "loss {k}: worst relative error {e}");
        }
    }

    #[test]
    fn loss_properties() {
        let mut rng = SeededRng::new(99);
        for _ in 0..200 {
            let zp: Vec<f64> = (0..7).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let zt: Vec<f64> = (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let c = rng.gen_range(0..7);
            let t = PhaseTarget::new(c, 7).unwrap();
            let pw = ClassWeights::uniform(7);
            let a = phase_loss(&zp, &t, &pw).unwrap();
            assert!(a.value >= 0.0);
            let shift = rng.gen_range(-100.0..100.0);
            let shifted: Vec<f64> = zp.iter().map(|x| x + shift).collect();
            let b = phase_loss(&shifted, &t, &pw).unwrap();
            assert!((a.value - b.value).abs() < 1e-9);
            assert!(a.grad_phase.unwrap().iter().sum::<f64>().abs() < 1e-12);

            let y: Vec<f64> = (0..8).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
            let r = tool_loss(&zt, &ToolTarget::new(y.clone()).unwrap(), &ClassWeights::uniform(8)).unwrap();
            assert!(r.value >= 0.0);
            for (g, yi) in r.grad_tool.unwrap().iter().zip(&y) {
                assert_eq!(*g < 0.0, *yi == 1.0);
            }

            let co = toy_cooccurrence(&mut rng, 8, 7);
            assert!(joint_loss(&zp, &zt, &co, JointActivation::default()).unwrap().value >= 0.0);
        }
    }

    #[test]
    fn joint_loss_prefers_common_pairs() {
        // tool 0 common in phase 0, tool 1 rare
        let co = CooccurrenceModel::from_counts(2, 1, vec![90, 10], DEFAULT_EPSILON).unwrap();
        let zp = [1.0];
        let rare_heavy = joint_loss(&zp, &[0.0, 2.0], &co, JointActivation::default()).unwrap().value;
        let common_heavy = joint_loss(&zp, &[2.0, 0.0], &co, JointActivation::default()).unwrap().value;
        assert!(common_heavy < rare_heavy);
    }
}
