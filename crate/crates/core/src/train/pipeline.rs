use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{PipelineConfig, PlateauScheduler, SgdConfig, TrainingStats};
use crate::data::{VideoAnnotation, N_PHASES, N_TOOLS};
use crate::error::{Error, Result};
use crate::losses::{multitask_loss, sequence_loss, LossContext, MultitaskWeights, PhaseTarget, ToolTarget};
use crate::model::{
    bilstm_backward, bilstm_forward, encoder_backward, encoder_forward, BiLstmDims, BiLstmParams, EncoderDims,
    EncoderParams, ParamSet,
};
use crate::stats::{apply_whitening, fit_whitening, WhiteningModel};
use crate::tensor::{argmax, derive_seed, SeededRng};

use super::sgd::{clip_grad_norm, sgd_step};

const ENCODER_INIT_TAG: u64 = 0x5EED_0001;
const BILSTM_INIT_TAG: u64 = 0x5EED_0002;
const STAGE1_SHUFFLE_TAG: u64 = 0x5EED_0011;
const STAGE2_SHUFFLE_TAG: u64 = 0x5EED_0012;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_phase_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct History {
    pub stage1: Vec<EpochRecord>,
    pub stage2: Vec<EpochRecord>,
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: PipelineConfig,
    pub seed: u64,
    pub stage: Stage,
    /// Next epoch index within `stage`.
    pub next_epoch: usize,
    pub encoder: EncoderParams,
    pub encoder_velocity: EncoderParams,
    pub stage1_scheduler: PlateauScheduler,
    pub stage1_lr: f64,
    pub whitening: Option<WhiteningModel>,
    pub bilstm: Option<BiLstmParams>,
    pub bilstm_velocity: Option<BiLstmParams>,
    pub stage2_scheduler: PlateauScheduler,
    pub stage2_lr: f64,
    pub history: History,
}

impl TrainState {
    pub fn new(config: PipelineConfig, seed: u64, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let dims = EncoderDims {
            input: input_dim,
            hidden: config.model.encoder_hidden,
            feature: config.model.feature_dim,
            n_phases: N_PHASES,
            n_tools: N_TOOLS,
        };
        let encoder = EncoderParams::init(dims, &mut SeededRng::new(seed).child(ENCODER_INIT_TAG))?;
        Ok(Self {
            seed,
            stage: Stage::Stage1,
            next_epoch: 0,
            encoder_velocity: encoder.zeros_like(),
            encoder,
            stage1_scheduler: PlateauScheduler::new(config.stage1.scheduler)?,
            stage1_lr: config.stage1.sgd.lr,
            whitening: None,
            bilstm: None,
            bilstm_velocity: None,
            stage2_scheduler: PlateauScheduler::new(config.stage2.scheduler)?,
            stage2_lr: config.stage2.sgd.lr,
            history: History::default(),
            config,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.dims().input
    }

    /// Total epochs completed over both stages.
    pub fn epochs_done(&self) -> usize {
        self.history.stage1.len() + self.history.stage2.len()
    }
}

/// Training and validation videos; all must carry feature vectors of the
/// same dimension.
pub struct TrainData<'a> {
    pub train: Vec<&'a VideoAnnotation>,
    pub val: Vec<&'a VideoAnnotation>,
}

impl<'a> TrainData<'a> {
    pub fn new(train: Vec<&'a VideoAnnotation>, val: Vec<&'a VideoAnnotation>) -> Result<Self> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::InvalidArgument("training needs non-empty train and validation splits".into()));
        }
        let dim = train[0].feature_dim();
        if dim.is_none() {
            return Err(Error::InvalidArgument(format!("video {} has no feature vectors", train[0].id())));
        }
        if let Some(v) = train.iter().chain(&val).find(|v| v.feature_dim() != dim) {
            return Err(Error::Dimension(format!("video {} has a different feature dimension", v.id())));
        }
        Ok(Self { train, val })
    }

    pub fn feature_dim(&self) -> usize {
        self.train[0].feature_dim().expect("checked in new")
    }
}

struct Targets {
    phase: Vec<PhaseTarget>,
    tool: Vec<ToolTarget>,
}

impl Targets {
    fn of(video: &VideoAnnotation) -> Result<Self> {
        let mut phase = Vec::with_capacity(video.len());
        let mut tool = Vec::with_capacity(video.len());
        for l in video.labels() {
            phase.push(PhaseTarget::new(l.phase(), N_PHASES)?);
            tool.push(ToolTarget::new(l.tool_multi_hot().to_vec())?);
        }
        Ok(Self { phase, tool })
    }

    fn pairs(&self) -> Vec<(PhaseTarget, ToolTarget)> {
        self.phase.iter().cloned().zip(self.tool.iter().cloned()).collect()
    }
}

fn loss_context<'a>(state: &TrainState, stats: &'a TrainingStats, alphas: MultitaskWeights) -> LossContext<'a> {
    LossContext {
        phase_weights: &stats.phase_weights,
        tool_weights: &stats.tool_weights,
        cooccurrence: &stats.cooccurrence,
        alphas,
        activation: state.config.activation(),
    }
}

fn check_finite(value: f64, what: impl FnOnce() -> String) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{}: loss is {value}", what())))
    }
}

fn seeded_order(seed: u64, tag: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeededRng::new(derive_seed(derive_seed(seed, tag), epoch as u64)));
    order
}

fn step_params<P: ParamSet>(
    params: &mut P,
    grads: &mut P,
    velocity: &mut P,
    sgd: SgdConfig,
    lr: f64,
    max_grad_norm: Option<f64>,
) -> Result<()> {
    if let Some(m) = max_grad_norm {
        clip_grad_norm(grads, m);
    }
    sgd_step(params, grads, velocity, &sgd.with_lr(lr))
}

/// Mean per-frame loss and phase accuracy of the encoder on `videos`.
fn encoder_validation(
    params: &EncoderParams,
    videos: &[&VideoAnnotation],
    ctx: &LossContext<'_>,
) -> Result<(f64, f64)> {
    let (mut loss, mut correct, mut n) = (0.0, 0usize, 0usize);
    for v in videos {
        let targets = Targets::of(v)?;
        for (t, x) in v.features().expect("checked").iter().enumerate() {
            let out = encoder_forward(params, x)?;
            loss +=
                multitask_loss(&out.phase_logits, &out.tool_logits, &targets.phase[t], &targets.tool[t], ctx)?.value;
            correct += usize::from(argmax(&out.phase_logits)? == targets.phase[t].class());
            n += 1;
        }
    }
    Ok((loss / n as f64, correct as f64 / n as f64))
}

/// Runs one stage-1 epoch (if any remain) and advances the state.
pub fn train_stage1(state: &mut TrainState, data: &TrainData<'_>, stats: &TrainingStats) -> Result<EpochRecord> {
    if state.stage != Stage::Stage1 || state.next_epoch >= state.config.stage1.epochs {
        return Err(Error::InvalidArgument("stage 1 is already complete".into()));
    }
    if data.feature_dim() != state.input_dim() {
        return Err(Error::Mismatch(format!(
            "dataset features have dimension {}, encoder expects {}",
            data.feature_dim(),
            state.input_dim()
        )));
    }
    let epoch = state.next_epoch;
    let cfg = state.config.stage1;
    let ctx = loss_context(state, stats, state.config.stage_alphas());
    let targets: Vec<Targets> = data.train.iter().map(|v| Targets::of(v)).collect::<Result<_>>()?;
    let frames: Vec<(usize, usize)> =
        data.train.iter().enumerate().flat_map(|(vi, v)| (0..v.len()).map(move |t| (vi, t))).collect();
    let order = seeded_order(state.seed, STAGE1_SHUFFLE_TAG, epoch, frames.len());
    let lr = state.stage1_lr;

    let mut grads = state.encoder.zeros_like();
    let (mut total, mut steps) = (0.0, 0usize);
    for batch in order.chunks(cfg.batch_frames) {
        grads.scale(0.0);
        let inv_b = 1.0 / batch.len() as f64;
        let mut batch_loss = 0.0;
        for &k in batch {
            let (vi, t) = frames[k];
            let x = &data.train[vi].features().expect("checked")[t];
            let out = encoder_forward(&state.encoder, x)?;
            let r =
                multitask_loss(&out.phase_logits, &out.tool_logits, &targets[vi].phase[t], &targets[vi].tool[t], &ctx)?;
            batch_loss += r.value;
            let gp: Vec<f64> = r.grad_phase.expect("multitask grads").iter().map(|g| g * inv_b).collect();
            let gt: Vec<f64> = r.grad_tool.expect("multitask grads").iter().map(|g| g * inv_b).collect();
            encoder_backward(&state.encoder, &out.cache, &gp, &gt, &mut grads)?;
        }
        check_finite(batch_loss, || format!("stage 1 epoch {epoch} step {steps}"))?;
        step_params(
            &mut state.encoder,
            &mut grads,
            &mut state.encoder_velocity,
            cfg.sgd,
            lr,
            state.config.max_grad_norm,
        )?;
        if !state.encoder.is_finite() {
            return Err(Error::Divergence(format!("stage 1 epoch {epoch} step {steps}: parameters are not finite")));
        }
        total += batch_loss;
        steps += 1;
    }
    let train_loss = total / frames.len() as f64;
    let (val_loss, val_acc) = encoder_validation(&state.encoder, &data.val, &ctx)?;
    check_finite(val_loss, || format!("stage 1 epoch {epoch} validation"))?;
    state.stage1_lr = state.stage1_scheduler.step(val_loss, lr)?;
    let rec = EpochRecord { epoch, lr, steps, train_loss, val_loss, val_phase_accuracy: val_acc };
    debug!("stage1 {rec:?}");
    state.history.stage1.push(rec.clone());
    state.next_epoch += 1;
    Ok(rec)
}

/// Encoder features for every frame of every video.
pub fn extract_features(encoder: &EncoderParams, videos: &[&VideoAnnotation]) -> Result<Vec<Vec<Vec<f64>>>> {
    videos
        .iter()
        .map(|v| {
            let x = v
                .features()
                .ok_or_else(|| Error::InvalidArgument(format!("video {} has no feature vectors", v.id())))?;
            x.iter().map(|f| encoder_forward(encoder, f).map(|o| o.features)).collect()
        })
        .collect()
}

fn whiten_all(model: &WhiteningModel, seqs: Vec<Vec<Vec<f64>>>) -> Result<Vec<Vec<Vec<f64>>>> {
    seqs.into_iter().map(|s| s.iter().map(|x| apply_whitening(model, x)).collect()).collect()
}

/// Whitened sequences for the training and validation videos; the
/// whitening model is fitted on training features only.
pub fn whitened_sequences(
    encoder: &EncoderParams,
    whitening: Option<&WhiteningModel>,
    data: &TrainData<'_>,
    cfg: &PipelineConfig,
) -> Result<(WhiteningModel, Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>)> {
    let train = extract_features(encoder, &data.train)?;
    let model = match whitening {
        Some(w) => w.clone(),
        None => {
            let pooled: Vec<Vec<f64>> = train.iter().flatten().cloned().collect();
            fit_whitening(&pooled, cfg.whitening.lambda, cfg.whitening.mode)?
        }
    };
    let val = extract_features(encoder, &data.val)?;
    Ok((model.clone(), whiten_all(&model, train)?, whiten_all(&model, val)?))
}

fn start_stage2(state: &mut TrainState, data: &TrainData<'_>) -> Result<()> {
    let (w, _, _) = whitened_sequences(&state.encoder, None, data, &state.config)?;
    let dims = BiLstmDims {
        input: state.config.model.feature_dim,
        hidden: state.config.model.lstm_hidden,
        n_phases: N_PHASES,
        n_tools: N_TOOLS,
    };
    let params = BiLstmParams::init(dims, &mut SeededRng::new(state.seed).child(BILSTM_INIT_TAG))?;
    state.bilstm_velocity = Some(params.zeros_like());
    state.bilstm = Some(params);
    state.whitening = Some(w);
    state.stage = Stage::Stage2;
    state.next_epoch = 0;
    Ok(())
}

/// Runs one stage-2 epoch over pre-whitened sequences and advances the state.
pub fn train_stage2(
    state: &mut TrainState,
    train_seqs: &[Vec<Vec<f64>>],
    val_seqs: &[Vec<Vec<f64>>],
    data: &TrainData<'_>,
    stats: &TrainingStats,
) -> Result<EpochRecord> {
    if state.stage != Stage::Stage2 || state.next_epoch >= state.config.stage2.epochs {
        return Err(Error::InvalidArgument("stage 2 is not active".into()));
    }
    if train_seqs.len() != data.train.len() || val_seqs.len() != data.val.len() {
        return Err(Error::Mismatch("sequence count does not match the dataset".into()));
    }
    let epoch = state.next_epoch;
    let cfg = state.config.stage2;
    let ctx = loss_context(state, stats, state.config.stage_alphas());
    let lr = state.stage2_lr;
    let max_norm = state.config.max_grad_norm;
    let params = state.bilstm.as_mut().ok_or_else(|| Error::Mismatch("stage 2 has no Bi-LSTM".into()))?;
    let velocity = state.bilstm_velocity.as_mut().ok_or_else(|| Error::Mismatch("stage 2 has no velocity".into()))?;

    let order = seeded_order(state.seed, STAGE2_SHUFFLE_TAG, epoch, train_seqs.len());
    let mut grads = params.zeros_like();
    let (mut total, mut frames, mut steps) = (0.0, 0usize, 0usize);
    for &vi in &order {
        let pairs = Targets::of(data.train[vi])?.pairs();
        let out = bilstm_forward(params, &train_seqs[vi])?;
        let (loss, gp, gt) = sequence_loss(&out.phase_logits, &out.tool_logits, &pairs, &ctx)?;
        check_finite(loss, || format!("stage 2 epoch {epoch} video {}", data.train[vi].id()))?;
        grads.scale(0.0);
        bilstm_backward(params, &out.cache, &gp, &gt, &mut grads)?;
        step_params(params, &mut grads, velocity, cfg.sgd, lr, max_norm)?;
        if !params.is_finite() {
            return Err(Error::Divergence(format!("stage 2 epoch {epoch}: parameters are not finite")));
        }
        total += loss * pairs.len() as f64;
        frames += pairs.len();
        steps += 1;
    }
    let train_loss = total / frames as f64;

    let (mut val_total, mut val_frames, mut correct) = (0.0, 0usize, 0usize);
    for (v, seq) in data.val.iter().zip(val_seqs) {
        let pairs = Targets::of(v)?.pairs();
        let out = bilstm_forward(params, seq)?;
        let (loss, _, _) = sequence_loss(&out.phase_logits, &out.tool_logits, &pairs, &ctx)?;
        val_total += loss * pairs.len() as f64;
        val_frames += pairs.len();
        for (t, (pt, _)) in pairs.iter().enumerate() {
            correct += usize::from(argmax(out.phase_logits.row(t))? == pt.class());
        }
    }
    let val_loss = val_total / val_frames as f64;
    check_finite(val_loss, || format!("stage 2 epoch {epoch} validation"))?;
    state.stage2_lr = state.stage2_scheduler.step(val_loss, lr)?;
    let rec =
        EpochRecord { epoch, lr, steps, train_loss, val_loss, val_phase_accuracy: correct as f64 / val_frames as f64 };
    debug!("stage2 {rec:?}");
    state.history.stage2.push(rec.clone());
    state.next_epoch += 1;
    Ok(rec)
}

/// Drives the configured ablation to completion from whatever point `state`
/// is at, calling `on_epoch` after every epoch and once more at the end.
pub fn run_pipeline(
    state: &mut TrainState,
    data: &TrainData<'_>,
    stats: &TrainingStats,
    on_epoch: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> Result<()> {
    while state.stage == Stage::Stage1 {
        if state.next_epoch < state.config.stage1.epochs {
            let rec = train_stage1(state, data, stats)?;
            info!(
                "stage 1 epoch {}/{}: train {:.5} val {:.5} acc {:.3} lr {:.3e}",
                rec.epoch + 1,
                state.config.stage1.epochs,
                rec.train_loss,
                rec.val_loss,
                rec.val_phase_accuracy,
                rec.lr
            );
            on_epoch(state)?;
        } else if state.config.ablation.has_stage2() {
            start_stage2(state, data)?;
        } else {
            state.stage = Stage::Done;
        }
    }
    if state.stage == Stage::Stage2 {
        let (_, train_seqs, val_seqs) =
            whitened_sequences(&state.encoder, state.whitening.as_ref(), data, &state.config)?;
        while state.next_epoch < state.config.stage2.epochs {
            let rec = train_stage2(state, &train_seqs, &val_seqs, data, stats)?;
            info!(
                "stage 2 epoch {}/{}: train {:.5} val {:.5} acc {:.3} lr {:.3e}",
                rec.epoch + 1,
                state.config.stage2.epochs,
                rec.train_loss,
                rec.val_loss,
                rec.val_phase_accuracy,
                rec.lr
            );
            on_epoch(state)?;
        }
        state.stage = Stage::Done;
    }
    on_epoch(state)
}
