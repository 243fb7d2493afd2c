//! C ABI over the `surgflow` library.
//!
//! Every fallible function returns an [`SwStatus`]. On failure a message is
//! kept per thread and can be read with [`sw_last_error_message`]. Objects
//! cross the boundary as opaque handles that must be released with the
//! matching `*_free` function. All matrices are row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use surgflow::error::Error;
use surgflow::eval::{average_precision, median_filter_labels, predict_scores};
use surgflow::losses::{joint_loss, phase_loss, tool_loss, JointActivation, PhaseTarget, ToolTarget};
use surgflow::stats::{
    apply_whitening, compute_class_weights, fit_whitening, ClassFrequencies, ClassWeights, CooccurrenceModel,
    WhiteningMode, WhiteningModel,
};
use surgflow::train::{load_checkpoint, TrainState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    ZeroFrequency = 4,
    Numeric = 5,
    Io = 6,
    Parse = 7,
    Checkpoint = 8,
    Mismatch = 9,
    Panic = 10,
}

/// Zero-count guard when `epsilon <= 0` is passed.
pub const SW_DEFAULT_EPSILON: f64 = 1e-8;
pub const SW_WHITENING_ZCA: u32 = 0;
pub const SW_WHITENING_STANDARDIZE: u32 = 1;

/// Tool × phase co-occurrence statistics.
pub struct SwCooccurrence(CooccurrenceModel);

/// Fitted feature whitening transform.
pub struct SwWhitening(WhiteningModel);

/// Trained model loaded from a checkpoint.
pub struct SwModel(TrainState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SwStatus {
    match e {
        Error::Dimension(_) => SwStatus::Dimension,
        Error::InvalidArgument(_) | Error::Config { .. } => SwStatus::InvalidArgument,
        Error::ZeroFrequency { .. } => SwStatus::ZeroFrequency,
        Error::Numeric(_) | Error::Divergence(_) => SwStatus::Numeric,
        Error::Io { .. } => SwStatus::Io,
        Error::Parse { .. } | Error::EmptyAnnotation | Error::Stride { .. } | Error::Json(_) => SwStatus::Parse,
        Error::CheckpointVersion { .. } | Error::CheckpointCorrupt(_) => SwStatus::Checkpoint,
        Error::Mismatch(_) => SwStatus::Mismatch,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SwStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SwStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(v);
    Ok(())
}

fn rows(data: &[f64], n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| data[i * dim..(i + 1) * dim].to_vec()).collect()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn sw_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Median-frequency class weights: `out[c] = median(f) / f[c]`.
///
/// # Safety
/// `counts` and `out` must point to `n` readable/writable elements.
#[no_mangle]
pub unsafe extern "C" fn sw_class_weights(counts: *const u64, n: usize, out: *mut f64) -> SwStatus {
    guard(|| {
        let counts = input(counts, n, "counts")?;
        let out = output(out, n, "out")?;
        let w = compute_class_weights(&ClassFrequencies::new(counts.to_vec())?)?;
        out.copy_from_slice(w.as_slice());
        Ok(())
    })
}

/// Weighted cross-entropy on class `target`. `grad` may be NULL.
///
/// # Safety
/// `logits`, `weights` and (if non-NULL) `grad` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_phase_loss(
    logits: *const f64,
    weights: *const f64,
    n: usize,
    target: usize,
    value: *mut f64,
    grad: *mut f64,
) -> SwStatus {
    guard(|| {
        let z = input(logits, n, "logits")?;
        let w = ClassWeights::new(input(weights, n, "weights")?.to_vec())?;
        let r = phase_loss(z, &PhaseTarget::new(target, n)?, &w)?;
        if !grad.is_null() {
            output(grad, n, "grad")?.copy_from_slice(r.grad_phase.as_deref().unwrap_or_default());
        }
        put(value, r.value, "value")
    })
}

/// Weighted multi-label soft margin loss against a 0/1 `target`.
/// `grad` may be NULL.
///
/// # Safety
/// All arrays must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_tool_loss(
    logits: *const f64,
    target: *const f64,
    weights: *const f64,
    n: usize,
    value: *mut f64,
    grad: *mut f64,
) -> SwStatus {
    guard(|| {
        let z = input(logits, n, "logits")?;
        let y = ToolTarget::new(input(target, n, "target")?.to_vec())?;
        let w = ClassWeights::new(input(weights, n, "weights")?.to_vec())?;
        let r = tool_loss(z, &y, &w)?;
        if !grad.is_null() {
            output(grad, n, "grad")?.copy_from_slice(r.grad_tool.as_deref().unwrap_or_default());
        }
        put(value, r.value, "value")
    })
}

/// Counts are `n_tools × n_phases`, row-major. `epsilon <= 0` selects
/// [`SW_DEFAULT_EPSILON`].
///
/// # Safety
/// `counts` must hold `n_tools * n_phases` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_cooccurrence_from_counts(
    counts: *const u64,
    n_tools: usize,
    n_phases: usize,
    epsilon: f64,
    out: *mut *mut SwCooccurrence,
) -> SwStatus {
    guard(|| {
        let counts = input(counts, n_tools.saturating_mul(n_phases), "counts")?;
        let eps = if epsilon > 0.0 { epsilon } else { SW_DEFAULT_EPSILON };
        let m = CooccurrenceModel::from_counts(n_tools, n_phases, counts.to_vec(), eps)?;
        put(out, Box::into_raw(Box::new(SwCooccurrence(m))), "out")
    })
}

/// Column-normalised frequencies (`which = 0`) or the inverse-frequency
/// penalty (`which = 1`), `n_tools × n_phases` row-major.
///
/// # Safety
/// `h` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_cooccurrence_matrix(
    h: *const SwCooccurrence,
    which: u32,
    out: *mut f64,
    len: usize,
) -> SwStatus {
    guard(|| {
        let m = &handle(h, "cooccurrence")?.0;
        let src = match which {
            0 => m.c_hat(),
            1 => m.inverse_frequency(),
            _ => return Err(Error::InvalidArgument(format!("unknown matrix selector {which}")).into()),
        };
        if len != src.as_slice().len() {
            return Err(Error::Dimension(format!("buffer of {len}, matrix has {}", src.as_slice().len())).into());
        }
        output(out, len, "out")?.copy_from_slice(src.as_slice());
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sw_cooccurrence_free(h: *mut SwCooccurrence) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Joint co-occurrence loss. `swap_activations = false` applies sigmoid to
/// the phase logits and softmax to the tool logits. Gradients may be NULL.
///
/// # Safety
/// Logit and gradient arrays must match the handle's phase and tool counts.
#[no_mangle]
pub unsafe extern "C" fn sw_joint_loss(
    h: *const SwCooccurrence,
    phase_logits: *const f64,
    tool_logits: *const f64,
    swap_activations: bool,
    value: *mut f64,
    grad_phase: *mut f64,
    grad_tool: *mut f64,
) -> SwStatus {
    guard(|| {
        let m = &handle(h, "cooccurrence")?.0;
        let zp = input(phase_logits, m.n_phases(), "phase_logits")?;
        let zt = input(tool_logits, m.n_tools(), "tool_logits")?;
        let r = joint_loss(zp, zt, m, JointActivation::from_swap(swap_activations))?;
        if !grad_phase.is_null() {
            output(grad_phase, m.n_phases(), "grad_phase")?
                .copy_from_slice(r.grad_phase.as_deref().unwrap_or_default());
        }
        if !grad_tool.is_null() {
            output(grad_tool, m.n_tools(), "grad_tool")?.copy_from_slice(r.grad_tool.as_deref().unwrap_or_default());
        }
        put(value, r.value, "value")
    })
}

/// Fits whitening on `n × dim` row-major features.
///
/// # Safety
/// `features` must hold `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_whitening_fit(
    features: *const f64,
    n: usize,
    dim: usize,
    lambda: f64,
    mode: u32,
    out: *mut *mut SwWhitening,
) -> SwStatus {
    guard(|| {
        let data = input(features, n.saturating_mul(dim), "features")?;
        let mode = match mode {
            SW_WHITENING_ZCA => WhiteningMode::Zca,
            SW_WHITENING_STANDARDIZE => WhiteningMode::Standardize,
            _ => return Err(Error::InvalidArgument(format!("unknown whitening mode {mode}")).into()),
        };
        let m = fit_whitening(&rows(data, n, dim), lambda, mode)?;
        put(out, Box::into_raw(Box::new(SwWhitening(m))), "out")
    })
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_whitening_dim(h: *const SwWhitening) -> usize {
    h.as_ref().map_or(0, |w| w.0.dim())
}

/// Whitens `n` row-major vectors of the handle's dimension.
///
/// # Safety
/// `x` and `out` must hold `n * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_whitening_apply(h: *const SwWhitening, x: *const f64, n: usize, out: *mut f64) -> SwStatus {
    guard(|| {
        let m = &handle(h, "whitening")?.0;
        let d = m.dim();
        let x = input(x, n.saturating_mul(d), "x")?;
        let out = output(out, n * d, "out")?;
        for (src, dst) in x.chunks(d).zip(out.chunks_mut(d)) {
            dst.copy_from_slice(&apply_whitening(m, src)?);
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sw_whitening_free(h: *mut SwWhitening) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Loads a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_model_load(path: *const c_char, out: *mut *mut SwModel) -> SwStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
        let state = load_checkpoint(Path::new(p))?;
        put(out, Box::into_raw(Box::new(SwModel(state))), "out")
    })
}

/// Feature dimension the model expects, or 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_model_input_dim(h: *const SwModel) -> usize {
    h.as_ref().map_or(0, |m| m.0.input_dim())
}

/// Scores one video of `n_frames × dim` features: softmax phase
/// probabilities (`n_frames × 7`) and sigmoid tool probabilities
/// (`n_frames × 8`).
///
/// # Safety
/// Buffers must hold the sizes given above.
#[no_mangle]
pub unsafe extern "C" fn sw_model_predict(
    h: *const SwModel,
    features: *const f64,
    n_frames: usize,
    dim: usize,
    phase_out: *mut f64,
    tool_out: *mut f64,
) -> SwStatus {
    guard(|| {
        let m = &handle(h, "model")?.0;
        if dim != m.input_dim() {
            return Err(Error::Mismatch(format!("feature dimension {dim}, the model expects {}", m.input_dim())).into());
        }
        let data = input(features, n_frames.saturating_mul(dim), "features")?;
        let (ps, ts) = predict_scores(m, &rows(data, n_frames, dim))?;
        output(phase_out, ps.as_slice().len(), "phase_out")?.copy_from_slice(ps.as_slice());
        output(tool_out, ts.as_slice().len(), "tool_out")?.copy_from_slice(ts.as_slice());
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sw_model_free(h: *mut SwModel) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Average precision of `scores` against 0/1 `truth`. `positives` may be
/// NULL; with no positives the AP is 0.
///
/// # Safety
/// `scores` and `truth` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn sw_average_precision(
    scores: *const f64,
    truth: *const u8,
    n: usize,
    ap: *mut f64,
    positives: *mut usize,
) -> SwStatus {
    guard(|| {
        let s = input(scores, n, "scores")?;
        let t: Vec<bool> = input(truth, n, "truth")?.iter().map(|&b| b != 0).collect();
        let r = average_precision(s, &t)?;
        if !positives.is_null() {
            positives.write(r.positives);
        }
        put(ap, r.value, "ap")
    })
}

/// Sliding median of integer labels with an odd window.
///
/// # Safety
/// `labels` and `out` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn sw_median_filter(labels: *const u32, n: usize, window: usize, out: *mut u32) -> SwStatus {
    guard(|| {
        let l: Vec<usize> = input(labels, n, "labels")?.iter().map(|&x| x as usize).collect();
        let f = median_filter_labels(&l, window)?;
        for (o, v) in output(out, n, "out")?.iter_mut().zip(f) {
            *o = v as u32;
        }
        Ok(())
    })
}
