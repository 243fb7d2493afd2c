use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use surgflow_ffi::*;

fn last_error() -> String {
    let p = sw_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn class_weights_and_errors() {
    let counts = [1u64, 2, 4];
    let mut out = [0.0; 3];
    assert_eq!(unsafe { sw_class_weights(counts.as_ptr(), 3, out.as_mut_ptr()) }, SwStatus::Ok);
    assert_eq!(out, [2.0, 1.0, 0.5]);

    let zero = [1u64, 0, 4];
    assert_eq!(unsafe { sw_class_weights(zero.as_ptr(), 3, out.as_mut_ptr()) }, SwStatus::ZeroFrequency);
    assert!(last_error().contains("zero frequency"));
    assert_eq!(unsafe { sw_class_weights(ptr::null(), 3, out.as_mut_ptr()) }, SwStatus::NullPointer);
    sw_clear_error();
    assert!(sw_last_error_message().is_null());
}

#[test]
fn losses_match_library() {
    let z = [0.5, -1.0, 2.0];
    let w = [1.0, 2.0, 0.5];
    let (mut v, mut g) = (0.0, [0.0; 3]);
    assert_eq!(unsafe { sw_phase_loss(z.as_ptr(), w.as_ptr(), 3, 2, &mut v, g.as_mut_ptr()) }, SwStatus::Ok);
    let lse = z.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
    assert!((v - 0.5 * (lse - 2.0)).abs() < 1e-12);
    assert!(g.iter().sum::<f64>().abs() < 1e-12);
    assert_eq!(
        unsafe { sw_phase_loss(z.as_ptr(), w.as_ptr(), 3, 3, &mut v, ptr::null_mut()) },
        SwStatus::InvalidArgument
    );

    let y = [1.0, 0.0, 1.0];
    assert_eq!(unsafe { sw_tool_loss(z.as_ptr(), y.as_ptr(), w.as_ptr(), 3, &mut v, ptr::null_mut()) }, SwStatus::Ok);
    let expect: f64 = z
        .iter()
        .zip(&y)
        .zip(&w)
        .map(|((&z, &y), &w)| {
            w * -(y * (1.0 / (1.0 + (-z).exp())).ln() + (1.0 - y) * (1.0 - 1.0 / (1.0 + (-z).exp())).ln())
        })
        .sum();
    assert!((v - expect).abs() < 1e-12);
}

#[test]
fn cooccurrence_handle() {
    // 2 tools × 2 phases
    let counts = [3u64, 0, 1, 2];
    let mut h: *mut SwCooccurrence = ptr::null_mut();
    assert_eq!(unsafe { sw_cooccurrence_from_counts(counts.as_ptr(), 2, 2, 0.0, &mut h) }, SwStatus::Ok);
    let mut c = [0.0; 4];
    assert_eq!(unsafe { sw_cooccurrence_matrix(h, 0, c.as_mut_ptr(), 4) }, SwStatus::Ok);
    assert_eq!(c, [0.75, 0.0, 0.25, 1.0]);
    let mut inv = [0.0; 4];
    assert_eq!(unsafe { sw_cooccurrence_matrix(h, 1, inv.as_mut_ptr(), 4) }, SwStatus::Ok);
    assert!((inv[1] - 1e8).abs() < 1e-3);
    assert_eq!(unsafe { sw_cooccurrence_matrix(h, 1, inv.as_mut_ptr(), 3) }, SwStatus::Dimension);

    let zp = [0.0, 0.0];
    let zt = [0.0, 0.0];
    let (mut v, mut gp, mut gt) = (0.0, [0.0; 2], [0.0; 2]);
    let st = unsafe { sw_joint_loss(h, zp.as_ptr(), zt.as_ptr(), false, &mut v, gp.as_mut_ptr(), gt.as_mut_ptr()) };
    assert_eq!(st, SwStatus::Ok);
    // sigmoid(0) = 0.5 on phases, softmax = 0.5 on tools: 0.25 · Σ IF
    let expect = 0.25 * inv.iter().sum::<f64>();
    assert!((v - expect).abs() / expect < 1e-12);
    unsafe { sw_cooccurrence_free(h) };
    unsafe { sw_cooccurrence_free(ptr::null_mut()) };
}

#[test]
fn whitening_handle() {
    let n = 50;
    let dim = 3;
    let feats: Vec<f64> = (0..n * dim).map(|i| ((i * 37 % 11) as f64) + (i % dim) as f64 * 0.3).collect();
    let mut h: *mut SwWhitening = ptr::null_mut();
    assert_eq!(unsafe { sw_whitening_fit(feats.as_ptr(), n, dim, 1e-5, SW_WHITENING_ZCA, &mut h) }, SwStatus::Ok);
    assert_eq!(unsafe { sw_whitening_dim(h) }, dim);
    let mut out = vec![0.0; n * dim];
    assert_eq!(unsafe { sw_whitening_apply(h, feats.as_ptr(), n, out.as_mut_ptr()) }, SwStatus::Ok);
    for j in 0..dim {
        let m: f64 = (0..n).map(|i| out[i * dim + j]).sum::<f64>() / n as f64;
        assert!(m.abs() < 1e-9);
    }
    unsafe { sw_whitening_free(h) };
    assert_eq!(unsafe { sw_whitening_fit(feats.as_ptr(), n, dim, 1e-5, 7, &mut h) }, SwStatus::InvalidArgument);
}

#[test]
fn metrics() {
    let s = [0.9, 0.8, 0.1];
    let t = [1u8, 0, 1];
    let (mut ap, mut pos) = (0.0, 0usize);
    assert_eq!(unsafe { sw_average_precision(s.as_ptr(), t.as_ptr(), 3, &mut ap, &mut pos) }, SwStatus::Ok);
    assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    assert_eq!(pos, 2);

    let l = [0u32, 1, 0, 0, 2, 2, 2];
    let mut o = [0u32; 7];
    assert_eq!(unsafe { sw_median_filter(l.as_ptr(), 7, 3, o.as_mut_ptr()) }, SwStatus::Ok);
    assert_eq!(o, [0, 0, 0, 0, 2, 2, 2]);
    assert_eq!(unsafe { sw_median_filter(l.as_ptr(), 7, 4, o.as_mut_ptr()) }, SwStatus::InvalidArgument);
}

#[test]
fn model_load_errors() {
    let mut h: *mut SwModel = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.swmt").unwrap();
    assert_eq!(unsafe { sw_model_load(missing.as_ptr(), &mut h) }, SwStatus::Io);
    assert!(h.is_null());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.swmt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sw_model_load(bad.as_ptr(), &mut h) }, SwStatus::Checkpoint);
    assert_eq!(unsafe { sw_model_input_dim(ptr::null()) }, 0);
    assert!(unsafe { CStr::from_ptr(sw_version()) }.to_str().unwrap().starts_with("0."));
}

#[test]
fn model_predict_roundtrip() {
    use surgflow::train::{save_checkpoint, PipelineConfig, TrainState};
    let mut cfg = PipelineConfig::desk();
    cfg.model.encoder_hidden = 6;
    cfg.model.feature_dim = 5;
    let state = TrainState::new(cfg, 3, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.swmt");
    save_checkpoint(&path, &state).unwrap();

    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h: *mut SwModel = ptr::null_mut();
    assert_eq!(unsafe { sw_model_load(c.as_ptr(), &mut h) }, SwStatus::Ok);
    assert_eq!(unsafe { sw_model_input_dim(h) }, 4);
    let feats = [0.1, -0.2, 0.3, 0.4, 1.0, 0.0, -1.0, 0.5];
    let mut ps = [0.0; 14];
    let mut ts = [0.0; 16];
    assert_eq!(unsafe { sw_model_predict(h, feats.as_ptr(), 2, 4, ps.as_mut_ptr(), ts.as_mut_ptr()) }, SwStatus::Ok);
    for r in 0..2 {
        assert!((ps[r * 7..(r + 1) * 7].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(ts.iter().all(|&p| (0.0..=1.0).contains(&p)));
    let (eps, ets) = surgflow::eval::predict_scores(&state, &[feats[..4].to_vec(), feats[4..].to_vec()]).unwrap();
    assert_eq!(eps.as_slice(), &ps[..]);
    assert_eq!(ets.as_slice(), &ts[..]);
    assert_eq!(
        unsafe { sw_model_predict(h, feats.as_ptr(), 2, 3, ps.as_mut_ptr(), ts.as_mut_ptr()) },
        SwStatus::Mismatch
    );
    unsafe { sw_model_free(h) };
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/surgflow.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["sw_joint_loss", "sw_model_predict", "SW_STATUS_ZERO_FREQUENCY", "typedef struct SwModel SwModel"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"surgflow.h\"\nint main(void) { SwStatus s = SW_STATUS_OK; return (int)s; }\n")
        .unwrap();
    let inc = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    match Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", inc]).arg(&src).status() {
        Ok(st) => assert!(st.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler found; syntax check skipped"),
    }
}
