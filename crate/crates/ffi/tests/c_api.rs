use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use sasegan::model::ModelConfig;
use sasegan::train::{save_checkpoint, TrainConfig, TrainState};
use sasegan_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sg_last_error()) }.to_string_lossy().into_owned()
}

fn tiny_checkpoint(dir: &std::path::Path) -> CString {
    let state = TrainState::new(&ModelConfig::shrunk(32, [11]), TrainConfig::default()).unwrap();
    let path = dir.join("g.ckpt");
    save_checkpoint(&path, &state).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn footprint_through_c_abi() {
    let mut fp = SgFootprint::default();
    assert_eq!(unsafe { sg_attn_footprint(16384, 11, 4, &mut fp) }, SgStatus::Ok);
    assert_eq!((fp.time_dim, fp.raw_map_elems, fp.pooled_keys), (8, 64, 2));
    assert_eq!(fp.pooled_map_elems, 16);
    assert_eq!(unsafe { sg_attn_footprint(16384, 12, 4, &mut fp) }, SgStatus::Config);
    assert!(last_error().contains("12"));
    assert_eq!(unsafe { sg_attn_footprint(16384, 3, 4, ptr::null_mut()) }, SgStatus::NullPointer);
}

#[test]
fn metrics_through_c_abi() {
    let x: Vec<f64> = (0..16000).map(|t| (t as f64 * 0.01).sin() * 0.3 + (t as f64 * 0.37).cos() * 0.1).collect();
    let mut v = 0.0;
    assert_eq!(unsafe { sg_ssnr(x.as_ptr(), x.as_ptr(), x.len(), &mut v) }, SgStatus::Ok);
    assert_eq!(v, 35.0);
    assert_eq!(unsafe { sg_stoi(x.as_ptr(), x.as_ptr(), x.len(), 16000, &mut v) }, SgStatus::Ok);
    assert!(v > 1.0 - 1e-6);
    assert_eq!(unsafe { sg_ssnr(x.as_ptr(), x.as_ptr(), 100, &mut v) }, SgStatus::Metric);
    assert_eq!(unsafe { sg_ssnr(ptr::null(), x.as_ptr(), 100, &mut v) }, SgStatus::NullPointer);
    assert!(last_error().contains("clean"));
}

#[test]
fn generator_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = tiny_checkpoint(dir.path());
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { sg_generator_load(path.as_ptr(), &mut h) }, SgStatus::Ok);
    assert!(!h.is_null());
    let mut window = 0;
    assert_eq!(unsafe { sg_generator_window(h, &mut window) }, SgStatus::Ok);
    assert_eq!(window, 512);

    let x: Vec<f64> = (0..1300).map(|t| 0.2 * (t as f64 * 0.05).sin()).collect();
    let mut a = vec![0.0; x.len()];
    let mut b = vec![0.0; x.len()];
    assert_eq!(unsafe { sg_enhance(h, x.as_ptr(), x.len(), 9, a.as_mut_ptr()) }, SgStatus::Ok);
    assert_eq!(unsafe { sg_enhance(h, x.as_ptr(), x.len(), 9, b.as_mut_ptr()) }, SgStatus::Ok);
    assert_eq!(a, b);
    assert!(a.iter().all(|v| v.is_finite()));
    assert_eq!(unsafe { sg_enhance(h, x.as_ptr(), 0, 9, b.as_mut_ptr()) }, SgStatus::InvalidArgument);
    unsafe { sg_generator_free(h) };
    unsafe { sg_generator_free(ptr::null_mut()) };
}

#[test]
fn load_errors_are_reported() {
    let missing = CString::new("/nonexistent/x.ckpt").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { sg_generator_load(missing.as_ptr(), &mut h) }, SgStatus::Io);
    assert!(h.is_null());
    assert!(last_error().contains("nonexistent"));

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sg_generator_load(junk.as_ptr(), &mut h) }, SgStatus::Checkpoint);
    assert_eq!(unsafe { sg_generator_load(ptr::null(), &mut h) }, SgStatus::NullPointer);
}

#[test]
fn generated_header_declares_the_api_and_compiles() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sasegan.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "sg_generator_load",
        "sg_generator_free",
        "sg_generator_window",
        "sg_enhance",
        "sg_ssnr",
        "sg_stoi",
        "sg_attn_footprint",
        "sg_last_error",
        "SG_STATUS_OK",
        "typedef struct SgGenerator SgGenerator",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Syntax-check with a C compiler when one is available.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"sasegan.h\"\nint main(void) { return SG_STATUS_OK; }\n").unwrap();
    let inc = header.parent().unwrap();
    match Command::new("cc").arg("-fsyntax-only").arg("-I").arg(inc).arg(&src).output() {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(_) => eprintln!("no C compiler; skipped syntax check"),
    }
}
