use std::ffi::{CStr, CString};
use std::ptr;

use daps_ffi::*;

const SMALL: &str = r#"
[run]
chains = 4
seed = 3

[prior]
weights = [1.0]
means = [[0.0, 0.0]]
variances = [[1.0, 1.0]]

[operator]
kind = "identity"

[measurement]
y = [0.5, -0.5]
beta_model = 0.5

[sampler]
sigma_max = 5.0
n_anneal = 10
langevin_steps = 20
eta = 0.01

[oracle]
kind = "conjugate"
"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(daps_last_error()) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> *mut DapsConfig {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { daps_config_from_toml(c.as_ptr(), &mut cfg) }, DapsStatus::Ok);
    cfg
}

#[test]
fn run_and_read_back() {
    let cfg = config(SMALL);
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(daps_run(cfg, 1, &mut run), DapsStatus::Ok);
        assert_eq!(daps_run_dim(run), 2);
        assert_eq!(daps_run_chain_count(run), 4);
        let mut x = [0.0; 2];
        assert_eq!(daps_run_sample(run, 0, x.as_mut_ptr(), 2), DapsStatus::Ok);
        assert!(x.iter().all(|v| v.is_finite()));
        assert_eq!(daps_run_sample(run, 9, x.as_mut_ptr(), 2), DapsStatus::OutOfRange);
        assert_eq!(daps_run_sample(run, 0, x.as_mut_ptr(), 3), DapsStatus::InvalidArgument);
        let name = CString::new("w2_oracle").unwrap();
        let mut w2 = -1.0;
        assert_eq!(daps_run_metric(run, name.as_ptr(), &mut w2), DapsStatus::Ok);
        assert!(w2 >= 0.0);
        let missing = CString::new("nope").unwrap();
        assert_eq!(daps_run_metric(run, missing.as_ptr(), &mut w2), DapsStatus::OutOfRange);
        assert!(last_error().contains("nope"));
        let mut sel = 0;
        assert_eq!(daps_run_selected(run, &mut sel), DapsStatus::OutOfRange);
        daps_run_free(run);
        daps_config_free(cfg);
    }
}

#[test]
fn same_seed_same_samples_across_thread_counts() {
    let cfg = config(SMALL);
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(daps_run(cfg, 1, &mut a), DapsStatus::Ok);
        assert_eq!(daps_run(cfg, 3, &mut b), DapsStatus::Ok);
        for c in 0..4 {
            let (mut x, mut y) = ([0.0; 2], [0.0; 2]);
            daps_run_sample(a, c, x.as_mut_ptr(), 2);
            daps_run_sample(b, c, y.as_mut_ptr(), 2);
            assert_eq!(x, y);
        }
        daps_run_free(a);
        daps_run_free(b);
        daps_config_free(cfg);
    }
}

#[test]
fn best_of_reports_selection() {
    let cfg = config(SMALL);
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(daps_best_of(cfg, 4, 1, &mut run), DapsStatus::Ok);
        let mut sel = 99;
        assert_eq!(daps_run_selected(run, &mut sel), DapsStatus::Ok);
        assert!(sel < 4);
        daps_run_free(run);
        daps_config_free(cfg);
    }
}

#[test]
fn config_errors_map_to_codes() {
    let bad = CString::new(SMALL.replace("\"identity\"", "\"warp\"")).unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(daps_config_from_toml(bad.as_ptr(), &mut cfg), DapsStatus::Config);
        assert!(cfg.is_null());
        assert!(last_error().contains("operator.kind"), "{}", last_error());
        assert_eq!(daps_config_from_toml(ptr::null(), &mut cfg), DapsStatus::NullPointer);
        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(
            daps_config_from_toml(invalid.as_ptr().cast(), &mut cfg),
            DapsStatus::InvalidUtf8
        );
        let preset = CString::new("no_such_preset").unwrap();
        assert_eq!(daps_config_from_preset(preset.as_ptr(), &mut cfg), DapsStatus::Config);
    }
}

#[test]
fn setters_and_snapshot() {
    let cfg = config(SMALL);
    unsafe {
        let key = CString::new("n_ode").unwrap();
        assert_eq!(daps_config_set(cfg, key.as_ptr(), 8.0), DapsStatus::Ok);
        let key = CString::new("no_such_key").unwrap();
        assert_eq!(daps_config_set(cfg, key.as_ptr(), 1.0), DapsStatus::Config);
        assert_eq!(daps_config_set_chains(cfg, 0), DapsStatus::InvalidArgument);
        assert_eq!(daps_config_set_seed(cfg, 42), DapsStatus::Ok);
        let mut len = 0;
        assert_eq!(daps_config_snapshot(cfg, ptr::null_mut(), 0, &mut len), DapsStatus::Ok);
        let mut buf = vec![0 as std::ffi::c_char; len + 1];
        assert_eq!(daps_config_snapshot(cfg, buf.as_mut_ptr(), 4, &mut len), DapsStatus::OutOfRange);
        assert_eq!(daps_config_snapshot(cfg, buf.as_mut_ptr(), buf.len(), &mut len), DapsStatus::Ok);
        let text = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert!(text.contains("n_ode = 8"));
        assert!(text.contains("seed = 42"));
        let mut again = ptr::null_mut();
        let c = CString::new(text).unwrap();
        assert_eq!(daps_config_from_toml(c.as_ptr(), &mut again), DapsStatus::Ok);
        daps_config_free(again);
        daps_config_free(cfg);
        daps_config_free(ptr::null_mut());
    }
}

#[test]
fn wasserstein_helpers() {
    let a = [0.0, 0.0, 1.0, 1.0];
    let b = [1.0, 1.0, 0.0, 0.0];
    let c = [3.0, 4.0, 3.0, 4.0];
    let mut w = -1.0;
    unsafe {
        assert_eq!(daps_w2_exact(a.as_ptr(), b.as_ptr(), 2, 2, &mut w), DapsStatus::Ok);
        assert!(w.abs() < 1e-12);
        assert_eq!(daps_w2_exact(a.as_ptr(), c.as_ptr(), 2, 2, &mut w), DapsStatus::Ok);
        // squared costs 25 and 13, both targets identical
        assert!((w - (19.0f64).sqrt()).abs() < 1e-12);
        assert_eq!(daps_w2_sliced(a.as_ptr(), 2, b.as_ptr(), 2, 2, 16, 0, &mut w), DapsStatus::Ok);
        assert!(w.abs() < 1e-12);
        assert_eq!(daps_w2_exact(ptr::null(), b.as_ptr(), 2, 2, &mut w), DapsStatus::NullPointer);
        assert_eq!(daps_w2_exact(a.as_ptr(), b.as_ptr(), 0, 2, &mut w), DapsStatus::InvalidArgument);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(daps_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/daps.h")).unwrap();
    for sym in [
        "typedef struct DapsConfig DapsConfig;",
        "typedef struct DapsRun DapsRun;",
        "DAPS_STATUS_OK = 0",
        "daps_config_from_toml(",
        "daps_run(",
        "daps_best_of(",
        "daps_run_sample(",
        "daps_w2_exact(",
        "daps_last_error(void)",
    ] {
        assert!(h.contains(sym), "header lacks `{sym}`");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    use std::path::PathBuf;
    use std::process::Command;
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // test binary lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libdaps_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let bin = std::env::temp_dir().join(format!("daps_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(manifest.join("examples/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    let _ = std::fs::remove_file(&bin);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(fields[0], 2.0);
    assert!(fields[1..].iter().all(|v| v.is_finite()));
}
