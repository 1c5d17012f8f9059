use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use satd_link::pairgen::TokenizerConfig;
use satd_link::textnn::synthetic::{planted_pairs, SyntheticConfig};
use satd_link::textnn::{train_pair_classifier, Architecture, Classifier, TrainConfig};
use satd_link_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = satd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_model() -> Classifier {
    let pairs = planted_pairs(&SyntheticConfig {
        pairs: 40,
        distractor_rate: 0.0,
        ..SyntheticConfig::default()
    });
    let arch = Architecture {
        embedding_dim: 16,
        windows: vec![1, 2],
        filters_per_window: 8,
        ..Architecture::pair_classifier()
    };
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    train_pair_classifier(&pairs, arch, TokenizerConfig::default(), &cfg).unwrap().0
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { satd_string_free(p) };
    s
}

#[test]
fn model_round_trip_matches_the_library() {
    let model = small_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();

    let mut handle: *mut SatdModel = ptr::null_mut();
    let st = unsafe { satd_model_load(c(path.to_str().unwrap()).as_ptr(), &mut handle) };
    assert_eq!(st, SatdStatus::Ok);
    assert!(!handle.is_null());

    let (o, t) = ("dupmark kabelo sitoru", "dupmark sitoru vanega");
    let mut label = 99u32;
    let mut probs = [0.0f64; 3];
    let st = unsafe { satd_model_predict_pair(handle, c(o).as_ptr(), c(t).as_ptr(), &mut label, probs.as_mut_ptr()) };
    assert_eq!(st, SatdStatus::Ok);
    let want = model.predict_pair(o, t).unwrap();
    assert_eq!(label as usize, want.label.index());
    assert_eq!(probs, want.probabilities);

    let st = unsafe { satd_model_predict_pair(handle, c(o).as_ptr(), c(t).as_ptr(), &mut label, ptr::null_mut()) };
    assert_eq!(st, SatdStatus::Ok);

    let bytes = model.to_bytes().unwrap();
    let mut second: *mut SatdModel = ptr::null_mut();
    assert_eq!(unsafe { satd_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut second) }, SatdStatus::Ok);
    unsafe {
        satd_model_free(handle);
        satd_model_free(second);
        satd_model_free(ptr::null_mut());
    }
}

#[test]
fn load_errors_map_to_status_codes() {
    let mut handle: *mut SatdModel = ptr::null_mut();
    let st = unsafe { satd_model_load(c("/nonexistent/model.bin").as_ptr(), &mut handle) };
    assert_eq!(st, SatdStatus::Io);
    assert!(last_error().contains("/nonexistent/model.bin"));
    assert!(handle.is_null());

    let junk = b"not a model at all";
    let st = unsafe { satd_model_from_bytes(junk.as_ptr(), junk.len(), &mut handle) };
    assert_eq!(st, SatdStatus::ModelFormat);

    let st = unsafe { satd_model_load(ptr::null(), &mut handle) };
    assert_eq!(st, SatdStatus::NullArgument);
    assert!(last_error().contains("path"));

    let bad = [0xffu8, 0xfe, 0];
    let st = unsafe { satd_model_load(bad.as_ptr().cast(), &mut handle) };
    assert_eq!(st, SatdStatus::InvalidUtf8);
}

#[test]
fn untrained_model_reports_not_trained() {
    let mut model = small_model();
    model.trained = false;
    let bytes = model.to_bytes().unwrap();
    let mut handle: *mut SatdModel = ptr::null_mut();
    assert_eq!(unsafe { satd_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut handle) }, SatdStatus::Ok);
    let mut label = 0u32;
    let st = unsafe { satd_model_predict_pair(handle, c("a").as_ptr(), c("b").as_ptr(), &mut label, ptr::null_mut()) };
    assert_eq!(st, SatdStatus::NotTrained);
    unsafe { satd_model_free(handle) };
}

#[test]
fn cosine_and_kappa() {
    let mut out = -1.0;
    let st = unsafe { satd_cosine_similarity(c("remove this hack").as_ptr(), c("hack removed").as_ptr(), &mut out) };
    assert_eq!(st, SatdStatus::Ok);
    assert!((out - 1.0 / (3.0f64.sqrt() * 2.0f64.sqrt())).abs() < 1e-12);
    unsafe { satd_cosine_similarity(c("").as_ptr(), c("x y").as_ptr(), &mut out) };
    assert_eq!(out, 0.0);

    let a = [0u32, 1, 2, 1, 0];
    let st = unsafe { satd_cohens_kappa(a.as_ptr(), a.as_ptr(), a.len(), &mut out) };
    assert_eq!(st, SatdStatus::Ok);
    assert_eq!(out, 1.0);
    let st = unsafe { satd_cohens_kappa(a.as_ptr(), a.as_ptr(), 0, &mut out) };
    assert_eq!(st, SatdStatus::InvalidArgument);
    let st = unsafe { satd_cohens_kappa(ptr::null(), a.as_ptr(), 1, &mut out) };
    assert_eq!(st, SatdStatus::NullArgument);
}

#[test]
fn keywords_and_references_as_json() {
    let mut out = ptr::null_mut();
    let st = unsafe { satd_detect_keywords(c("// TODO: temporary hack").as_ptr(), &mut out) };
    assert_eq!(st, SatdStatus::Ok);
    assert_eq!(take_string(out), r#"["todo","hack","temporary"]"#);

    let st = unsafe { satd_extract_references(c("Fix #12769, see HBASE-42 and 0ffd5fa").as_ptr(), &mut out) };
    assert_eq!(st, SatdStatus::Ok);
    let refs: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    let raws: Vec<&str> = refs.as_array().unwrap().iter().map(|r| r["raw"].as_str().unwrap()).collect();
    assert_eq!(raws, ["#12769", "HBASE-42", "0ffd5fa"]);

    let st = unsafe { satd_detect_keywords(c("x").as_ptr(), ptr::null_mut()) };
    assert_eq!(st, SatdStatus::NullArgument);
    unsafe { satd_string_free(ptr::null_mut()) };
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(satd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/satd_link.h")
}

#[test]
fn header_declares_the_whole_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "satd_last_error_message",
        "satd_version",
        "satd_model_load",
        "satd_model_from_bytes",
        "satd_model_free",
        "satd_model_predict_pair",
        "satd_cosine_similarity",
        "satd_cohens_kappa",
        "satd_detect_keywords",
        "satd_extract_references",
        "satd_string_free",
        "typedef struct SatdModel SatdModel",
        "SATD_STATUS_OK = 0",
        "SATD_STATUS_INTERNAL = 7",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

/// Directory holding the library artifacts of this build, found from the
/// test binary's location (`target/<profile>/deps/<test>`).
fn artifact_dir() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    exe.parent()?.parent().map(Path::to_path_buf)
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(dir) = artifact_dir() else { return };
    let lib = dir.join("libsatd_link_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "satd_link.h"
int main(void) {
    double k = 0.0;
    uint32_t a[4] = {0, 1, 2, 2};
    if (satd_cohens_kappa(a, a, 4, &k) != SATD_STATUS_OK || k != 1.0) return 1;
    char *json = NULL;
    if (satd_detect_keywords("FIXME later", &json) != SATD_STATUS_OK) return 2;
    if (strcmp(json, "[\"fixme\"]") != 0) return 3;
    satd_string_free(json);
    SatdModel *m = NULL;
    if (satd_model_load("/nonexistent", &m) != SATD_STATUS_IO) return 4;
    if (satd_last_error_message() == NULL) return 5;
    printf("ok %s\n", satd_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = work.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
