use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use clea_ffi::*;

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { clea_string_free(s) };
    out
}

fn last_error() -> String {
    let p = clea_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn world_lifecycle_and_error_purity() {
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { clea_world_new_default(&mut w) }, CleaStatus::Ok);
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { clea_world_digest(w, &mut d) }, CleaStatus::Ok);
    let before = take(d);

    let mut fb = ptr::null_mut();
    let status = unsafe { clea_world_step(w, cstr("open(robot1, oven)").as_ptr(), &mut fb) };
    assert_eq!(status, CleaStatus::ActionFailed);
    assert!(take(fb).contains("not_at_location"));
    assert!(last_error().contains("oven"));
    unsafe { clea_world_digest(w, &mut d) };
    assert_eq!(take(d), before);

    for a in ["go_to(robot1, oven)", "open(robot1, oven)"] {
        assert_eq!(
            unsafe { clea_world_step(w, cstr(a).as_ptr(), ptr::null_mut()) },
            CleaStatus::Ok
        );
    }
    let mut obs = ptr::null_mut();
    assert_eq!(
        unsafe { clea_world_observe(w, cstr("robot1").as_ptr(), &mut obs) },
        CleaStatus::Ok
    );
    assert!(take(obs).contains("bread"));

    let status = unsafe { clea_world_step(w, cstr("open(robot1, dishwasher)").as_ptr(), ptr::null_mut()) };
    assert_eq!(status, CleaStatus::UnknownEntity);
    let status = unsafe { clea_world_observe(w, cstr("robot9").as_ptr(), &mut obs) };
    assert_eq!(status, CleaStatus::UnknownEntity);

    let mut st = ptr::null_mut();
    assert_eq!(unsafe { clea_world_state_json(w, &mut st) }, CleaStatus::Ok);
    assert!(take(st).contains("\"oven\":true"));
    unsafe { clea_world_free(w) };
}

#[test]
fn config_and_argument_errors() {
    let mut w = ptr::null_mut();
    let status = unsafe { clea_world_new_json(cstr("{\"objects\": 3}").as_ptr(), &mut w) };
    assert_eq!(status, CleaStatus::InvalidConfig);
    assert!(w.is_null());
    assert_eq!(
        unsafe { clea_world_new_json(ptr::null(), &mut w) },
        CleaStatus::NullArgument
    );
    assert_eq!(
        unsafe { clea_world_new_default(ptr::null_mut()) },
        CleaStatus::NullArgument
    );
    let bad = [0x66u8, 0xff, 0xfe, 0];
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { clea_parse_action(bad.as_ptr().cast(), &mut out) },
        CleaStatus::InvalidUtf8
    );
    unsafe { clea_world_free(ptr::null_mut()) };
    unsafe { clea_string_free(ptr::null_mut()) };
}

#[test]
fn parse_roundtrip_and_errors() {
    let mut out = ptr::null_mut();
    let status = unsafe { clea_parse_action(cstr("  PICK_FROM( robot1 ,apple,table )").as_ptr(), &mut out) };
    assert_eq!(status, CleaStatus::Ok);
    assert_eq!(take(out), "pick_from(robot1, apple, table)");
    let status = unsafe { clea_parse_action(cstr("open(robot1)").as_ptr(), &mut out) };
    assert_eq!(status, CleaStatus::ParseError);
    assert!(!last_error().is_empty());
    assert!(!unsafe { CStr::from_ptr(clea_version()) }.to_bytes().is_empty());
}

#[test]
fn scripted_suite_over_ffi() {
    let mut out = ptr::null_mut();
    let status = unsafe { clea_run_default_suite(cstr("clea").as_ptr(), 0, &mut out) };
    assert_eq!(status, CleaStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 12);
    assert!(results.iter().all(|r| r["success"] == true));
    let status = unsafe { clea_run_default_suite(cstr("oracle").as_ptr(), 0, &mut out) };
    assert_eq!(status, CleaStatus::InvalidArgument);
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/clea.h")).unwrap();
    for sym in [
        "typedef struct CleaWorld CleaWorld",
        "CLEA_STATUS_ACTION_FAILED = 6",
        "clea_world_new_default",
        "clea_world_step",
        "clea_world_digest",
        "clea_parse_action",
        "clea_last_error",
        "clea_string_free",
        "clea_run_default_suite",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libclea_ffi.a");
    let has_cc = Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success());
    if !lib.exists() || !has_cc {
        eprintln!("skipping C link test: compiler or {} unavailable", lib.display());
        return;
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::temp_dir().join(format!("clea_ffi_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    let _ = std::fs::remove_file(&exe);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("c smoke ok"));
}
