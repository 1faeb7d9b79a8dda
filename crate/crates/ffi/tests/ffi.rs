use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use gmcf_ffi::*;

const SMALL: &str = "resolution = 16,16\nfamily = scalar_bump\nmap.amplitude = 0.2\n\
                     sample_every = 5\nt_max = 0.05\n";

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { gmcf_string_free(p) };
    s
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(gmcf_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn parse(text: &str) -> *mut GmcfExperiment {
    let mut exp = ptr::null_mut();
    let text = cstr(text);
    assert_eq!(
        unsafe { gmcf_experiment_parse(text.as_ptr(), &mut exp) },
        GmcfStatus::Ok
    );
    exp
}

#[test]
fn run_round_trip_matches_core() {
    let exp = parse(SMALL);
    let (k, v) = (cstr("scheme"), cstr("rk4"));
    assert_eq!(
        unsafe { gmcf_experiment_set(exp, k.as_ptr(), v.as_ptr()) },
        GmcfStatus::Ok
    );
    let resolved = take_string(unsafe { gmcf_experiment_resolved(exp) });
    assert!(resolved.contains("scheme = rk4"));

    let mut run = ptr::null_mut();
    assert_eq!(unsafe { gmcf_run(exp, &mut run) }, GmcfStatus::Ok);
    let (mut kind, mut step, mut t) = (GmcfStopKind::NonFinite, 0u64, 0.0f64);
    assert_eq!(
        unsafe { gmcf_run_status(run, &mut kind, &mut step, &mut t) },
        GmcfStatus::Ok
    );
    assert_eq!(kind, GmcfStopKind::MaxTimeReached);
    assert!(t >= 0.05 && step > 0);

    let config = gmcf::parse_config(SMALL, &["--scheme=rk4".into()]).unwrap();
    let outcome = gmcf::run(&config).unwrap();
    let n = unsafe { gmcf_run_record_count(run) };
    assert_eq!(n, outcome.records.len());
    let mut rec = GmcfRecord::default();
    assert_eq!(
        unsafe { gmcf_run_record(run, n - 1, &mut rec) },
        GmcfStatus::Ok
    );
    let last = outcome.records.last().unwrap();
    assert_eq!(
        (rec.step, rec.area, rec.min_j),
        (last.step, last.area, last.min_j)
    );
    assert_eq!(rec.has_det2, 0);

    let csv = take_string(unsafe { gmcf_run_csv(run) });
    assert_eq!(csv, gmcf::config::records_to_csv(&outcome.records));
    let summary = take_string(unsafe { gmcf_run_summary_json(run) });
    let rerun = gmcf::ExperimentConfig::from_summary_json(&summary).unwrap();
    assert_eq!(rerun, config);

    assert_eq!(
        unsafe { gmcf_run_record(run, n, &mut rec) },
        GmcfStatus::OutOfRange
    );
    assert!(last_error().contains("out of range"));
    unsafe {
        gmcf_run_free(run);
        gmcf_experiment_free(exp);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut exp = ptr::null_mut();
    let bad = cstr("family = teapot\n");
    assert_eq!(
        unsafe { gmcf_experiment_parse(bad.as_ptr(), &mut exp) },
        GmcfStatus::Config
    );
    assert!(exp.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { gmcf_experiment_parse(ptr::null(), &mut exp) },
        GmcfStatus::NullPointer
    );
    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { gmcf_experiment_parse(invalid.as_ptr().cast(), &mut exp) },
        GmcfStatus::InvalidUtf8
    );

    let exp = parse(SMALL);
    let (k, v) = (cstr("no_such_key"), cstr("1"));
    assert_eq!(
        unsafe { gmcf_experiment_set(exp, k.as_ptr(), v.as_ptr()) },
        GmcfStatus::Config
    );
    // a rejected override leaves the experiment usable
    let (k, v) = (cstr("resolution"), cstr("7,7"));
    assert_eq!(
        unsafe { gmcf_experiment_set(exp, k.as_ptr(), v.as_ptr()) },
        GmcfStatus::Numeric
    );
    let resolved = take_string(unsafe { gmcf_experiment_resolved(exp) });
    assert!(resolved.contains("resolution = 16,16"));

    let mut run = ptr::null_mut();
    assert_eq!(
        unsafe { gmcf_run(ptr::null(), &mut run) },
        GmcfStatus::NullPointer
    );
    assert_eq!(unsafe { gmcf_run_record_count(ptr::null()) }, 0);
    assert!(unsafe { gmcf_run_csv(ptr::null()) }.is_null());
    unsafe {
        gmcf_experiment_free(exp);
        gmcf_experiment_free(ptr::null_mut());
        gmcf_run_free(ptr::null_mut());
        gmcf_string_free(ptr::null_mut());
    }
}

#[test]
fn invariant_breach_is_a_stop_not_an_error() {
    let exp = parse(
        "resolution = 16,16\nfamily = product_sine\nmap.amplitudes = 1.2,1.2\n\
         map.wavevectors = 1,0,0,1\nguard = area_decreasing\n",
    );
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { gmcf_run(exp, &mut run) }, GmcfStatus::Ok);
    let mut kind = GmcfStopKind::Converged;
    let mut step = u64::MAX;
    assert_eq!(
        unsafe { gmcf_run_status(run, &mut kind, &mut step, ptr::null_mut()) },
        GmcfStatus::Ok
    );
    assert_eq!((kind, step), (GmcfStopKind::InvariantBreach, 0));
    let mut rec = GmcfRecord::default();
    assert_eq!(unsafe { gmcf_run_record(run, 0, &mut rec) }, GmcfStatus::Ok);
    assert_eq!(rec.has_det2, 1);
    assert!(rec.max_two_dilation > 1.0);
    unsafe {
        gmcf_run_free(run);
        gmcf_experiment_free(exp);
    }
}

#[test]
fn family_listing() {
    let s = take_string(gmcf_list_families());
    for name in [
        "identity",
        "linear",
        "shear_composition",
        "product_sine",
        "scalar_bump",
    ] {
        assert!(s.contains(name), "{name} missing");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gmcf.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "gmcf_experiment_parse",
        "gmcf_run_record",
        "gmcf_string_free",
        "GMCF_STATUS_OK",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ GmcfRecord r; GmcfExperiment *e = 0;\n\
             (void)r; return gmcf_experiment_parse(\"family = identity\", &e) == GMCF_STATUS_OK ? 0 : 1; }}\n"
        ),
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
}
