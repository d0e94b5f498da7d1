use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use clap::Parser;
use reprstruct::cli::{run, Cli};
use reprstruct::synth::{gen_monotone, SynthConfig, SynthMode};
use reprstruct_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rs_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn monotone_fixture(dir: &Path) -> reprstruct::synth::SynthSystem {
    let cfg = SynthConfig {
        mode: SynthMode::Monotone,
        labels: 10,
        dims: 8,
        samples: 500,
        noise_sigma: 0.0,
        seed: 3,
        ..Default::default()
    };
    let sys = gen_monotone(&cfg).unwrap();
    sys.write(dir).unwrap();
    sys
}

unsafe fn analyze_via_ffi(
    values: &[f32],
    rows: usize,
    dims: usize,
    ids: &[u32],
) -> Result<*mut RsReport, (RsStatus, String)> {
    let mut batch = ptr::null_mut();
    assert_eq!(rs_batch_new(values.as_ptr(), rows, dims, &mut batch), RsStatus::Ok);
    let mut labels = ptr::null_mut();
    let name = c("token");
    assert_eq!(
        rs_labels_new(name.as_ptr(), ids.as_ptr(), ids.len(), &mut labels),
        RsStatus::Ok
    );
    let sets = [labels as *const RsLabelSet];
    let opts = rs_analyze_options_default();
    let mut report = ptr::null_mut();
    let status = rs_analyze(batch, sets.as_ptr(), 1, 100, &opts, &mut report);
    rs_labels_free(labels);
    rs_batch_free(batch);
    if status == RsStatus::Ok {
        Ok(report)
    } else {
        Err((status, last_error()))
    }
}

#[test]
fn report_matches_cli_json_field_for_field() {
    let dir = tempfile::tempdir().unwrap();
    let sys = monotone_fixture(dir.path());
    let out = dir.path().join("report.json");
    let cli = Cli::parse_from([
        "reprstruct".as_ref(),
        "analyze".as_ref(),
        "--reps".as_ref(),
        dir.path().join("reps.hrep").as_os_str(),
        "--tokens".as_ref(),
        dir.path().join("tokens.jsonl").as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    run(cli).unwrap();
    let mut cli_json: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    cli_json.as_object_mut().unwrap().remove("meta");

    let ids = sys.token.row_labels();
    let b = &sys.batch;
    unsafe {
        let report = analyze_via_ffi(b.values(), b.rows(), b.dims(), ids).unwrap();
        let mut json = ptr::null_mut();
        assert_eq!(rs_report_to_json(report, &mut json), RsStatus::Ok);
        let ffi_json: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        rs_string_free(json);
        assert_eq!(ffi_json, cli_json);

        let set = c("token");
        let mut v = f64::NAN;
        assert_eq!(
            rs_report_measure(report, set.as_ptr(), RsMeasure::Disentanglement, &mut v),
            RsStatus::Ok
        );
        assert_eq!(v, 1.0);
        assert_eq!(
            rs_report_measure(report, set.as_ptr(), RsMeasure::Variation, &mut v),
            RsStatus::Ok
        );
        assert_eq!(v, cli_json["sets"][0]["measures"]["variation"].as_f64().unwrap());
        assert_eq!(rs_report_information(report), cli_json["information"].as_f64().unwrap());
        assert_eq!(rs_report_set_count(report), 1);
        rs_report_free(report);
    }
}

#[test]
fn alignment_error_message_matches_cli() {
    let dir = tempfile::tempdir().unwrap();
    let sys = monotone_fixture(dir.path());
    let records = &sys.records[..sys.records.len() - 1];
    reprstruct::write_tokens(records, dir.path().join("short.jsonl")).unwrap();
    let cli = Cli::parse_from([
        "reprstruct".as_ref(),
        "analyze".as_ref(),
        "--reps".as_ref(),
        dir.path().join("reps.hrep").as_os_str(),
        "--tokens".as_ref(),
        dir.path().join("short.jsonl").as_os_str(),
    ]);
    let cli_err = run(cli).unwrap_err();
    assert_eq!(cli_err.code, 2);

    let ids = &sys.token.row_labels()[..sys.batch.rows() - 1];
    let b = &sys.batch;
    let (status, msg) = unsafe { analyze_via_ffi(b.values(), b.rows(), b.dims(), ids) }.unwrap_err();
    assert_eq!(status, RsStatus::Data);
    assert_eq!(msg, cli_err.message);
    assert_eq!(msg, "alignment error: tokens=499 rows=500");
}

#[test]
fn hrep_written_through_ffi_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("x.hrep").to_str().unwrap());
    let values = [1.5f32, -0.0, 3.25, f32::MIN_POSITIVE, 7.0, 8.0];
    unsafe {
        let mut batch = ptr::null_mut();
        assert_eq!(rs_batch_new(values.as_ptr(), 3, 2, &mut batch), RsStatus::Ok);
        assert_eq!(rs_batch_write_hrep(batch, path.as_ptr()), RsStatus::Ok);
        rs_batch_free(batch);
        let mut back = ptr::null_mut();
        assert_eq!(rs_batch_read(path.as_ptr(), &mut back), RsStatus::Ok);
        assert_eq!((rs_batch_rows(back), rs_batch_dims(back)), (3, 2));
        rs_batch_free(back);
    }
    let read = reprstruct::read_reps(dir.path().join("x.hrep")).unwrap();
    let bits: Vec<u32> = read.values().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits, values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn missing_file_is_io_and_bad_bins_is_parameter() {
    let path = c("/nonexistent/dir/x.hrep");
    let mut batch = ptr::null_mut();
    assert_eq!(unsafe { rs_batch_read(path.as_ptr(), &mut batch) }, RsStatus::Io);
    assert!(batch.is_null());

    let values = [0.0f32, 1.0];
    let ids = [0u32, 1];
    let name = c("token");
    unsafe {
        let mut b = ptr::null_mut();
        rs_batch_new(values.as_ptr(), 2, 1, &mut b);
        let mut l = ptr::null_mut();
        rs_labels_new(name.as_ptr(), ids.as_ptr(), 2, &mut l);
        let sets = [l as *const RsLabelSet];
        let mut r = ptr::null_mut();
        assert_eq!(
            rs_analyze(b, sets.as_ptr(), 1, 1, ptr::null(), &mut r),
            RsStatus::InvalidParameter
        );
        assert!(last_error().contains("bin"));
        rs_labels_free(l);
        rs_batch_free(b);
    }
}

#[test]
fn undefined_disentanglement_is_reported() {
    let values = [0.0f32, 0.5, 1.0];
    let ids = [0u32, 0, 0];
    let name = c("token");
    let mut opts = rs_analyze_options_default();
    opts.min_count = 1;
    unsafe {
        let mut b = ptr::null_mut();
        rs_batch_new(values.as_ptr(), 3, 1, &mut b);
        let mut l = ptr::null_mut();
        rs_labels_new(name.as_ptr(), ids.as_ptr(), 3, &mut l);
        let sets = [l as *const RsLabelSet];
        let mut r = ptr::null_mut();
        assert_eq!(rs_analyze(b, sets.as_ptr(), 1, 4, &opts, &mut r), RsStatus::Ok);
        let mut v = 0.0;
        assert_eq!(
            rs_report_measure(r, name.as_ptr(), RsMeasure::Disentanglement, &mut v),
            RsStatus::Data
        );
        assert_eq!(
            rs_report_measure(r, name.as_ptr(), RsMeasure::Variation, &mut v),
            RsStatus::Ok
        );
        rs_report_free(r);
        rs_labels_free(l);
        rs_batch_free(b);
    }
}

#[test]
fn spearman_and_tokens_writer() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let ys = [2.0, 4.0, 8.0, 16.0, 32.0];
    let (mut rho, mut p) = (0.0, 1.0);
    assert_eq!(
        unsafe { rs_spearman(xs.as_ptr(), ys.as_ptr(), 5, &mut rho, &mut p) },
        RsStatus::Ok
    );
    assert_eq!((rho, p), (1.0, 0.0));
    let flat = [3.0; 5];
    assert_eq!(
        unsafe { rs_spearman(xs.as_ptr(), flat.as_ptr(), 5, &mut rho, ptr::null_mut()) },
        RsStatus::Data
    );
    assert!(last_error().contains("undefined"), "{}", last_error());

    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("t.jsonl").to_str().unwrap());
    let words: Vec<CString> = ["the", "cat", "sat", "hi"].iter().map(|w| c(w)).collect();
    let tags: Vec<CString> = ["DET", "NOUN", "VERB", "INTJ"].iter().map(|w| c(w)).collect();
    let wp: Vec<_> = words.iter().map(|w| w.as_ptr()).collect();
    let tp: Vec<_> = tags.iter().map(|w| w.as_ptr()).collect();
    let lengths = [3usize, 1];
    let s = unsafe { rs_write_tokens(path.as_ptr(), wp.as_ptr(), tp.as_ptr(), 4, lengths.as_ptr(), 2) };
    assert_eq!(s, RsStatus::Ok);
    let records = reprstruct::read_tokens(dir.path().join("t.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].tokens, ["the", "cat", "sat"]);
    assert_eq!(records[1].pos.as_deref(), Some(&["INTJ".to_string()][..]));

    let bad = [2usize, 1];
    let s = unsafe { rs_write_tokens(path.as_ptr(), wp.as_ptr(), ptr::null(), 4, bad.as_ptr(), 2) };
    assert_eq!(s, RsStatus::Data);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/reprstruct.h")).unwrap();
    for name in [
        "rs_analyze",
        "rs_batch_new",
        "rs_report_to_json",
        "rs_last_error_message",
        "RS_STATUS_OK",
        "typedef struct RsBatch",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
