//! Exercises the C ABI from Rust: handle lifecycle, error reporting, and
//! determinism of the probe series.

use std::ffi::c_char;
use std::ptr;

use gsnr_lab_ffi::*;

fn last_error() -> String {
    let needed = unsafe { gsnr_lab_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0u8; needed + 1];
    unsafe { gsnr_lab_last_error(buf.as_mut_ptr().cast::<c_char>(), buf.len()) };
    buf.truncate(needed);
    String::from_utf8(buf).unwrap()
}

fn make_regression(n: usize, seed: u64) -> *mut GsnrLabDataset {
    let mut ds = ptr::null_mut();
    let status = unsafe { gsnr_lab_dataset_regression(n, 0.01, seed, &mut ds) };
    assert_eq!(status, GsnrLabStatus::Ok, "{}", last_error());
    assert!(!ds.is_null());
    ds
}

#[test]
fn dataset_roundtrip_and_len() {
    let ds = make_regression(123, 7);
    let mut len = 0usize;
    assert_eq!(unsafe { gsnr_lab_dataset_len(ds, &mut len) }, GsnrLabStatus::Ok);
    assert_eq!(len, 123);
    unsafe { gsnr_lab_dataset_free(ds) };
}

#[test]
fn null_out_pointer_is_rejected_with_message() {
    let status = unsafe { gsnr_lab_dataset_regression(10, 0.0, 1, ptr::null_mut()) };
    assert_eq!(status, GsnrLabStatus::NullPointer);
    assert!(last_error().contains("null"));
}

#[test]
fn invalid_dataset_arguments_are_rejected() {
    let mut ds = ptr::null_mut();
    // classification needs at least 2 classes
    let status = unsafe { gsnr_lab_dataset_classification(5, 100, 1, 0, 1, &mut ds) };
    assert_eq!(status, GsnrLabStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert!(ds.is_null());
}

#[test]
fn training_run_produces_aligned_series() {
    let train = make_regression(60, 1);
    let test = make_regression(200, 2);
    let mut run = ptr::null_mut();
    let status =
        unsafe { gsnr_lab_run_training(train, test, 8, 1.0, 20, 0.001, 5, 3, &mut run) };
    assert_eq!(status, GsnrLabStatus::Ok, "{}", last_error());

    let mut len = 0usize;
    assert_eq!(unsafe { gsnr_lab_run_len(run, &mut len) }, GsnrLabStatus::Ok);
    assert_eq!(len, 5); // epochs 0, 5, 10, 15, 20

    let mut epochs = vec![0.0; len];
    let mut train_loss = vec![0.0; len];
    for (which, buf) in
        [(GsnrLabSeries::Epochs, &mut epochs), (GsnrLabSeries::TrainLoss, &mut train_loss)]
    {
        let status = unsafe { gsnr_lab_run_series(run, which, buf.as_mut_ptr(), len) };
        assert_eq!(status, GsnrLabStatus::Ok);
    }
    assert_eq!(epochs, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
    assert!(train_loss.iter().all(|l| l.is_finite()));
    assert!(train_loss[4] < train_loss[0], "loss should decrease: {train_loss:?}");

    // a wrong buffer length is rejected before any write
    let status =
        unsafe { gsnr_lab_run_series(run, GsnrLabSeries::TestLoss, epochs.as_mut_ptr(), len - 1) };
    assert_eq!(status, GsnrLabStatus::InvalidArgument);

    unsafe {
        gsnr_lab_run_free(run);
        gsnr_lab_dataset_free(train);
        gsnr_lab_dataset_free(test);
    }
}

#[test]
fn identical_inputs_give_identical_series() {
    let mut series = Vec::new();
    for _ in 0..2 {
        let train = make_regression(50, 11);
        let test = make_regression(100, 12);
        let mut run = ptr::null_mut();
        let status =
            unsafe { gsnr_lab_run_training(train, test, 6, 0.5, 10, 0.001, 2, 13, &mut run) };
        assert_eq!(status, GsnrLabStatus::Ok, "{}", last_error());
        let mut len = 0usize;
        unsafe { gsnr_lab_run_len(run, &mut len) };
        let mut gsnr = vec![0.0; len];
        let status =
            unsafe { gsnr_lab_run_series(run, GsnrLabSeries::AvgGsnr, gsnr.as_mut_ptr(), len) };
        assert_eq!(status, GsnrLabStatus::Ok);
        series.push(gsnr);
        unsafe {
            gsnr_lab_run_free(run);
            gsnr_lab_dataset_free(train);
            gsnr_lab_dataset_free(test);
        }
    }
    assert_eq!(series[0], series[1]);
}

#[test]
fn bad_training_arguments_are_rejected() {
    let train = make_regression(30, 1);
    let test = make_regression(30, 2);
    let mut run = ptr::null_mut();
    let status =
        unsafe { gsnr_lab_run_training(train, test, 8, -1.0, 10, 0.001, 1, 3, &mut run) };
    assert_eq!(status, GsnrLabStatus::InvalidArgument);
    assert!(last_error().contains("init_scale"));
    let status = unsafe { gsnr_lab_run_training(train, test, 0, 1.0, 10, 0.001, 1, 3, &mut run) };
    assert_eq!(status, GsnrLabStatus::InvalidArgument);
    assert!(run.is_null());
    unsafe {
        gsnr_lab_dataset_free(train);
        gsnr_lab_dataset_free(test);
    }
}

#[test]
fn generated_header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/gsnr_lab.h"
    ))
    .unwrap();
    for symbol in [
        "gsnr_lab_last_error",
        "gsnr_lab_dataset_regression",
        "gsnr_lab_dataset_classification",
        "gsnr_lab_dataset_len",
        "gsnr_lab_dataset_free",
        "gsnr_lab_run_training",
        "gsnr_lab_run_len",
        "gsnr_lab_run_series",
        "gsnr_lab_run_free",
    ] {
        assert!(header.contains(symbol), "missing {symbol}");
    }
    // enum variants carry the type prefix to keep the C namespace clean
    assert!(header.contains("GsnrLabStatus_Ok"));
    assert!(header.contains("GsnrLabSeries_AvgGsnr"));
    // the handles stay opaque
    assert!(header.contains("typedef struct GsnrLabDataset GsnrLabDataset;"));
    assert!(header.contains("typedef struct GsnrLabRun GsnrLabRun;"));
}
