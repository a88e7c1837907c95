use std::ffi::CStr;
use std::ptr;

use ridgemark::codec::{self, FingerView, MinutiaeRecord};
use ridgemark_ffi::*;

fn sample_bytes() -> Vec<u8> {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
    let m = ridgemark::synth::random_template(&mut rng, 25, 388, 374);
    let rec = MinutiaeRecord::new(388, 374, 500).with_view(FingerView::new(1, m));
    codec::encode_record(&rec).unwrap()
}

fn last_error() -> String {
    let p = rm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn decode(bytes: &[u8]) -> *mut RmRecord {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { rm_record_decode(bytes.as_ptr(), bytes.len(), &mut h) }, RmStatus::Ok);
    h
}

#[test]
fn decode_encode_round_trip() {
    let bytes = sample_bytes();
    let h = decode(&bytes);
    unsafe {
        let mut info = std::mem::zeroed::<RmRecordInfo>();
        assert_eq!(rm_record_info(h, &mut info), RmStatus::Ok);
        assert_eq!((info.image_width, info.image_height, info.resolution_y, info.view_count), (388, 374, 197, 1));

        let mut n = 0;
        assert_eq!(rm_record_minutiae_count(h, 0, &mut n), RmStatus::Ok);
        assert_eq!(n, 25);

        let mut need = 0;
        assert_eq!(rm_record_encode(h, ptr::null_mut(), 0, &mut need), RmStatus::BufferTooSmall);
        assert_eq!(need, bytes.len());
        let mut out = vec![0u8; need];
        let mut written = 0;
        assert_eq!(rm_record_encode(h, out.as_mut_ptr(), out.len(), &mut written), RmStatus::Ok);
        assert_eq!(out, bytes);
        rm_record_free(h);
    }
}

#[test]
fn build_record_and_self_match() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(rm_record_new(300, 300, 500, 2, &mut h), RmStatus::Ok);
        for i in 0..8u16 {
            let m = RmMinutia {
                kind: 1 + (i % 2) as u8,
                x: 20 + i * 30,
                y: 40 + i * 25,
                angle_units: (i * 20) as u8,
                quality: 50,
            };
            assert_eq!(rm_record_add_minutia(h, 0, &m), RmStatus::Ok);
        }
        let mut got = std::mem::zeroed::<RmMinutia>();
        assert_eq!(rm_record_minutia(h, 0, 3, &mut got), RmStatus::Ok);
        assert_eq!((got.kind, got.x, got.y, got.angle_units), (2, 110, 115, 60));

        let mut r = RmMatchResult { score: -1.0, paired_count: 0 };
        assert_eq!(rm_match(h, h, ptr::null(), &mut r), RmStatus::Ok);
        assert_eq!((r.score, r.paired_count), (1.0, 8));

        let mut p = rm_matcher_params_default();
        p.min_overlap = 9;
        assert_eq!(rm_match(h, h, &p, &mut r), RmStatus::Ok);
        assert_eq!(r.score, 0.0);
        p.distance_tolerance = -1.0;
        assert_eq!(rm_match(h, h, &p, &mut r), RmStatus::InvalidArgument);
        rm_record_free(h);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(rm_record_decode(b"FMR\x01".as_ptr(), 4, &mut h), RmStatus::DecodeError);
        assert!(h.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(rm_record_decode(ptr::null(), 0, &mut h), RmStatus::NullPointer);
        assert_eq!(rm_record_info(ptr::null(), ptr::null_mut()), RmStatus::NullPointer);

        assert_eq!(rm_record_new(100, 100, 500, 0, &mut h), RmStatus::Ok);
        let bad = RmMinutia { kind: 3, x: 0, y: 0, angle_units: 0, quality: 0 };
        assert_eq!(rm_record_add_minutia(h, 0, &bad), RmStatus::InvalidArgument);
        let out = RmMinutia { kind: 1, x: 100, y: 5, angle_units: 0, quality: 0 };
        assert_eq!(rm_record_add_minutia(h, 1, &out), RmStatus::OutOfRange);
        assert_eq!(rm_record_add_minutia(h, 0, &out), RmStatus::Ok);

        let mut violations = 0;
        assert_eq!(rm_record_validate(h, false, &mut violations), RmStatus::Ok);
        assert_eq!(violations, 1);
        assert!(last_error().contains("100"), "{}", last_error());
        let mut written = 0;
        let mut buf = [0u8; 64];
        assert_eq!(rm_record_encode(h, buf.as_mut_ptr(), buf.len(), &mut written), RmStatus::InvalidRecord);

        let mut m = std::mem::zeroed::<RmMinutia>();
        assert_eq!(rm_record_minutia(h, 0, 5, &mut m), RmStatus::OutOfRange);
        rm_record_free(h);
        rm_record_free(ptr::null_mut());
    }
}

#[test]
fn interval_and_angle_helpers() {
    unsafe {
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(rm_binomial_ci(0.9, 5600, &mut lo, &mut hi), RmStatus::Ok);
        assert!((lo - 0.8921).abs() < 1e-4 && (hi - 0.9079).abs() < 1e-4, "{lo} {hi}");
        assert_eq!(rm_binomial_ci(0.5, 0, &mut lo, &mut hi), RmStatus::InvalidArgument);
        assert_eq!(rm_binomial_ci(1.5, 10, &mut lo, &mut hi), RmStatus::InvalidArgument);

        let mut u = 0;
        assert_eq!(rm_quantize_angle(90.0, &mut u), RmStatus::Ok);
        assert_eq!(u, 64);
        assert_eq!(rm_dequantize_angle(64), 90.0);
        assert_eq!(rm_quantize_angle(360.0, &mut u), RmStatus::OutOfRange);
        assert_eq!(rm_quantize_angle(f64::NAN, &mut u), RmStatus::OutOfRange);
    }
    let v = unsafe { CStr::from_ptr(rm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn last_error_is_thread_local() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { rm_record_decode(b"xx".as_ptr(), 2, &mut h) }, RmStatus::DecodeError);
    std::thread::spawn(|| assert!(rm_last_error_message().is_null())).join().unwrap();
    assert!(!rm_last_error_message().is_null());
}
