//! C ABI over the ridgemark record codec, reference matcher and interval
//! helpers.
//!
//! Records are opaque `RmRecord` handles created by `rm_record_decode` or
//! `rm_record_new` and released with `rm_record_free`. Every fallible call
//! returns an `RmStatus`; on failure `rm_last_error_message` describes the
//! most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ridgemark::codec::{self, CodecError, FingerView, Minutia, MinutiaKind, MinutiaeRecord};
use ridgemark::eval;
use ridgemark::matcher::{self, MatcherParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DecodeError = 3,
    InvalidRecord = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
    MatchError = 7,
    Panic = 99,
}

/// Opaque record handle.
pub struct RmRecord {
    inner: MinutiaeRecord,
}

/// `kind`: 0 other, 1 ridge ending, 2 bifurcation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmMinutia {
    pub kind: u8,
    pub x: u16,
    pub y: u16,
    pub angle_units: u8,
    pub quality: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmRecordInfo {
    pub image_width: u16,
    pub image_height: u16,
    pub resolution_x: u16,
    pub resolution_y: u16,
    pub view_count: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmMatcherParams {
    pub distance_tolerance: f64,
    pub angle_tolerance: f64,
    pub min_overlap: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmMatchResult {
    pub score: f64,
    pub paired_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: RmStatus, msg: impl Into<String>) -> RmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> RmStatus) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RmStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse `len` bytes into a new record stored in `*out`.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_record_decode(bytes: *const u8, len: usize, out: *mut *mut RmRecord) -> RmStatus {
    guard(|| {
        if bytes.is_null() || out.is_null() {
            return fail(RmStatus::NullPointer, "bytes and out must not be NULL");
        }
        let slice = std::slice::from_raw_parts(bytes, len);
        match codec::decode_record(slice) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RmRecord { inner }));
                RmStatus::Ok
            }
            Err(e) => fail(RmStatus::DecodeError, e.to_string()),
        }
    })
}

/// New record with one empty view for a `width`×`height` image at `dpi`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_record_new(
    width: u16,
    height: u16,
    dpi: u32,
    finger_position: u8,
    out: *mut *mut RmRecord,
) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return fail(RmStatus::NullPointer, "out must not be NULL");
        }
        let inner = MinutiaeRecord::new(width, height, dpi).with_view(FingerView::new(finger_position, Vec::new()));
        *out = Box::into_raw(Box::new(RmRecord { inner }));
        RmStatus::Ok
    })
}

/// Release a record. NULL is ignored.
///
/// # Safety
/// `record` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rm_record_free(record: *mut RmRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

unsafe fn record_ref<'a>(record: *const RmRecord) -> Result<&'a MinutiaeRecord, RmStatus> {
    record.as_ref().map(|r| &r.inner).ok_or_else(|| fail(RmStatus::NullPointer, "record must not be NULL"))
}

/// # Safety
/// `record` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_record_info(record: *const RmRecord, out: *mut RmRecordInfo) -> RmStatus {
    guard(|| {
        let r = match record_ref(record) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(RmStatus::NullPointer, "out must not be NULL");
        }
        *out = RmRecordInfo {
            image_width: r.image_width,
            image_height: r.image_height,
            resolution_x: r.resolution_x,
            resolution_y: r.resolution_y,
            view_count: r.views.len(),
        };
        RmStatus::Ok
    })
}

/// # Safety
/// `record` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_record_minutiae_count(record: *const RmRecord, view: usize, out: *mut usize) -> RmStatus {
    guard(|| {
        let r = match record_ref(record) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(RmStatus::NullPointer, "out must not be NULL");
        }
        match r.views.get(view) {
            Some(v) => {
                *out = v.minutiae.len();
                RmStatus::Ok
            }
            None => fail(RmStatus::OutOfRange, format!("view {view} of {}", r.views.len())),
        }
    })
}

/// # Safety
/// `record` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_record_minutia(
    record: *const RmRecord,
    view: usize,
    index: usize,
    out: *mut RmMinutia,
) -> RmStatus {
    guard(|| {
        let r = match record_ref(record) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(RmStatus::NullPointer, "out must not be NULL");
        }
        match r.views.get(view).and_then(|v| v.minutiae.get(index)) {
            Some(m) => {
                *out = RmMinutia {
                    kind: m.kind.code() as u8,
                    x: m.x,
                    y: m.y,
                    angle_units: m.angle_units,
                    quality: m.quality,
                };
                RmStatus::Ok
            }
            None => fail(RmStatus::OutOfRange, format!("no minutia {index} in view {view}")),
        }
    })
}

/// Append a minutia to a view. Bounds are checked when the record is encoded
/// or validated.
///
/// # Safety
/// `record` must be a live handle; `minutia` must be readable.
#[no_mangle]
pub unsafe extern "C" fn rm_record_add_minutia(
    record: *mut RmRecord,
    view: usize,
    minutia: *const RmMinutia,
) -> RmStatus {
    guard(|| {
        let (Some(r), Some(m)) = (record.as_mut(), minutia.as_ref()) else {
            return fail(RmStatus::NullPointer, "record and minutia must not be NULL");
        };
        let Some(kind) = MinutiaKind::from_code(u16::from(m.kind)) else {
            return fail(RmStatus::InvalidArgument, format!("minutia kind {} is not 0, 1 or 2", m.kind));
        };
        let views = r.inner.views.len();
        match r.inner.views.get_mut(view) {
            Some(v) => {
                v.minutiae.push(Minutia { kind, x: m.x, y: m.y, angle_units: m.angle_units, quality: m.quality });
                RmStatus::Ok
            }
            None => fail(RmStatus::OutOfRange, format!("view {view} of {views}")),
        }
    })
}

/// Number of invariant violations in `*out`; the first is described by
/// `rm_last_error_message` when nonzero.
///
/// # Safety
/// `record` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_record_validate(record: *const RmRecord, strict: bool, out: *mut usize) -> RmStatus {
    guard(|| {
        let r = match record_ref(record) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(RmStatus::NullPointer, "out must not be NULL");
        }
        let v = codec::validate_record(r, strict);
        if let Some(first) = v.first() {
            set_error(first.to_string());
        }
        *out = v.len();
        RmStatus::Ok
    })
}

/// Serialize into `buf` of `capacity` bytes. `*written` receives the record
/// length; with `BufferTooSmall` it is the capacity needed. `buf` may be
/// NULL to query the length.
///
/// # Safety
/// `record` must be a live handle; `buf` must hold `capacity` writable
/// bytes when not NULL; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_record_encode(
    record: *const RmRecord,
    buf: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> RmStatus {
    guard(|| {
        let r = match record_ref(record) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if written.is_null() {
            return fail(RmStatus::NullPointer, "written must not be NULL");
        }
        let bytes = match codec::encode_record(r) {
            Ok(b) => b,
            Err(e @ CodecError::Invalid(_)) => return fail(RmStatus::InvalidRecord, e.to_string()),
            Err(e) => return fail(RmStatus::InvalidArgument, e.to_string()),
        };
        *written = bytes.len();
        if buf.is_null() || capacity < bytes.len() {
            return fail(RmStatus::BufferTooSmall, format!("need {} bytes, have {capacity}", bytes.len()));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        RmStatus::Ok
    })
}

#[no_mangle]
pub extern "C" fn rm_matcher_params_default() -> RmMatcherParams {
    let p = MatcherParams::default();
    RmMatcherParams {
        distance_tolerance: p.distance_tolerance,
        angle_tolerance: p.angle_tolerance,
        min_overlap: p.min_overlap,
    }
}

/// Score `probe` against `reference` (first views). `params` may be NULL for
/// the defaults.
///
/// # Safety
/// Both records must be live handles; `params` must be NULL or readable;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_match(
    reference: *const RmRecord,
    probe: *const RmRecord,
    params: *const RmMatcherParams,
    out: *mut RmMatchResult,
) -> RmStatus {
    guard(|| {
        let (r, p) = match (record_ref(reference), record_ref(probe)) {
            (Ok(r), Ok(p)) => (r, p),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if out.is_null() {
            return fail(RmStatus::NullPointer, "out must not be NULL");
        }
        let params = params.as_ref().map_or_else(MatcherParams::default, |q| MatcherParams {
            distance_tolerance: q.distance_tolerance,
            angle_tolerance: q.angle_tolerance,
            min_overlap: q.min_overlap,
        });
        match matcher::match_templates(r, p, &params) {
            Ok(s) => {
                *out = RmMatchResult { score: s.score, paired_count: s.paired_count };
                RmStatus::Ok
            }
            Err(e @ matcher::MatchError::InvalidParams(_)) => fail(RmStatus::InvalidArgument, e.to_string()),
            Err(e) => fail(RmStatus::MatchError, e.to_string()),
        }
    })
}

/// 95% Wald interval for a proportion `p` over `n` trials, clamped to [0, 1].
///
/// # Safety
/// `low` and `high` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_binomial_ci(p: f64, n: usize, low: *mut f64, high: *mut f64) -> RmStatus {
    guard(|| {
        if low.is_null() || high.is_null() {
            return fail(RmStatus::NullPointer, "low and high must not be NULL");
        }
        match eval::binomial_ci(p, n) {
            Ok((l, h)) => {
                *low = l;
                *high = h;
                RmStatus::Ok
            }
            Err(e) => fail(RmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Degrees in [0, 360) to 1.40625-degree units.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_quantize_angle(degrees: f64, out: *mut u8) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return fail(RmStatus::NullPointer, "out must not be NULL");
        }
        match codec::quantize_angle(degrees) {
            Ok(u) => {
                *out = u;
                RmStatus::Ok
            }
            Err(e) => fail(RmStatus::OutOfRange, e.to_string()),
        }
    })
}

#[no_mangle]
pub extern "C" fn rm_dequantize_angle(units: u8) -> f64 {
    codec::dequantize_angle(units)
}
