use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{MinutiaeRecord, SingularKind, CORE_DELTA_BLOCK, MAX_COORDINATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    CoordinateOverflow,
    CoordinateOutOfBounds,
    QualityRange,
    FingerQualityRange,
    FingerPositionRange,
    ViewNumberRange,
    ImpressionTypeRange,
    DuplicateViewNumber,
    TooManyMinutiae,
    TooManyViews,
    TooManySingularPoints,
    SingularPointOrder,
    ExtendedData,
    ImageSizeMismatch,
    /// Raised when converting degree input into angle units.
    AngleRange,
    /// strict mode only
    ZeroQuality,
    /// strict mode only
    UnknownFingerPosition,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::CoordinateOverflow => "coordinate-overflow",
            ViolationKind::CoordinateOutOfBounds => "coordinate-out-of-bounds",
            ViolationKind::QualityRange => "quality-range",
            ViolationKind::FingerQualityRange => "finger-quality-range",
            ViolationKind::FingerPositionRange => "finger-position-range",
            ViolationKind::ViewNumberRange => "view-number-range",
            ViolationKind::ImpressionTypeRange => "impression-type-range",
            ViolationKind::DuplicateViewNumber => "duplicate-view-number",
            ViolationKind::TooManyMinutiae => "too-many-minutiae",
            ViolationKind::TooManyViews => "too-many-views",
            ViolationKind::TooManySingularPoints => "too-many-singular-points",
            ViolationKind::SingularPointOrder => "singular-point-order",
            ViolationKind::ExtendedData => "extended-data",
            ViolationKind::ImageSizeMismatch => "image-size-mismatch",
            ViolationKind::AngleRange => "angle-range",
            ViolationKind::ZeroQuality => "zero-quality",
            ViolationKind::UnknownFingerPosition => "unknown-finger-position",
        }
    }
}

/// One broken invariant, located by a field path such as
/// `views[0].minutiae[3].x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.kind.as_str(), self.path, self.message)
    }
}

/// Check every record invariant. `strict` additionally requires nonzero
/// minutia quality and a known finger position.
pub fn validate_record(record: &MinutiaeRecord, strict: bool) -> Vec<Violation> {
    check(record, strict, record.image_width, record.image_height)
}

/// Like [`validate_record`], but also requires the record to describe an
/// image of `width`×`height` pixels and bounds all points by it.
pub fn validate_for_image(record: &MinutiaeRecord, width: u16, height: u16, strict: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.image_width != width || record.image_height != height {
        out.push(Violation {
            kind: ViolationKind::ImageSizeMismatch,
            path: "header".into(),
            message: format!(
                "record is {}x{} but the image is {width}x{height}",
                record.image_width, record.image_height
            ),
        });
    }
    let w = width.min(record.image_width);
    let h = height.min(record.image_height);
    out.extend(check(record, strict, w, h));
    out
}

fn check(record: &MinutiaeRecord, strict: bool, width: u16, height: u16) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, path: String, message: String| out.push(Violation { kind, path, message });

    if record.views.len() > 255 {
        push(ViolationKind::TooManyViews, "views".into(), format!("{} views, at most 255", record.views.len()));
    }

    let mut view_numbers = HashSet::new();
    for (vi, view) in record.views.iter().enumerate() {
        let vp = format!("views[{vi}]");
        if view.finger_position > 10 {
            push(
                ViolationKind::FingerPositionRange,
                format!("{vp}.finger_position"),
                format!("{} is not in 0..=10", view.finger_position),
            );
        } else if strict && view.finger_position == 0 {
            push(
                ViolationKind::UnknownFingerPosition,
                format!("{vp}.finger_position"),
                "finger position is unknown".into(),
            );
        }
        if view.view_number > 15 {
            push(
                ViolationKind::ViewNumberRange,
                format!("{vp}.view_number"),
                format!("{} is not in 0..=15", view.view_number),
            );
        }
        if !view_numbers.insert(view.view_number) {
            push(
                ViolationKind::DuplicateViewNumber,
                format!("{vp}.view_number"),
                format!("view number {} is used twice", view.view_number),
            );
        }
        if view.impression_type > 15 {
            push(
                ViolationKind::ImpressionTypeRange,
                format!("{vp}.impression_type"),
                format!("{} does not fit in 4 bits", view.impression_type),
            );
        }
        if view.finger_quality > 100 {
            push(
                ViolationKind::FingerQualityRange,
                format!("{vp}.finger_quality"),
                format!("{} is not in 0..=100", view.finger_quality),
            );
        }
        if view.minutiae.len() > 255 {
            push(
                ViolationKind::TooManyMinutiae,
                format!("{vp}.minutiae"),
                format!("{} minutiae, at most 255", view.minutiae.len()),
            );
        }

        for (mi, m) in view.minutiae.iter().enumerate() {
            let mp = format!("{vp}.minutiae[{mi}]");
            check_point(&mut push, &mp, m.x, m.y, width, height);
            if m.quality > 100 {
                push(ViolationKind::QualityRange, format!("{mp}.quality"), format!("{} is not in 0..=100", m.quality));
            } else if strict && m.quality == 0 {
                push(ViolationKind::ZeroQuality, format!("{mp}.quality"), "quality is 0".into());
            }
        }

        let mut seen_delta = false;
        let (mut cores, mut deltas) = (0usize, 0usize);
        for (si, sp) in view.singular_points.iter().enumerate() {
            let sp_path = format!("{vp}.singular_points[{si}]");
            check_point(&mut push, &sp_path, sp.x, sp.y, width, height);
            match sp.kind {
                SingularKind::Core => {
                    cores += 1;
                    if seen_delta {
                        push(ViolationKind::SingularPointOrder, sp_path, "cores must be listed before deltas".into());
                    }
                }
                SingularKind::Delta => {
                    deltas += 1;
                    seen_delta = true;
                }
            }
        }
        if cores > 255 || deltas > 255 {
            push(
                ViolationKind::TooManySingularPoints,
                format!("{vp}.singular_points"),
                format!("{cores} cores and {deltas} deltas, at most 255 of each"),
            );
        }

        if let Err(msg) = check_extended(&view.extended_bytes) {
            push(ViolationKind::ExtendedData, format!("{vp}.extended_bytes"), msg);
        }
        let ext_len = super::encode::extended_len(view);
        if ext_len > usize::from(u16::MAX) {
            push(
                ViolationKind::ExtendedData,
                format!("{vp}.extended_bytes"),
                format!("extended data is {ext_len} bytes, at most 65535"),
            );
        }
    }
    out
}

fn check_point(
    push: &mut impl FnMut(ViolationKind, String, String),
    path: &str,
    x: u16,
    y: u16,
    width: u16,
    height: u16,
) {
    for (name, v, bound) in [("x", x, width), ("y", y, height)] {
        if v > MAX_COORDINATE {
            push(ViolationKind::CoordinateOverflow, format!("{path}.{name}"), format!("{v} does not fit in 14 bits"));
        } else if v >= bound {
            push(
                ViolationKind::CoordinateOutOfBounds,
                format!("{path}.{name}"),
                format!("{v} is outside the image ({name} < {bound})"),
            );
        }
    }
}

/// Opaque extended data must be a sequence of well-formed blocks, none of
/// which is a core/delta block (those live in `singular_points`).
pub(crate) fn check_extended(bytes: &[u8]) -> Result<(), String> {
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(format!("block header at byte {pos} is truncated"));
        }
        let ty = u16::from_be_bytes([bytes[pos], bytes[pos + 1]]);
        let len = usize::from(u16::from_be_bytes([bytes[pos + 2], bytes[pos + 3]]));
        if ty == CORE_DELTA_BLOCK {
            return Err(format!("block at byte {pos} has the core/delta type"));
        }
        if len < 4 || pos + len > bytes.len() {
            return Err(format!("block at byte {pos} declares bad length {len}"));
        }
        pos += len;
    }
    Ok(())
}
