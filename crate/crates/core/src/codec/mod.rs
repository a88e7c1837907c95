//! Finger minutiae records in the ISO/IEC 19794-2:2005 binary layout.
//!
//! All multi-byte fields are big-endian. A record is a 24-byte header
//! followed by one or more finger views; each view carries its minutiae
//! (6 bytes apiece) and an extended-data area. Core and delta points are
//! carried in an extended-data block of type `0x0002`; any other block is
//! kept as opaque bytes and written back unchanged.

mod angle;
mod decode;
mod encode;
mod text;
mod validate;

use serde::{Deserialize, Serialize};

pub use angle::{dequantize_angle, quantize_angle, ANGLE_UNIT_DEGREES};
pub use decode::decode_record;
pub use encode::{encode_record, encoded_len};
pub use text::{parse_text, to_text};
pub use validate::{validate_for_image, validate_record, Violation, ViolationKind};

/// `"FMR\0"`
pub const MAGIC: [u8; 4] = *b"FMR\0";
/// `" 20\0"`
pub const VERSION: [u8; 4] = *b" 20\0";
pub const HEADER_LEN: usize = 24;
pub const VIEW_HEADER_LEN: usize = 4;
pub const MINUTIA_LEN: usize = 6;
pub const EXTENDED_LENGTH_FIELD_LEN: usize = 2;
/// Extended-data block type holding core and delta points.
pub const CORE_DELTA_BLOCK: u16 = 0x0002;
/// Largest coordinate representable in the 14-bit position fields.
pub const MAX_COORDINATE: u16 = 0x3FFF;

/// Pixels per centimeter for a resolution given in dots per inch, as stored
/// in the record header (500 DPI -> 197, 512 DPI -> 202).
pub fn dpi_to_px_per_cm(dpi: u32) -> u16 {
    (f64::from(dpi) / 2.54).round() as u16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinutiaKind {
    Other,
    Ending,
    Bifurcation,
}

impl MinutiaKind {
    /// The 2-bit type code stored above the x coordinate.
    pub fn code(self) -> u16 {
        match self {
            MinutiaKind::Other => 0b00,
            MinutiaKind::Ending => 0b01,
            MinutiaKind::Bifurcation => 0b10,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            0b00 => Some(MinutiaKind::Other),
            0b01 => Some(MinutiaKind::Ending),
            0b10 => Some(MinutiaKind::Bifurcation),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MinutiaKind::Other => "other",
            MinutiaKind::Ending => "ending",
            MinutiaKind::Bifurcation => "bifurcation",
        }
    }
}

impl std::str::FromStr for MinutiaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "other" => Ok(MinutiaKind::Other),
            "ending" => Ok(MinutiaKind::Ending),
            "bifurcation" => Ok(MinutiaKind::Bifurcation),
            _ => Err(format!("unknown minutia kind `{s}`")),
        }
    }
}

/// A single marked ridge feature.
///
/// `angle_units` counts 1.40625 degree steps, counterclockwise from the
/// positive x axis; `x` is the pixel column and `y` the pixel row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Minutia {
    pub kind: MinutiaKind,
    pub x: u16,
    pub y: u16,
    pub angle_units: u8,
    pub quality: u8,
}

impl Minutia {
    pub fn angle_degrees(&self) -> f64 {
        dequantize_angle(self.angle_units)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularKind {
    Core,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SingularPoint {
    pub kind: SingularKind,
    pub x: u16,
    pub y: u16,
    pub angle_units: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerView {
    /// 0 = unknown, 1..=10 per the finger position table.
    pub finger_position: u8,
    pub view_number: u8,
    /// 0 = live-scan plain.
    pub impression_type: u8,
    pub finger_quality: u8,
    pub minutiae: Vec<Minutia>,
    /// Cores must precede deltas; they are serialized in that order.
    pub singular_points: Vec<SingularPoint>,
    /// Extended-data blocks other than core/delta, kept verbatim.
    pub extended_bytes: Vec<u8>,
}

impl FingerView {
    pub fn new(finger_position: u8, minutiae: Vec<Minutia>) -> Self {
        Self {
            finger_position,
            view_number: 0,
            impression_type: 0,
            finger_quality: 0,
            minutiae,
            singular_points: Vec::new(),
            extended_bytes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinutiaeRecord {
    pub capture_equipment: u16,
    pub image_width: u16,
    pub image_height: u16,
    /// Pixels per centimeter.
    pub resolution_x: u16,
    pub resolution_y: u16,
    pub views: Vec<FingerView>,
}

impl MinutiaeRecord {
    /// An empty record for an image of the given size and resolution (DPI).
    pub fn new(image_width: u16, image_height: u16, dpi: u32) -> Self {
        let res = dpi_to_px_per_cm(dpi);
        Self {
            capture_equipment: 0,
            image_width,
            image_height,
            resolution_x: res,
            resolution_y: res,
            views: Vec::new(),
        }
    }

    pub fn with_view(mut self, view: FingerView) -> Self {
        self.views.push(view);
        self
    }

    /// Minutiae of the first view, or an empty slice.
    pub fn first_minutiae(&self) -> &[Minutia] {
        self.views.first().map(|v| v.minutiae.as_slice()).unwrap_or(&[])
    }

    pub fn minutiae_count(&self) -> usize {
        self.views.iter().map(|v| v.minutiae.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("angle {0} is outside [0, 360)")]
    AngleOutOfRange(f64),
    #[error("record is invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("truncated input at byte {offset}: need {needed} more byte(s)")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic at byte 0: expected \"FMR\\0\", found {found:02x?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version at byte 4: found {found:02x?}")]
    VersionMismatch { found: [u8; 4] },
    #[error("record length field at byte 8 says {declared} but input has {actual} byte(s)")]
    LengthMismatch { declared: u32, actual: usize },
    #[error("invalid minutia type code 0b11 at byte {offset}")]
    BadMinutiaType { offset: usize },
    #[error("malformed extended data at byte {offset}: {reason}")]
    BadExtendedData { offset: usize, reason: String },
    #[error("{count} unread byte(s) after the last view at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("line {line}: {reason}")]
    Text { line: usize, reason: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn minutia(x: u16, y: u16, angle_units: u8) -> Minutia {
        Minutia { kind: MinutiaKind::Ending, x, y, angle_units, quality: 60 }
    }

    pub fn single_view(minutiae: Vec<Minutia>) -> MinutiaeRecord {
        MinutiaeRecord::new(388, 374, 500).with_view(FingerView::new(1, minutiae))
    }
}
