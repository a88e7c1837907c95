//! The golden `.iso-fmr` fixture: its record and its hand-tabulated bytes.

use ridgemark::codec::{FingerView, Minutia, MinutiaKind, MinutiaeRecord, SingularKind, SingularPoint};

pub const GOLDEN_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden.iso-fmr");

/// The record stored in the golden fixture.
pub fn golden_record() -> MinutiaeRecord {
    let m = |kind, x, y, angle_units, quality| Minutia { kind, x, y, angle_units, quality };
    MinutiaeRecord {
        capture_equipment: 0,
        image_width: 388,
        image_height: 374,
        resolution_x: 197,
        resolution_y: 197,
        views: vec![FingerView {
            finger_position: 3,
            view_number: 0,
            impression_type: 0,
            finger_quality: 80,
            minutiae: vec![
                m(MinutiaKind::Ending, 100, 200, 64, 60),
                m(MinutiaKind::Bifurcation, 250, 37, 255, 90),
                m(MinutiaKind::Other, 0, 373, 0, 1),
            ],
            singular_points: vec![
                SingularPoint { kind: SingularKind::Core, x: 194, y: 187, angle_units: Some(32) },
                SingularPoint { kind: SingularKind::Delta, x: 120, y: 300, angle_units: None },
            ],
            extended_bytes: vec![0x00, 0x01, 0x00, 0x06, 0xAB, 0xCD],
        }],
    }
}

/// Hand-tabulated bytes of the golden record, field by field.
#[rustfmt::skip]
pub const GOLDEN_TABLE: &[(&str, &[u8])] = &[
    ("magic \"FMR\\0\"",              &[0x46, 0x4D, 0x52, 0x00]),
    ("version \" 20\\0\"",            &[0x20, 0x32, 0x30, 0x00]),
    ("record length 70",              &[0x00, 0x00, 0x00, 0x46]),
    ("capture equipment 0",           &[0x00, 0x00]),
    ("image width 388",               &[0x01, 0x84]),
    ("image height 374",              &[0x01, 0x76]),
    ("resolution x 197 px/cm",        &[0x00, 0xC5]),
    ("resolution y 197 px/cm",        &[0x00, 0xC5]),
    ("view count 1",                  &[0x01]),
    ("reserved",                      &[0x00]),
    ("finger position 3",             &[0x03]),
    ("view 0, impression 0",          &[0x00]),
    ("finger quality 80",             &[0x50]),
    ("minutiae count 3",              &[0x03]),
    ("m0 ending | x 100",             &[0x40, 0x64]),
    ("m0 y 200",                      &[0x00, 0xC8]),
    ("m0 angle 64, quality 60",       &[0x40, 0x3C]),
    ("m1 bifurcation | x 250",        &[0x80, 0xFA]),
    ("m1 y 37",                       &[0x00, 0x25]),
    ("m1 angle 255, quality 90",      &[0xFF, 0x5A]),
    ("m2 other | x 0",                &[0x00, 0x00]),
    ("m2 y 373",                      &[0x01, 0x75]),
    ("m2 angle 0, quality 1",         &[0x00, 0x01]),
    ("extended length 22",            &[0x00, 0x16]),
    ("core/delta block type 0x0002",  &[0x00, 0x02]),
    ("block length 16",               &[0x00, 0x10]),
    ("core count 1",                  &[0x01]),
    ("core angle flag | x 194",       &[0x40, 0xC2]),
    ("core y 187",                    &[0x00, 0xBB]),
    ("core angle 32",                 &[0x20]),
    ("delta count 1",                 &[0x01]),
    ("delta no angle | x 120",        &[0x00, 0x78]),
    ("delta y 300",                   &[0x01, 0x2C]),
    ("delta angle placeholder",       &[0x00]),
    ("opaque block type 0x0001",      &[0x00, 0x01]),
    ("opaque block length 6",         &[0x00, 0x06]),
    ("opaque payload",                &[0xAB, 0xCD]),
];

pub fn golden_bytes() -> Vec<u8> {
    std::fs::read(GOLDEN_PATH).expect("golden fixture")
}

/// Walk the table over `bytes`; the first mismatching field is the error.
pub fn check_against_table(bytes: &[u8]) -> Result<(), String> {
    let mut offset = 0;
    for (field, expected) in GOLDEN_TABLE {
        let got =
            bytes.get(offset..offset + expected.len()).ok_or_else(|| format!("{field}: file ends at {offset}"))?;
        if got != *expected {
            return Err(format!("{field} at offset {offset}: {got:02X?} != {expected:02X?}"));
        }
        offset += expected.len();
    }
    if offset != bytes.len() {
        return Err(format!("{} trailing bytes after the table", bytes.len() - offset));
    }
    Ok(())
}
