use super::CodecError;

/// Size of one angle unit in degrees (360 / 256).
pub const ANGLE_UNIT_DEGREES: f64 = 1.40625;

/// Quantize an angle in `[0, 360)` degrees to the one-byte angle field.
pub fn quantize_angle(degrees: f64) -> Result<u8, CodecError> {
    if !(0.0..360.0).contains(&degrees) {
        return Err(CodecError::AngleOutOfRange(degrees));
    }
    let units = (degrees / ANGLE_UNIT_DEGREES).round() as u32;
    Ok((units % 256) as u8)
}

pub fn dequantize_angle(units: u8) -> f64 {
    f64::from(units) * ANGLE_UNIT_DEGREES
}
