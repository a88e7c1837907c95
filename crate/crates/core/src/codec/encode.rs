use super::{
    validate_record, CodecError, FingerView, MinutiaeRecord, SingularKind, SingularPoint, CORE_DELTA_BLOCK,
    EXTENDED_LENGTH_FIELD_LEN, HEADER_LEN, MAGIC, MINUTIA_LEN, VERSION, VIEW_HEADER_LEN,
};

/// Bytes per core or delta entry inside the core/delta block.
pub(crate) const SINGULAR_ENTRY_LEN: usize = 5;
/// Flag in the top two bits of a singular point's x word: angle byte is valid.
pub(crate) const SINGULAR_ANGLE_FLAG: u16 = 0b01;

fn core_delta_block_len(view: &FingerView) -> usize {
    if view.singular_points.is_empty() {
        0
    } else {
        4 + 2 + SINGULAR_ENTRY_LEN * view.singular_points.len()
    }
}

pub(crate) fn extended_len(view: &FingerView) -> usize {
    core_delta_block_len(view) + view.extended_bytes.len()
}

/// Byte length `encode_record` would produce.
pub fn encoded_len(record: &MinutiaeRecord) -> usize {
    HEADER_LEN
        + record
            .views
            .iter()
            .map(|v| VIEW_HEADER_LEN + MINUTIA_LEN * v.minutiae.len() + EXTENDED_LENGTH_FIELD_LEN + extended_len(v))
            .sum::<usize>()
}

/// Serialize a record. Fails with the full violation list if the record
/// does not pass [`validate_record`] (non-strict).
pub fn encode_record(record: &MinutiaeRecord) -> Result<Vec<u8>, CodecError> {
    let violations = validate_record(record, false);
    if !violations.is_empty() {
        return Err(CodecError::Invalid(violations));
    }
    let total = encoded_len(record);
    let length = u32::try_from(total).map_err(|_| {
        CodecError::Invalid(vec![super::Violation {
            kind: super::ViolationKind::ExtendedData,
            path: "record".into(),
            message: format!("record of {total} bytes exceeds the 32-bit length field"),
        }])
    })?;

    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION);
    out.extend_from_slice(&length.to_be_bytes());
    for v in
        [record.capture_equipment, record.image_width, record.image_height, record.resolution_x, record.resolution_y]
    {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.push(record.views.len() as u8);
    out.push(0);

    for view in &record.views {
        out.push(view.finger_position);
        out.push((view.view_number << 4) | (view.impression_type & 0x0F));
        out.push(view.finger_quality);
        out.push(view.minutiae.len() as u8);
        for m in &view.minutiae {
            out.extend_from_slice(&((m.kind.code() << 14) | m.x).to_be_bytes());
            out.extend_from_slice(&m.y.to_be_bytes());
            out.push(m.angle_units);
            out.push(m.quality);
        }
        out.extend_from_slice(&(extended_len(view) as u16).to_be_bytes());
        write_core_delta_block(view, &mut out);
        out.extend_from_slice(&view.extended_bytes);
    }
    debug_assert_eq!(out.len(), total);
    Ok(out)
}

fn write_core_delta_block(view: &FingerView, out: &mut Vec<u8>) {
    let len = core_delta_block_len(view);
    if len == 0 {
        return;
    }
    out.extend_from_slice(&CORE_DELTA_BLOCK.to_be_bytes());
    out.extend_from_slice(&(len as u16).to_be_bytes());
    for kind in [SingularKind::Core, SingularKind::Delta] {
        let points: Vec<&SingularPoint> = view.singular_points.iter().filter(|p| p.kind == kind).collect();
        out.push(points.len() as u8);
        for p in points {
            let flag = if p.angle_units.is_some() { SINGULAR_ANGLE_FLAG } else { 0 };
            out.extend_from_slice(&((flag << 14) | p.x).to_be_bytes());
            out.extend_from_slice(&p.y.to_be_bytes());
            out.push(p.angle_units.unwrap_or(0));
        }
    }
}
