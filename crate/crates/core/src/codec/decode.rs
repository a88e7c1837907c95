use super::encode::{SINGULAR_ANGLE_FLAG, SINGULAR_ENTRY_LEN};
use super::{
    CodecError, FingerView, Minutia, MinutiaKind, MinutiaeRecord, SingularKind, SingularPoint, CORE_DELTA_BLOCK,
    HEADER_LEN, MAGIC, MAX_COORDINATE, VERSION,
};

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(CodecError::Truncated { offset: self.pos, needed: n - left });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }
}

/// Parse a record. Every failure carries the byte offset it was detected at.
pub fn decode_record(bytes: &[u8]) -> Result<MinutiaeRecord, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated { offset: bytes.len(), needed: HEADER_LEN - bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CodecError::BadMagic { found: magic });
    }
    let version: [u8; 4] = bytes[4..8].try_into().unwrap();
    if version != VERSION {
        return Err(CodecError::VersionMismatch { found: version });
    }
    let declared = u32::from_be_bytes(bytes[8..12].try_into().unwrap());
    if declared as usize != bytes.len() {
        return Err(CodecError::LengthMismatch { declared, actual: bytes.len() });
    }

    let mut r = Reader { bytes, pos: 12 };
    let capture_equipment = r.u16()?;
    let image_width = r.u16()?;
    let image_height = r.u16()?;
    let resolution_x = r.u16()?;
    let resolution_y = r.u16()?;
    let view_count = r.u8()?;
    let _reserved = r.u8()?;

    let mut views = Vec::with_capacity(usize::from(view_count));
    for _ in 0..view_count {
        views.push(decode_view(&mut r)?);
    }
    if r.pos != bytes.len() {
        return Err(CodecError::TrailingBytes { offset: r.pos, count: bytes.len() - r.pos });
    }
    Ok(MinutiaeRecord { capture_equipment, image_width, image_height, resolution_x, resolution_y, views })
}

fn decode_view(r: &mut Reader<'_>) -> Result<FingerView, CodecError> {
    let finger_position = r.u8()?;
    let packed = r.u8()?;
    let finger_quality = r.u8()?;
    let count = r.u8()?;
    let mut minutiae = Vec::with_capacity(usize::from(count));
    for _ in 0..count {
        let at = r.pos;
        let xw = r.u16()?;
        let yw = r.u16()?;
        let angle_units = r.u8()?;
        let quality = r.u8()?;
        let kind = MinutiaKind::from_code(xw >> 14).ok_or(CodecError::BadMinutiaType { offset: at })?;
        minutiae.push(Minutia { kind, x: xw & MAX_COORDINATE, y: yw & MAX_COORDINATE, angle_units, quality });
    }

    let ext_len = usize::from(r.u16()?);
    let ext_start = r.pos;
    let ext = r.take(ext_len)?;
    let (singular_points, extended_bytes) = split_extended(ext, ext_start)?;

    Ok(FingerView {
        finger_position,
        view_number: packed >> 4,
        impression_type: packed & 0x0F,
        finger_quality,
        minutiae,
        singular_points,
        extended_bytes,
    })
}

/// Pull the core/delta block out of the extended area; everything else is
/// returned verbatim, in order.
fn split_extended(ext: &[u8], base: usize) -> Result<(Vec<SingularPoint>, Vec<u8>), CodecError> {
    let mut singular = None;
    let mut opaque = Vec::new();
    let mut pos = 0;
    while pos < ext.len() {
        let bad = |reason: String| CodecError::BadExtendedData { offset: base + pos, reason };
        if ext.len() - pos < 4 {
            return Err(bad("block header is truncated".into()));
        }
        let ty = u16::from_be_bytes([ext[pos], ext[pos + 1]]);
        let len = usize::from(u16::from_be_bytes([ext[pos + 2], ext[pos + 3]]));
        if len < 4 || pos + len > ext.len() {
            return Err(bad(format!("block length {len} does not fit the extended area")));
        }
        let block = &ext[pos..pos + len];
        if ty == CORE_DELTA_BLOCK {
            if singular.is_some() {
                return Err(bad("second core/delta block".into()));
            }
            singular = Some(parse_core_delta(&block[4..]).map_err(bad)?);
        } else {
            opaque.extend_from_slice(block);
        }
        pos += len;
    }
    Ok((singular.unwrap_or_default(), opaque))
}

fn parse_core_delta(payload: &[u8]) -> Result<Vec<SingularPoint>, String> {
    let mut out = Vec::new();
    let mut pos = 0;
    for kind in [SingularKind::Core, SingularKind::Delta] {
        let count = *payload.get(pos).ok_or("missing point count")? as usize;
        pos += 1;
        for _ in 0..count {
            let e = payload.get(pos..pos + SINGULAR_ENTRY_LEN).ok_or("point entry is truncated")?;
            let xw = u16::from_be_bytes([e[0], e[1]]);
            let yw = u16::from_be_bytes([e[2], e[3]]);
            let angle_units = match xw >> 14 {
                0 => None,
                SINGULAR_ANGLE_FLAG => Some(e[4]),
                f => return Err(format!("unknown angle flag {f:#04b}")),
            };
            out.push(SingularPoint { kind, x: xw & MAX_COORDINATE, y: yw & MAX_COORDINATE, angle_units });
            pos += SINGULAR_ENTRY_LEN;
        }
    }
    if pos != payload.len() {
        return Err(format!("{} unused byte(s) in core/delta block", payload.len() - pos));
    }
    Ok(out)
}
