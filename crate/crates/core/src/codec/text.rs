//! Line-oriented text form of a record, used for diffs and fixtures.
//!
//! ```text
//! record capture_equipment=0 width=388 height=374 res_x=197 res_y=197
//! view finger_position=1 view_number=0 impression_type=0 finger_quality=50 extended=
//! core,120,140,90
//! delta,40,300,
//! ending,10,20,1.40625,60
//! bifurcation,30,44,180,80
//! ```
//!
//! Minutia lines are `kind,x,y,angle_deg,quality`. Angles are written as
//! exact multiples of 1.40625 so the form is lossless.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{
    dequantize_angle, quantize_angle, CodecError, FingerView, Minutia, MinutiaKind, MinutiaeRecord, SingularKind,
    SingularPoint,
};

pub fn to_text(record: &MinutiaeRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "record capture_equipment={} width={} height={} res_x={} res_y={}",
        record.capture_equipment, record.image_width, record.image_height, record.resolution_x, record.resolution_y
    );
    for v in &record.views {
        let hex: String = v.extended_bytes.iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(
            s,
            "view finger_position={} view_number={} impression_type={} finger_quality={} extended={hex}",
            v.finger_position, v.view_number, v.impression_type, v.finger_quality
        );
        for p in &v.singular_points {
            let kind = match p.kind {
                SingularKind::Core => "core",
                SingularKind::Delta => "delta",
            };
            let angle = p.angle_units.map(|a| dequantize_angle(a).to_string()).unwrap_or_default();
            let _ = writeln!(s, "{kind},{},{},{angle}", p.x, p.y);
        }
        for m in &v.minutiae {
            let _ = writeln!(s, "{},{},{},{},{}", m.kind.as_str(), m.x, m.y, m.angle_degrees(), m.quality);
        }
    }
    s
}

pub fn parse_text(text: &str) -> Result<MinutiaeRecord, CodecError> {
    let mut record: Option<MinutiaeRecord> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |reason: String| CodecError::Text { line, reason };
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if let Some(rest) = l.strip_prefix("record") {
            if record.is_some() {
                return Err(err("second `record` line".into()));
            }
            let kv = key_values(rest).map_err(err)?;
            let get = |k: &str| field::<u16>(&kv, k).map_err(|r| CodecError::Text { line, reason: r });
            record = Some(MinutiaeRecord {
                capture_equipment: get("capture_equipment")?,
                image_width: get("width")?,
                image_height: get("height")?,
                resolution_x: get("res_x")?,
                resolution_y: get("res_y")?,
                views: Vec::new(),
            });
            continue;
        }
        let rec = record.as_mut().ok_or_else(|| err("expected a `record` line first".into()))?;
        if let Some(rest) = l.strip_prefix("view") {
            let kv = key_values(rest).map_err(err)?;
            let get = |k: &str| field::<u8>(&kv, k).map_err(|r| CodecError::Text { line, reason: r });
            let hex = kv.get("extended").copied().unwrap_or("");
            let mut view = FingerView::new(get("finger_position")?, Vec::new());
            view.view_number = get("view_number")?;
            view.impression_type = get("impression_type")?;
            view.finger_quality = get("finger_quality")?;
            view.extended_bytes = parse_hex(hex).map_err(err)?;
            rec.views.push(view);
            continue;
        }
        let view = rec.views.last_mut().ok_or_else(|| err("expected a `view` line first".into()))?;
        let cols: Vec<&str> = l.split(',').map(str::trim).collect();
        match cols[0] {
            "core" | "delta" => {
                if cols.len() != 4 {
                    return Err(err(format!("singular point needs 4 columns, found {}", cols.len())));
                }
                let kind = if cols[0] == "core" { SingularKind::Core } else { SingularKind::Delta };
                let angle_units = if cols[3].is_empty() { None } else { Some(angle(cols[3]).map_err(err)?) };
                view.singular_points.push(SingularPoint {
                    kind,
                    x: num(cols[1]).map_err(err)?,
                    y: num(cols[2]).map_err(err)?,
                    angle_units,
                });
            }
            _ => {
                if cols.len() != 5 {
                    return Err(err(format!("minutia needs 5 columns, found {}", cols.len())));
                }
                let kind: MinutiaKind = cols[0].parse().map_err(err)?;
                view.minutiae.push(Minutia {
                    kind,
                    x: num(cols[1]).map_err(err)?,
                    y: num(cols[2]).map_err(err)?,
                    angle_units: angle(cols[3]).map_err(err)?,
                    quality: num(cols[4]).map_err(err)?,
                });
            }
        }
    }
    record.ok_or(CodecError::Text { line: 0, reason: "no `record` line".into() })
}

fn key_values(rest: &str) -> Result<HashMap<&str, &str>, String> {
    rest.split_whitespace()
        .map(|kv| kv.split_once('=').ok_or_else(|| format!("expected key=value, found `{kv}`")))
        .collect()
}

fn field<T: std::str::FromStr>(kv: &HashMap<&str, &str>, key: &str) -> Result<T, String> {
    let v = kv.get(key).ok_or_else(|| format!("missing `{key}`"))?;
    v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad number `{s}`"))
}

fn angle(s: &str) -> Result<u8, String> {
    let deg: f64 = num(s)?;
    quantize_angle(deg).map_err(|e| e.to_string())
}

fn parse_hex(s: &str) -> Result<Vec<u8>, String> {
    if !s.len().is_multiple_of(2) {
        return Err("odd-length hex".into());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| format!("bad hex `{}`", &s[i..i + 2])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn round_trip_with_everything() {
        let mut r = single_view(vec![minutia(10, 20, 1), minutia(30, 44, 128)]);
        r.views[0].minutiae[1].kind = MinutiaKind::Bifurcation;
        r.views[0].singular_points = vec![
            SingularPoint { kind: SingularKind::Core, x: 120, y: 140, angle_units: Some(64) },
            SingularPoint { kind: SingularKind::Delta, x: 40, y: 300, angle_units: None },
        ];
        r.views[0].extended_bytes = vec![0, 1, 0, 4];
        let text = to_text(&r);
        assert!(text.contains("ending,10,20,1.40625,60\n"));
        assert!(text.contains("core,120,140,90\n"));
        assert_eq!(parse_text(&text).unwrap(), r);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "record capture_equipment=0 width=10 height=10 res_x=197 res_y=197\nending,1,2,3,4\n";
        assert!(matches!(parse_text(text), Err(CodecError::Text { line: 2, .. })));
        let text = "record capture_equipment=0 width=10 height=10 res_x=197 res_y=197\nview finger_position=1 view_number=0 impression_type=0 finger_quality=0 extended=\nending,1,2,400,4\n";
        assert!(matches!(parse_text(text), Err(CodecError::Text { line: 3, .. })));
    }
}
