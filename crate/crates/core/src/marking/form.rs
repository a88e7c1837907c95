//! JSON form of a template as exchanged with the marking client: angles in
//! degrees, one view, quality rating beside the minutiae.

use serde::{Deserialize, Serialize};

use crate::codec::{
    dequantize_angle, quantize_angle, FingerView, Minutia, MinutiaKind, MinutiaeRecord, SingularKind, SingularPoint,
    Violation, ViolationKind,
};
use crate::dataset::{DbSpec, PerceivedQuality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinutiaForm {
    pub kind: MinutiaKind,
    pub x: u16,
    pub y: u16,
    pub angle_deg: f64,
    pub quality: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularForm {
    pub kind: SingularKind,
    pub x: u16,
    pub y: u16,
    #[serde(default)]
    pub angle_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateForm {
    #[serde(default)]
    pub minutiae: Vec<MinutiaForm>,
    #[serde(default)]
    pub singular_points: Vec<SingularForm>,
    pub perceived_quality: PerceivedQuality,
    #[serde(default)]
    pub expected_revision: Option<u32>,
    /// Arch, loop, whorl...; stored, not used.
    #[serde(default)]
    pub fingerprint_type: Option<String>,
    /// Stored, not used.
    #[serde(default)]
    pub completeness: Option<String>,
    /// Save without submitting.
    #[serde(default)]
    pub draft: bool,
}

fn angle(deg: f64, path: String, violations: &mut Vec<Violation>) -> u8 {
    quantize_angle(deg).unwrap_or_else(|e| {
        violations.push(Violation { kind: ViolationKind::AngleRange, path, message: e.to_string() });
        0
    })
}

impl TemplateForm {
    /// Single-view record for an image of `spec`, with the perceived
    /// quality written to the view's finger quality. Angle problems are
    /// reported as violations; the record itself is not validated here.
    pub fn to_record(&self, spec: &DbSpec) -> Result<MinutiaeRecord, Vec<Violation>> {
        let mut violations = Vec::new();
        let minutiae = self
            .minutiae
            .iter()
            .enumerate()
            .map(|(i, m)| Minutia {
                kind: m.kind,
                x: m.x,
                y: m.y,
                angle_units: angle(m.angle_deg, format!("minutiae[{i}].angle_deg"), &mut violations),
                quality: m.quality,
            })
            .collect();
        let singular_points = self
            .singular_points
            .iter()
            .enumerate()
            .map(|(i, p)| SingularPoint {
                kind: p.kind,
                x: p.x,
                y: p.y,
                angle_units: p.angle_deg.map(|d| angle(d, format!("singular_points[{i}].angle_deg"), &mut violations)),
            })
            .collect();
        if !violations.is_empty() {
            return Err(violations);
        }
        let mut view = FingerView::new(0, minutiae);
        view.finger_quality = self.perceived_quality.finger_quality();
        view.singular_points = singular_points;
        Ok(MinutiaeRecord::new(spec.image_width, spec.image_height, spec.dpi).with_view(view))
    }

    pub fn from_record(record: &MinutiaeRecord, perceived_quality: PerceivedQuality) -> Self {
        let view = record.views.first();
        Self {
            minutiae: view
                .map(|v| {
                    v.minutiae
                        .iter()
                        .map(|m| MinutiaForm {
                            kind: m.kind,
                            x: m.x,
                            y: m.y,
                            angle_deg: dequantize_angle(m.angle_units),
                            quality: m.quality,
                        })
                        .collect()
                })
                .unwrap_or_default(),
            singular_points: view
                .map(|v| {
                    v.singular_points
                        .iter()
                        .map(|p| SingularForm {
                            kind: p.kind,
                            x: p.x,
                            y: p.y,
                            angle_deg: p.angle_units.map(dequantize_angle),
                        })
                        .collect()
                })
                .unwrap_or_default(),
            perceived_quality,
            expected_revision: None,
            fingerprint_type: None,
            completeness: None,
            draft: false,
        }
    }
}
