//! Seeded synthetic minutiae templates and databases.
//!
//! Impressions of one finger are rigid motions of a base template with
//! positional and angular jitter. Degradation deletes a fraction of the
//! true minutiae and adds the same number of spurious ones, the way a noisy
//! automatic extractor would.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{
    dpi_to_px_per_cm, FingerView, Minutia, MinutiaKind, MinutiaeRecord, SingularKind, SingularPoint,
    ANGLE_UNIT_DEGREES, MAX_COORDINATE,
};
use crate::dataset::{DatabaseManifest, DbSpec, ImageRef, SensorKind};
use crate::matcher::rotate;

const MIN_SPACING: f64 = 12.0;

fn disc(width: u16, height: u16) -> (f64, f64, f64) {
    let (w, h) = (f64::from(width), f64::from(height));
    (w / 2.0, h / 2.0, 0.4 * w.min(h))
}

fn random_point(rng: &mut impl Rng, width: u16, height: u16) -> (u16, u16) {
    let (cx, cy, r) = disc(width, height);
    loop {
        let x = rng.gen_range(cx - r..cx + r);
        let y = rng.gen_range(cy - r..cy + r);
        if (x - cx).powi(2) + (y - cy).powi(2) <= r * r {
            return (x.round() as u16, y.round() as u16);
        }
    }
}

fn random_minutia(rng: &mut impl Rng, width: u16, height: u16) -> Minutia {
    let (x, y) = random_point(rng, width, height);
    Minutia {
        kind: if rng.gen_bool(0.5) { MinutiaKind::Ending } else { MinutiaKind::Bifurcation },
        x,
        y,
        angle_units: rng.gen(),
        quality: rng.gen_range(40..=100),
    }
}

/// `n` minutiae inside the central disc (radius 0.4·min(w, h)), at least
/// 12 px apart where possible.
pub fn random_template(rng: &mut impl Rng, n: usize, width: u16, height: u16) -> Vec<Minutia> {
    let mut out: Vec<Minutia> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        let m = random_minutia(rng, width, height);
        attempts += 1;
        let spaced = out.iter().all(|o| {
            (f64::from(o.x) - f64::from(m.x)).powi(2) + (f64::from(o.y) - f64::from(m.y)).powi(2)
                >= MIN_SPACING * MIN_SPACING
        });
        if spaced || attempts > 200 * n {
            out.push(m);
        }
    }
    out
}

/// A valid record of arbitrary shape: 1..=4 views with distinct view
/// numbers, any minutia kind, singular points and an opaque extended block.
/// Used for codec round-trip checks, not for matching.
pub fn random_record(rng: &mut impl Rng) -> MinutiaeRecord {
    let width = rng.gen_range(1..=MAX_COORDINATE + 1);
    let height = rng.gen_range(1..=MAX_COORDINATE + 1);
    let mut record = MinutiaeRecord {
        capture_equipment: rng.gen(),
        image_width: width,
        image_height: height,
        resolution_x: rng.gen(),
        resolution_y: rng.gen(),
        views: Vec::new(),
    };
    let mut numbers: Vec<u8> = (0..16).collect();
    numbers.shuffle(rng);
    for &view_number in numbers.iter().take(rng.gen_range(1..=4)) {
        let n = rng.gen_range(0..=60);
        let minutiae = (0..n)
            .map(|_| Minutia {
                kind: [MinutiaKind::Other, MinutiaKind::Ending, MinutiaKind::Bifurcation][rng.gen_range(0..3)],
                x: rng.gen_range(0..width),
                y: rng.gen_range(0..height),
                angle_units: rng.gen(),
                quality: rng.gen_range(0..=100),
            })
            .collect();
        let point = |rng: &mut _, kind| SingularPoint {
            kind,
            x: Rng::gen_range(rng, 0..width),
            y: Rng::gen_range(rng, 0..height),
            angle_units: if Rng::gen_bool(rng, 0.5) { Some(Rng::gen(rng)) } else { None },
        };
        let mut singular_points: Vec<SingularPoint> =
            (0..rng.gen_range(0..=2)).map(|_| point(rng, SingularKind::Core)).collect();
        singular_points.extend((0..rng.gen_range(0..=2)).map(|_| point(rng, SingularKind::Delta)));
        let mut extended_bytes = Vec::new();
        if rng.gen_bool(0.3) {
            let payload: Vec<u8> = (0..rng.gen_range(0..8)).map(|_| rng.gen()).collect();
            extended_bytes.extend_from_slice(&0x0001u16.to_be_bytes());
            extended_bytes.extend_from_slice(&(4 + payload.len() as u16).to_be_bytes());
            extended_bytes.extend_from_slice(&payload);
        }
        record.views.push(FingerView {
            finger_position: rng.gen_range(0..=10),
            view_number,
            impression_type: rng.gen_range(0..=15),
            finger_quality: rng.gen_range(0..=100),
            minutiae,
            singular_points,
            extended_bytes,
        });
    }
    record
}

/// Rotation about `center`, then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub rotation: f64,
    pub translation: (f64, f64),
    pub center: (f64, f64),
}

impl RigidMotion {
    pub fn random(rng: &mut impl Rng, max_rotation: f64, max_translation: f64, width: u16, height: u16) -> Self {
        Self {
            rotation: rng.gen_range(-max_rotation..=max_rotation),
            translation: (
                rng.gen_range(-max_translation..=max_translation),
                rng.gen_range(-max_translation..=max_translation),
            ),
            center: (f64::from(width) / 2.0, f64::from(height) / 2.0),
        }
    }
}

fn rotate_units(units: u8, degrees: f64) -> u8 {
    let turned = (f64::from(units) + degrees / ANGLE_UNIT_DEGREES).round();
    turned.rem_euclid(256.0) as u8
}

/// Move every minutia; those landing outside `width × height` are dropped.
pub fn apply_motion(minutiae: &[Minutia], motion: &RigidMotion, width: u16, height: u16) -> Vec<Minutia> {
    minutiae
        .iter()
        .filter_map(|m| {
            let (dx, dy) = (f64::from(m.x) - motion.center.0, f64::from(m.y) - motion.center.1);
            let (rx, ry) = rotate(dx, dy, motion.rotation);
            let x = (rx + motion.center.0 + motion.translation.0).round();
            let y = (ry + motion.center.1 + motion.translation.1).round();
            (x >= 0.0 && y >= 0.0 && x < f64::from(width) && y < f64::from(height)).then(|| Minutia {
                x: x as u16,
                y: y as u16,
                angle_units: rotate_units(m.angle_units, motion.rotation),
                ..*m
            })
        })
        .collect()
}

/// Uniform jitter of up to `pos` pixels and `units` angle units, clamped to the image.
pub fn jitter(rng: &mut impl Rng, minutiae: &[Minutia], pos: i32, units: i32, width: u16, height: u16) -> Vec<Minutia> {
    minutiae
        .iter()
        .map(|m| {
            let x = (i32::from(m.x) + rng.gen_range(-pos..=pos)).clamp(0, i32::from(width) - 1);
            let y = (i32::from(m.y) + rng.gen_range(-pos..=pos)).clamp(0, i32::from(height) - 1);
            let a = (i32::from(m.angle_units) + rng.gen_range(-units..=units)).rem_euclid(256);
            Minutia { x: x as u16, y: y as u16, angle_units: a as u8, ..*m }
        })
        .collect()
}

/// Delete `round(fraction·n)` minutiae and append as many spurious ones.
pub fn degrade(rng: &mut impl Rng, minutiae: &[Minutia], fraction: f64, width: u16, height: u16) -> Vec<Minutia> {
    let k = ((fraction * minutiae.len() as f64).round() as usize).min(minutiae.len());
    let mut keep: Vec<usize> = (0..minutiae.len()).collect();
    keep.shuffle(rng);
    keep.truncate(minutiae.len() - k);
    keep.sort_unstable();
    let mut out: Vec<Minutia> = keep.into_iter().map(|i| minutiae[i]).collect();
    out.extend((0..k).map(|_| random_minutia(rng, width, height)));
    out
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub db_id: String,
    pub fingers: u16,
    pub impressions: u16,
    pub width: u16,
    pub height: u16,
    pub dpi: u32,
    pub minutiae_range: (usize, usize),
    pub max_rotation: f64,
    pub max_translation: f64,
    pub jitter_px: i32,
    pub jitter_units: i32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            db_id: "SYNTH".into(),
            fingers: 10,
            impressions: 8,
            width: 388,
            height: 374,
            dpi: 500,
            minutiae_range: (28, 44),
            max_rotation: 15.0,
            max_translation: 15.0,
            jitter_px: 2,
            jitter_units: 2,
            seed: 0x5EED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDatabase {
    pub config: SyntheticConfig,
    pub manifest: DatabaseManifest,
    pub templates: BTreeMap<ImageRef, MinutiaeRecord>,
}

impl SyntheticDatabase {
    pub fn generate(config: SyntheticConfig) -> Self {
        let spec = DbSpec {
            db_id: config.db_id.clone(),
            sensor_kind: SensorKind::Optical,
            image_width: config.width,
            image_height: config.height,
            dpi: config.dpi,
            fingers: config.fingers,
            impressions_per_finger: config.impressions,
        };
        let manifest = DatabaseManifest::synthetic(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut templates = BTreeMap::new();
        for finger in 1..=config.fingers {
            let n = rng.gen_range(config.minutiae_range.0..=config.minutiae_range.1);
            let base = random_template(&mut rng, n, config.width, config.height);
            for impression in 1..=config.impressions {
                let motion = RigidMotion::random(
                    &mut rng,
                    config.max_rotation,
                    config.max_translation,
                    config.width,
                    config.height,
                );
                let moved = apply_motion(&base, &motion, config.width, config.height);
                let ms = jitter(&mut rng, &moved, config.jitter_px, config.jitter_units, config.width, config.height);
                templates
                    .insert(ImageRef::new(config.db_id.clone(), finger, impression), Self::record(&config, finger, ms));
            }
        }
        Self { config, manifest, templates }
    }

    fn record(config: &SyntheticConfig, finger: u16, minutiae: Vec<Minutia>) -> MinutiaeRecord {
        let res = dpi_to_px_per_cm(config.dpi);
        let mut r = MinutiaeRecord::new(config.width, config.height, config.dpi);
        r.resolution_x = res;
        r.resolution_y = res;
        r.with_view(FingerView::new(((finger - 1) % 10 + 1) as u8, minutiae))
    }

    /// Every template degraded by the fraction `level(image)` returns.
    pub fn degraded(&self, seed: u64, level: impl Fn(&ImageRef) -> f64) -> BTreeMap<ImageRef, MinutiaeRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.templates
            .iter()
            .map(|(image, rec)| {
                let f = level(image);
                let mut out = rec.clone();
                let view = &mut out.views[0];
                view.minutiae = degrade(&mut rng, &view.minutiae, f, self.config.width, self.config.height);
                (image.clone(), out)
            })
            .collect()
    }
}
