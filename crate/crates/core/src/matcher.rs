//! Reference minutiae matcher.
//!
//! Only positions and angles take part; minutia type, quality and the
//! extended data are ignored. Alignment is an exhaustive search over every
//! (reference, probe) anchor pair: the probe is rotated by the anchors'
//! angle difference and translated so the anchors coincide, then minutiae
//! are paired greedily under distance and angle tolerances. The best
//! hypothesis has the most pairs, then the smallest summed pair distance,
//! then the lowest `(ref, probe)` anchor index.
//!
//! Score is `paired² / (n_ref · n_probe)` when at least `min_overlap`
//! minutiae pair up, otherwise 0. The score is directional: `ref` and
//! `probe` are not interchangeable in general.

use serde::{Deserialize, Serialize};

use crate::codec::{Minutia, MinutiaeRecord};

/// Pixels per centimeter at which `distance_tolerance` is expressed (500 DPI).
pub const BASE_PX_PER_CM: f64 = 197.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherParams {
    /// Pixels at 197 px/cm; scaled linearly with the record's resolution.
    pub distance_tolerance: f64,
    /// Degrees, compared as a circular difference.
    pub angle_tolerance: f64,
    pub min_overlap: usize,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self { distance_tolerance: 15.0, angle_tolerance: 22.5, min_overlap: 4 }
    }
}

impl MatcherParams {
    pub fn validate(&self) -> Result<(), MatchError> {
        let ok = self.distance_tolerance.is_finite()
            && self.distance_tolerance > 0.0
            && self.angle_tolerance > 0.0
            && self.angle_tolerance < 180.0
            && self.min_overlap > 0;
        if ok {
            Ok(())
        } else {
            Err(MatchError::InvalidParams(*self))
        }
    }

    /// Distance tolerance in pixels for a record at `px_per_cm`
    /// (unscaled when the resolution is unknown).
    pub fn distance_tolerance_at(&self, px_per_cm: u16) -> f64 {
        if px_per_cm == 0 {
            self.distance_tolerance
        } else {
            self.distance_tolerance * f64::from(px_per_cm) / BASE_PX_PER_CM
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("invalid matcher parameters {0:?}")]
    InvalidParams(MatcherParams),
    #[error("alignment needs at least one minutia on each side")]
    EmptyInput,
    #[error("record has no finger view")]
    NoViews,
}

/// Rigid transform taking probe coordinates into the reference frame:
/// `p' = R(rotation) · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Degrees in `[-180, 180)`, counterclockwise as seen on screen.
    pub rotation: f64,
    pub translation: (f64, f64),
    /// `(reference index, probe index)` of the hypothesis pair.
    pub anchor: (usize, usize),
}

impl Alignment {
    pub fn identity() -> Self {
        Self { rotation: 0.0, translation: (0.0, 0.0), anchor: (0, 0) }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (rx, ry) = rotate(x, y, self.rotation);
        (rx + self.translation.0, ry + self.translation.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub score: f64,
    pub paired_count: usize,
    pub alignment: Option<Alignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Normalize degrees to `[-180, 180)`.
pub fn normalize_degrees(d: f64) -> f64 {
    (d + 180.0).rem_euclid(360.0) - 180.0
}

/// Absolute circular difference in degrees, in `[0, 180]`.
pub fn circular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Rotate a vector counterclockwise on screen (row axis pointing down).
pub fn rotate(x: f64, y: f64, degrees: f64) -> (f64, f64) {
    let (s, c) = degrees.to_radians().sin_cos();
    (x * c + y * s, -x * s + y * c)
}

/// Uniform grid over reference minutiae with cells one tolerance wide, so a
/// query only inspects the 3×3 neighbourhood.
struct Grid {
    cell: f64,
    cols: i64,
    rows: i64,
    min_x: f64,
    min_y: f64,
    cells: Vec<Vec<usize>>,
}

impl Grid {
    fn new(points: &[Minutia], cell: f64) -> Self {
        let min_x = points.iter().map(|m| f64::from(m.x)).fold(f64::INFINITY, f64::min);
        let min_y = points.iter().map(|m| f64::from(m.y)).fold(f64::INFINITY, f64::min);
        let max_x = points.iter().map(|m| f64::from(m.x)).fold(f64::NEG_INFINITY, f64::max);
        let max_y = points.iter().map(|m| f64::from(m.y)).fold(f64::NEG_INFINITY, f64::max);
        let cols = ((max_x - min_x) / cell).floor() as i64 + 1;
        let rows = ((max_y - min_y) / cell).floor() as i64 + 1;
        let mut cells = vec![Vec::new(); (cols * rows) as usize];
        for (i, m) in points.iter().enumerate() {
            let cx = ((f64::from(m.x) - min_x) / cell).floor() as i64;
            let cy = ((f64::from(m.y) - min_y) / cell).floor() as i64;
            cells[(cy * cols + cx) as usize].push(i);
        }
        Self { cell, cols, rows, min_x, min_y, cells }
    }

    fn neighbours(&self, x: f64, y: f64, mut f: impl FnMut(usize)) {
        let cx = ((x - self.min_x) / self.cell).floor();
        let cy = ((y - self.min_y) / self.cell).floor();
        if !cx.is_finite() || !cy.is_finite() {
            return;
        }
        let (cx, cy) = (cx as i64, cy as i64);
        for gy in (cy - 1).max(0)..=(cy + 1).min(self.rows - 1) {
            for gx in (cx - 1).max(0)..=(cx + 1).min(self.cols - 1) {
                for &i in &self.cells[(gy * self.cols + gx) as usize] {
                    f(i);
                }
            }
        }
    }
}

/// Distances are compared in whole micro-pixels so that rounding noise in
/// the transform cannot break ties.
const DISTANCE_SCALE: f64 = 1e6;

#[derive(Clone, Copy)]
struct Candidate {
    distance: u64,
    reference: usize,
    probe: usize,
}

/// Reusable buffers for repeated pairing under different hypotheses.
struct Pairer<'a> {
    reference: &'a [Minutia],
    probe: &'a [Minutia],
    distance_tolerance: f64,
    angle_tolerance: f64,
    grid: Grid,
    candidates: Vec<Candidate>,
    ref_used: Vec<bool>,
    probe_used: Vec<bool>,
}

impl<'a> Pairer<'a> {
    fn new(reference: &'a [Minutia], probe: &'a [Minutia], distance_tolerance: f64, angle_tolerance: f64) -> Self {
        Self {
            reference,
            probe,
            distance_tolerance,
            angle_tolerance,
            grid: Grid::new(reference, distance_tolerance),
            candidates: Vec::new(),
            ref_used: vec![false; reference.len()],
            probe_used: vec![false; probe.len()],
        }
    }

    fn collect(&mut self, alignment: &Alignment) {
        self.candidates.clear();
        let tol2 = self.distance_tolerance * self.distance_tolerance;
        for (k, p) in self.probe.iter().enumerate() {
            let (tx, ty) = alignment.apply(f64::from(p.x), f64::from(p.y));
            let theta = p.angle_degrees() + alignment.rotation;
            let reference = self.reference;
            let angle_tolerance = self.angle_tolerance;
            let candidates = &mut self.candidates;
            self.grid.neighbours(tx, ty, |l| {
                let r = &reference[l];
                let dx = f64::from(r.x) - tx;
                let dy = f64::from(r.y) - ty;
                let d2 = dx * dx + dy * dy;
                if d2 <= tol2 && circular_difference(theta, r.angle_degrees()) <= angle_tolerance {
                    candidates.push(Candidate {
                        distance: (d2.sqrt() * DISTANCE_SCALE).round() as u64,
                        reference: l,
                        probe: k,
                    });
                }
            });
        }
        self.candidates.sort_by(|a, b| {
            a.distance.cmp(&b.distance).then(a.reference.cmp(&b.reference)).then(a.probe.cmp(&b.probe))
        });
    }

    /// Greedy one-to-one pairing; returns (pairs, summed distance in micro-pixels).
    fn pair(&mut self, alignment: &Alignment, mut sink: impl FnMut(usize, usize)) -> (usize, u64) {
        self.collect(alignment);
        self.ref_used.iter_mut().for_each(|u| *u = false);
        self.probe_used.iter_mut().for_each(|u| *u = false);
        let (mut count, mut sum) = (0, 0u64);
        for c in &self.candidates {
            if self.ref_used[c.reference] || self.probe_used[c.probe] {
                continue;
            }
            self.ref_used[c.reference] = true;
            self.probe_used[c.probe] = true;
            count += 1;
            sum += c.distance;
            sink(c.reference, c.probe);
        }
        (count, sum)
    }
}

/// The hypothesis that overlays probe minutia `j` on reference minutia `i`.
pub fn anchor_hypothesis(reference: &[Minutia], probe: &[Minutia], i: usize, j: usize) -> Alignment {
    let r = &reference[i];
    let p = &probe[j];
    let rotation = normalize_degrees(r.angle_degrees() - p.angle_degrees());
    let (px, py) = rotate(f64::from(p.x), f64::from(p.y), rotation);
    Alignment { rotation, translation: (f64::from(r.x) - px, f64::from(r.y) - py), anchor: (i, j) }
}

/// Best anchor-pair alignment of `probe` onto `reference`, with the pair
/// count it achieves.
pub fn estimate_alignment(
    reference: &[Minutia],
    probe: &[Minutia],
    params: &MatcherParams,
    distance_tolerance: f64,
) -> Result<(Alignment, usize), MatchError> {
    params.validate()?;
    if reference.is_empty() || probe.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    let mut pairer = Pairer::new(reference, probe, distance_tolerance, params.angle_tolerance);
    let mut best: Option<(Alignment, usize, u64)> = None;
    for i in 0..reference.len() {
        for j in 0..probe.len() {
            let hyp = anchor_hypothesis(reference, probe, i, j);
            let (count, sum) = pairer.pair(&hyp, |_, _| {});
            let better = match &best {
                None => true,
                Some((_, bc, bs)) => count > *bc || (count == *bc && sum < *bs),
            };
            if better {
                best = Some((hyp, count, sum));
            }
        }
    }
    let (alignment, count, _) = best.expect("non-empty inputs yield a hypothesis");
    Ok((alignment, count))
}

/// Greedy one-to-one pairing under `alignment`, consumed in ascending
/// `(distance, reference index, probe index)` order.
pub fn pair_minutiae(
    reference: &[Minutia],
    probe: &[Minutia],
    alignment: &Alignment,
    params: &MatcherParams,
    distance_tolerance: f64,
) -> Vec<(usize, usize)> {
    if reference.is_empty() || probe.is_empty() {
        return Vec::new();
    }
    let mut pairer = Pairer::new(reference, probe, distance_tolerance, params.angle_tolerance);
    let mut out = Vec::new();
    pairer.pair(alignment, |r, p| out.push((r, p)));
    out
}

pub fn score_from_pairs(paired: usize, n_ref: usize, n_probe: usize, min_overlap: usize) -> f64 {
    if paired < min_overlap || n_ref == 0 || n_probe == 0 {
        0.0
    } else {
        (paired * paired) as f64 / (n_ref * n_probe) as f64
    }
}

/// Compare the first view of each record.
pub fn match_templates(
    reference: &MinutiaeRecord,
    probe: &MinutiaeRecord,
    params: &MatcherParams,
) -> Result<MatchScore, MatchError> {
    params.validate()?;
    let (rv, pv) = match (reference.views.first(), probe.views.first()) {
        (Some(r), Some(p)) => (r, p),
        _ => return Err(MatchError::NoViews),
    };
    if rv.minutiae.is_empty() || pv.minutiae.is_empty() {
        let side = if rv.minutiae.is_empty() { "reference" } else { "probe" };
        return Ok(MatchScore {
            score: 0.0,
            paired_count: 0,
            alignment: None,
            diagnostic: Some(format!("{side} template has no minutiae")),
        });
    }
    let tol = params.distance_tolerance_at(reference.resolution_x);
    let (alignment, paired) = estimate_alignment(&rv.minutiae, &pv.minutiae, params, tol)?;
    Ok(MatchScore {
        score: score_from_pairs(paired, rv.minutiae.len(), pv.minutiae.len(), params.min_overlap),
        paired_count: paired,
        alignment: Some(alignment),
        diagnostic: None,
    })
}
