//! Verification protocol: all ordered genuine and imposter pairs of a
//! database, scored by a matcher, summarized as ROC curves and GAR at fixed
//! FAR with normal-approximation confidence intervals.

mod csvio;
mod external;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::MinutiaeRecord;
use crate::dataset::{DatabaseManifest, DbSpec, ImageRef, PerceivedQuality, SensorKind};
use crate::matcher::{self, MatchError, MatcherParams};

pub use csvio::{read_pairs_csv, read_scores_csv, write_pairs_csv, write_scores_csv};
pub use external::ExternalMatcher;
pub use report::{emit_report, format_cell, ReportScenario, DEFAULT_FAR_TARGETS};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("manifest is incomplete: {} impression(s) missing (first: {})", .0.len(), .0[0])]
    IncompleteManifest(Vec<ImageRef>),
    #[error("protocol needs templates that are missing: {} (first: {})", .0.len(), .0[0])]
    MissingTemplates(Vec<ImageRef>),
    #[error("no quality label for {0}")]
    MissingLabel(ImageRef),
    #[error("{0} scores are empty")]
    EmptyScores(&'static str),
    #[error("target FAR {0} is not in (0, 1)")]
    BadTargetFar(f64),
    #[error("confidence interval needs n >= 1")]
    EmptySample,
    #[error("proportion {0} is not in [0, 1]")]
    BadProportion(f64),
    #[error("score {score} for {probe} vs {gallery} is not in [0, 1]")]
    ScoreRange { probe: ImageRef, gallery: ImageRef, score: f64 },
    #[error("matcher failed on {probe} vs {gallery}: {reason}")]
    Matcher { probe: ImageRef, gallery: ImageRef, reason: String },
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("report needs at least one scenario")]
    EmptyReport,
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Genuine,
    Imposter,
}

impl PairKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PairKind::Genuine => "genuine",
            PairKind::Imposter => "imposter",
        }
    }
}

/// An ordered comparison: `probe` is matched against `gallery`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchPair {
    pub probe: ImageRef,
    pub gallery: ImageRef,
    pub kind: PairKind,
}

impl MatchPair {
    pub fn new(probe: ImageRef, gallery: ImageRef) -> Self {
        let kind = if probe.db_id == gallery.db_id && probe.finger == gallery.finger {
            PairKind::Genuine
        } else {
            PairKind::Imposter
        };
        Self { probe, gallery, kind }
    }
}

/// Every ordered pair of distinct images, probe-major in image order.
pub fn generate_match_pairs(manifest: &DatabaseManifest) -> Result<Vec<MatchPair>, EvalError> {
    let missing = manifest.missing();
    if !missing.is_empty() {
        return Err(EvalError::IncompleteManifest(missing));
    }
    let images: BTreeSet<&ImageRef> = manifest.entries.iter().map(|e| &e.image).collect();
    let images: Vec<&ImageRef> = images.into_iter().collect();
    let mut out = Vec::with_capacity(images.len() * images.len().saturating_sub(1));
    for probe in &images {
        for gallery in &images {
            if probe != gallery {
                out.push(MatchPair::new((*probe).clone(), (*gallery).clone()));
            }
        }
    }
    Ok(out)
}

/// Pairs for a complete `fingers × impressions` database without images.
pub fn generate_pairs_for(db_id: &str, fingers: u16, impressions: u16) -> Vec<MatchPair> {
    let spec = DbSpec {
        db_id: db_id.into(),
        sensor_kind: SensorKind::Optical,
        image_width: 0,
        image_height: 0,
        dpi: 0,
        fingers,
        impressions_per_finger: impressions,
    };
    generate_match_pairs(&DatabaseManifest::synthetic(spec)).expect("synthetic manifest is complete")
}

pub fn count_kinds(pairs: &[MatchPair]) -> (usize, usize) {
    let genuine = pairs.iter().filter(|p| p.kind == PairKind::Genuine).count();
    (genuine, pairs.len() - genuine)
}

/// Anything that turns a probe/gallery pair into a score in `[0, 1]`.
pub trait PairMatcher: Sync {
    fn label(&self) -> String;

    fn score(
        &self,
        probe: &ImageRef,
        probe_record: &MinutiaeRecord,
        gallery: &ImageRef,
        gallery_record: &MinutiaeRecord,
    ) -> Result<f64, EvalError>;
}

/// The built-in matcher; the gallery template is the alignment reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceMatcher {
    pub params: MatcherParams,
}

impl PairMatcher for ReferenceMatcher {
    fn label(&self) -> String {
        "reference".into()
    }

    fn score(
        &self,
        _: &ImageRef,
        probe: &MinutiaeRecord,
        _: &ImageRef,
        gallery: &MinutiaeRecord,
    ) -> Result<f64, EvalError> {
        Ok(matcher::match_templates(gallery, probe, &self.params)?.score)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub db_id: String,
    pub extractor: String,
    pub matcher: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: MatchPair,
    pub score: f64,
}

/// Per-pair scores of one protocol run, in protocol order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub provenance: Provenance,
    pub entries: Vec<ScoredPair>,
}

impl ScoreSet {
    fn of_kind(&self, kind: PairKind) -> Vec<f64> {
        self.entries.iter().filter(|e| e.pair.kind == kind).map(|e| e.score).collect()
    }

    pub fn genuine_scores(&self) -> Vec<f64> {
        self.of_kind(PairKind::Genuine)
    }

    pub fn imposter_scores(&self) -> Vec<f64> {
        self.of_kind(PairKind::Imposter)
    }

    /// Keep only entries whose pair is in `pairs`.
    pub fn restricted_to(&self, pairs: &[MatchPair]) -> ScoreSet {
        let keep: BTreeSet<(&ImageRef, &ImageRef)> = pairs.iter().map(|p| (&p.probe, &p.gallery)).collect();
        ScoreSet {
            provenance: self.provenance.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| keep.contains(&(&e.pair.probe, &e.pair.gallery)))
                .cloned()
                .collect(),
        }
    }

    pub fn pairs(&self) -> Vec<MatchPair> {
        self.entries.iter().map(|e| e.pair.clone()).collect()
    }
}

/// Score every pair. All templates are checked before any matching starts;
/// results are in pair order regardless of `workers`.
pub fn execute_protocol(
    pairs: &[MatchPair],
    templates: &BTreeMap<ImageRef, MinutiaeRecord>,
    matcher: &dyn PairMatcher,
    workers: usize,
    provenance: Provenance,
) -> Result<ScoreSet, EvalError> {
    let mut missing: BTreeSet<&ImageRef> = BTreeSet::new();
    for p in pairs {
        for r in [&p.probe, &p.gallery] {
            if !templates.contains_key(r) {
                missing.insert(r);
            }
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingTemplates(missing.into_iter().cloned().collect()));
    }

    let run = || {
        pairs
            .par_iter()
            .map(|p| {
                let score = matcher.score(&p.probe, &templates[&p.probe], &p.gallery, &templates[&p.gallery])?;
                if !(0.0..=1.0).contains(&score) {
                    return Err(EvalError::ScoreRange { probe: p.probe.clone(), gallery: p.gallery.clone(), score });
                }
                Ok(ScoredPair { pair: p.clone(), score })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EvalError::Other(e.to_string()))?;
    let entries = pool.install(run)?;
    Ok(ScoreSet { provenance, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub gar: f64,
}

/// Points ordered by decreasing threshold; the first is a sentinel above
/// every observed score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// FAR and GAR at each distinct observed score, accepting `score >= threshold`.
pub fn compute_roc(scores: &ScoreSet) -> Result<RocCurve, EvalError> {
    let mut genuine = scores.genuine_scores();
    let mut imposter = scores.imposter_scores();
    if genuine.is_empty() {
        return Err(EvalError::EmptyScores("genuine"));
    }
    if imposter.is_empty() {
        return Err(EvalError::EmptyScores("imposter"));
    }
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    genuine.sort_by(desc);
    imposter.sort_by(desc);
    let mut thresholds: Vec<f64> = genuine.iter().chain(&imposter).copied().collect();
    thresholds.sort_by(desc);
    thresholds.dedup();

    let (ng, ni) = (genuine.len() as f64, imposter.len() as f64);
    let mut points = Vec::with_capacity(thresholds.len() + 1);
    points.push(RocPoint { threshold: f64::INFINITY, far: 0.0, gar: 0.0 });
    let (mut g, mut i) = (0usize, 0usize);
    for t in thresholds {
        while g < genuine.len() && genuine[g] >= t {
            g += 1;
        }
        while i < imposter.len() && imposter[i] >= t {
            i += 1;
        }
        points.push(RocPoint { threshold: t, far: i as f64 / ni, gar: g as f64 / ng });
    }
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_far: f64,
    pub achieved_far: f64,
    pub gar: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub threshold: f64,
}

/// The lowest threshold whose FAR does not exceed `target_far`, with a 95%
/// interval on its GAR. No interpolation between ROC points.
pub fn gar_at_far(roc: &RocCurve, scores: &ScoreSet, target_far: f64) -> Result<OperatingPoint, EvalError> {
    if !(target_far > 0.0 && target_far < 1.0) {
        return Err(EvalError::BadTargetFar(target_far));
    }
    let point = roc.points.iter().rev().find(|p| p.far <= target_far).ok_or(EvalError::EmptyScores("roc"))?;
    let n = scores.entries.iter().filter(|e| e.pair.kind == PairKind::Genuine).count();
    let (ci_low, ci_high) = binomial_ci(point.gar, n)?;
    Ok(OperatingPoint {
        target_far,
        achieved_far: point.far,
        gar: point.gar,
        ci_low,
        ci_high,
        threshold: point.threshold,
    })
}

const Z_95: f64 = 1.96;

/// `1.96 · sqrt(p(1−p)/n)`, before clamping.
pub fn wald_half_width(p: f64, n: usize) -> Result<f64, EvalError> {
    if n == 0 {
        return Err(EvalError::EmptySample);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(EvalError::BadProportion(p));
    }
    Ok(Z_95 * (p * (1.0 - p) / n as f64).sqrt())
}

/// 95% Wald interval for a proportion, clamped to `[0, 1]`.
pub fn binomial_ci(p: f64, n: usize) -> Result<(f64, f64), EvalError> {
    let h = wald_half_width(p, n)?;
    Ok(((p - h).max(0.0), (p + h).min(1.0)))
}

/// Drop every pair touching a poor-quality image. The rejection fraction
/// counts distinct images appearing in `pairs`.
pub fn filter_by_quality(
    pairs: &[MatchPair],
    labels: &BTreeMap<ImageRef, PerceivedQuality>,
) -> Result<(Vec<MatchPair>, f64), EvalError> {
    let mut images: BTreeMap<&ImageRef, bool> = BTreeMap::new();
    for p in pairs {
        for r in [&p.probe, &p.gallery] {
            if !images.contains_key(r) {
                let q = labels.get(r).ok_or_else(|| EvalError::MissingLabel(r.clone()))?;
                images.insert(r, *q == PerceivedQuality::Poor);
            }
        }
    }
    let kept = pairs.iter().filter(|p| !images[&p.probe] && !images[&p.gallery]).cloned().collect();
    let rejected = images.values().filter(|&&poor| poor).count();
    let fraction = if images.is_empty() { 0.0 } else { rejected as f64 / images.len() as f64 };
    Ok((kept, fraction))
}
