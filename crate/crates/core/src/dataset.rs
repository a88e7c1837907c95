//! FVC-style fingerprint databases: image scans, template sets, quality
//! labels and minutiae count statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{self, MinutiaeRecord, Violation};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: file name is not `<finger>_<impression>.<ext>`")]
    BadFileName(PathBuf),
    #[error("{path}: finger {finger} is outside 1..={max}")]
    FingerOutOfRange { path: PathBuf, finger: u32, max: u16 },
    #[error("{path}: impression {impression} is outside 1..={max}")]
    ImpressionOutOfRange { path: PathBuf, impression: u32, max: u16 },
    #[error("{path}: image is {width}x{height}, database expects {expected_width}x{expected_height}")]
    DimensionMismatch { path: PathBuf, width: u32, height: u32, expected_width: u16, expected_height: u16 },
    #[error("{path}: cannot read image: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("{path}: line {line}: {reason}")]
    Csv { path: PathBuf, line: u64, reason: String },
    #[error("{path}: line {line}: duplicate entry for {image}")]
    Duplicate { path: PathBuf, line: u64, image: ImageRef },
    #[error("cannot compute statistics of an empty set")]
    Empty,
    #[error("manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// One impression of one finger in one database.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageRef {
    pub db_id: String,
    pub finger: u16,
    pub impression: u16,
}

impl ImageRef {
    pub fn new(db_id: impl Into<String>, finger: u16, impression: u16) -> Self {
        Self { db_id: db_id.into(), finger, impression }
    }

    /// `<finger>_<impression>`, the file stem used for images and templates.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.finger, self.impression)
    }

    pub fn template_file_name(&self) -> String {
        format!("{}.iso-fmr", self.stem())
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}_{}", self.db_id, self.finger, self.impression)
    }
}

impl FromStr for ImageRef {
    type Err = String;

    /// Parses `db/finger_impression`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (db, stem) = s.rsplit_once('/').ok_or_else(|| format!("`{s}` is not db/finger_impression"))?;
        let (finger, impression) = parse_stem(stem).ok_or_else(|| format!("`{s}` is not db/finger_impression"))?;
        let finger = u16::try_from(finger).map_err(|_| format!("finger out of range in `{s}`"))?;
        let impression = u16::try_from(impression).map_err(|_| format!("impression out of range in `{s}`"))?;
        Ok(ImageRef::new(db, finger, impression))
    }
}

fn parse_stem(stem: &str) -> Option<(u32, u32)> {
    let (f, i) = stem.split_once('_')?;
    Some((f.parse().ok()?, i.parse().ok()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Optical,
    Capacitive,
    ThermalSweep,
}

/// Human-perceived image quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceivedQuality {
    Poor,
    Fair,
    Good,
}

impl PerceivedQuality {
    /// Value written to the view's finger quality byte.
    pub fn finger_quality(self) -> u8 {
        match self {
            PerceivedQuality::Poor => 20,
            PerceivedQuality::Fair => 50,
            PerceivedQuality::Good => 80,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            PerceivedQuality::Poor => "P",
            PerceivedQuality::Fair => "F",
            PerceivedQuality::Good => "G",
        }
    }
}

impl FromStr for PerceivedQuality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "poor" | "p" => Ok(PerceivedQuality::Poor),
            "fair" | "f" => Ok(PerceivedQuality::Fair),
            "good" | "g" => Ok(PerceivedQuality::Good),
            _ => Err(format!("unknown quality `{s}`")),
        }
    }
}

/// Static description of a database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbSpec {
    pub db_id: String,
    pub sensor_kind: SensorKind,
    pub image_width: u16,
    pub image_height: u16,
    pub dpi: u32,
    pub fingers: u16,
    pub impressions_per_finger: u16,
}

impl DbSpec {
    pub fn fvc2002_db1a() -> Self {
        Self::fvc("FVC2002_DB1A", SensorKind::Optical, 388, 374, 500)
    }

    pub fn fvc2002_db3a() -> Self {
        Self::fvc("FVC2002_DB3A", SensorKind::Capacitive, 300, 300, 500)
    }

    pub fn fvc2004_db1a() -> Self {
        Self::fvc("FVC2004_DB1A", SensorKind::Optical, 640, 480, 500)
    }

    pub fn fvc2004_db3a() -> Self {
        Self::fvc("FVC2004_DB3A", SensorKind::ThermalSweep, 300, 480, 512)
    }

    fn fvc(id: &str, sensor_kind: SensorKind, w: u16, h: u16, dpi: u32) -> Self {
        Self {
            db_id: id.into(),
            sensor_kind,
            image_width: w,
            image_height: h,
            dpi,
            fingers: 100,
            impressions_per_finger: 8,
        }
    }

    /// Looks up one of the four known FVC databases by id.
    pub fn known(db_id: &str) -> Option<Self> {
        [Self::fvc2002_db1a(), Self::fvc2002_db3a(), Self::fvc2004_db1a(), Self::fvc2004_db3a()]
            .into_iter()
            .find(|s| s.db_id.eq_ignore_ascii_case(db_id))
    }

    pub fn px_per_cm(&self) -> u16 {
        codec::dpi_to_px_per_cm(self.dpi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: ImageRef,
    pub image_path: PathBuf,
    /// File extension found on disk (`tif`, `bmp`, `png`).
    pub image_format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceived_quality: Option<PerceivedQuality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nfiq: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseManifest {
    #[serde(flatten)]
    pub spec: DbSpec,
    pub entries: Vec<ManifestEntry>,
}

impl DatabaseManifest {
    pub fn empty(spec: DbSpec) -> Self {
        Self { spec, entries: Vec::new() }
    }

    /// A complete manifest for `F×K` impressions with placeholder image
    /// paths, for protocol work that never touches pixels.
    pub fn synthetic(spec: DbSpec) -> Self {
        let entries = (1..=spec.fingers)
            .flat_map(|f| (1..=spec.impressions_per_finger).map(move |i| (f, i)))
            .map(|(f, i)| {
                let image = ImageRef::new(spec.db_id.clone(), f, i);
                ManifestEntry {
                    image_path: PathBuf::from(format!("{}.png", image.stem())),
                    image,
                    image_format: "png".into(),
                    template_path: None,
                    perceived_quality: None,
                    nfiq: None,
                }
            })
            .collect();
        Self { spec, entries }
    }

    pub fn expected_len(&self) -> usize {
        usize::from(self.spec.fingers) * usize::from(self.spec.impressions_per_finger)
    }

    /// All `F×K` references not present in the manifest, in order.
    pub fn missing(&self) -> Vec<ImageRef> {
        let have: BTreeSet<&ImageRef> = self.entries.iter().map(|e| &e.image).collect();
        (1..=self.spec.fingers)
            .flat_map(|f| (1..=self.spec.impressions_per_finger).map(move |i| (f, i)))
            .map(|(f, i)| ImageRef::new(self.spec.db_id.clone(), f, i))
            .filter(|r| !have.contains(r))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.entries.len() == self.expected_len() && self.missing().is_empty()
    }

    pub fn entry(&self, image: &ImageRef) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| &e.image == image)
    }

    pub fn entry_mut(&mut self, image: &ImageRef) -> Option<&mut ManifestEntry> {
        self.entries.iter_mut().find(|e| &e.image == image)
    }

    pub fn quality_labels(&self) -> BTreeMap<ImageRef, PerceivedQuality> {
        self.entries.iter().filter_map(|e| e.perceived_quality.map(|q| (e.image.clone(), q))).collect()
    }

    /// Checks that references are distinct and belong to this database.
    pub fn check(&self) -> Result<(), DatasetError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if e.image.db_id != self.spec.db_id {
                return Err(DatasetError::Manifest(format!("{} does not belong to {}", e.image, self.spec.db_id)));
            }
            if !seen.insert(&e.image) {
                return Err(DatasetError::Manifest(format!("{} is listed twice", e.image)));
            }
        }
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let m: Self =
            serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(format!("{}: {e}", path.display())))?;
        m.check()?;
        Ok(m)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), DatasetError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        std::fs::write(path, text).map_err(io_err(path))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScanWarning {
    Empty,
    MissingImpressions(Vec<ImageRef>),
}

impl fmt::Display for ScanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScanWarning::Empty => write!(f, "no images found"),
            ScanWarning::MissingImpressions(m) => write!(f, "{} impression(s) missing", m.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub manifest: DatabaseManifest,
    pub warnings: Vec<ScanWarning>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["tif", "tiff", "bmp", "png"];

/// Build a manifest from a directory of `<finger>_<impression>.<ext>` images.
/// Files with other extensions are ignored.
pub fn scan_database(root: &Path, spec: &DbSpec) -> Result<ScanOutcome, DatasetError> {
    let mut entries = Vec::new();
    let mut listing: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io_err(root))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(root)))
        .collect::<Result<_, _>>()?;
    listing.sort();

    for path in listing {
        let Some(ext) = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) else {
            continue;
        };
        if !IMAGE_EXTENSIONS.contains(&ext.as_str()) || !path.is_file() {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (finger, impression) = parse_stem(stem).ok_or_else(|| DatasetError::BadFileName(path.clone()))?;
        if finger == 0 || finger > u32::from(spec.fingers) {
            return Err(DatasetError::FingerOutOfRange { path, finger, max: spec.fingers });
        }
        if impression == 0 || impression > u32::from(spec.impressions_per_finger) {
            return Err(DatasetError::ImpressionOutOfRange { path, impression, max: spec.impressions_per_finger });
        }
        let (width, height) = image::image_dimensions(&path)
            .map_err(|e| DatasetError::Image { path: path.clone(), reason: e.to_string() })?;
        if width != u32::from(spec.image_width) || height != u32::from(spec.image_height) {
            return Err(DatasetError::DimensionMismatch {
                path,
                width,
                height,
                expected_width: spec.image_width,
                expected_height: spec.image_height,
            });
        }
        entries.push(ManifestEntry {
            image: ImageRef::new(spec.db_id.clone(), finger as u16, impression as u16),
            image_path: path,
            image_format: ext,
            template_path: None,
            perceived_quality: None,
            nfiq: None,
        });
    }
    entries.sort_by(|a, b| a.image.cmp(&b.image));

    let manifest = DatabaseManifest { spec: spec.clone(), entries };
    manifest.check()?;
    let mut warnings = Vec::new();
    if manifest.entries.is_empty() {
        warnings.push(ScanWarning::Empty);
    } else {
        let missing = manifest.missing();
        if !missing.is_empty() {
            warnings.push(ScanWarning::MissingImpressions(missing));
        }
    }
    Ok(ScanOutcome { manifest, warnings })
}

#[derive(Debug, Default)]
pub struct TemplateSet {
    pub records: BTreeMap<ImageRef, MinutiaeRecord>,
    pub missing: Vec<ImageRef>,
    /// Files that exist but could not be decoded.
    pub diagnostics: Vec<(ImageRef, String)>,
    /// Decoded records that break an invariant against the database's image size.
    pub violations: Vec<(ImageRef, Vec<Violation>)>,
}

/// Decode `<finger>_<impression>.iso-fmr` for every manifest entry and
/// validate each record against the database's image dimensions.
pub fn load_template_set(manifest: &DatabaseManifest, dir: &Path) -> TemplateSet {
    let mut out = TemplateSet::default();
    for entry in &manifest.entries {
        let path = dir.join(entry.image.template_file_name());
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                out.missing.push(entry.image.clone());
                continue;
            }
            Err(e) => {
                out.diagnostics.push((entry.image.clone(), format!("{}: {e}", path.display())));
                continue;
            }
        };
        match codec::decode_record(&bytes) {
            Ok(record) => {
                let v =
                    codec::validate_for_image(&record, manifest.spec.image_width, manifest.spec.image_height, false);
                if !v.is_empty() {
                    out.violations.push((entry.image.clone(), v));
                }
                out.records.insert(entry.image.clone(), record);
            }
            Err(e) => out.diagnostics.push((entry.image.clone(), format!("{}: {e}", path.display()))),
        }
    }
    out
}

/// Read `db,finger,impression,nfiq` rows (an optional header row is skipped).
pub fn ingest_nfiq_csv(path: &Path) -> Result<BTreeMap<ImageRef, u8>, DatasetError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(file);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 1;
        let bad = |reason: String| DatasetError::Csv { path: path.to_path_buf(), line, reason };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if i == 0 && row.get(0).is_some_and(|c| c.eq_ignore_ascii_case("db")) {
            continue;
        }
        if row.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", row.len())));
        }
        let finger: u16 = row[1].parse().map_err(|_| bad(format!("bad finger `{}`", &row[1])))?;
        let impression: u16 = row[2].parse().map_err(|_| bad(format!("bad impression `{}`", &row[2])))?;
        let nfiq: u8 = row[3].parse().map_err(|_| bad(format!("bad nfiq `{}`", &row[3])))?;
        if !(1..=5).contains(&nfiq) {
            return Err(bad(format!("nfiq {nfiq} is outside 1..=5")));
        }
        let image = ImageRef::new(&row[0], finger, impression);
        if out.contains_key(&image) {
            return Err(DatasetError::Duplicate { path: path.to_path_buf(), line, image });
        }
        out.insert(image, nfiq);
    }
    Ok(out)
}

/// Per-image minutiae count statistics; `std` uses the n−1 denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountStats {
    pub mean: f64,
    pub std: f64,
    pub min: usize,
    pub max: usize,
}

impl CountStats {
    pub fn from_counts(counts: &[usize]) -> Result<Self, DatasetError> {
        let (&first, _) = counts.split_first().ok_or(DatasetError::Empty)?;
        let n = counts.len() as f64;
        let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
        let std = if counts.len() > 1 {
            (counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let (min, max) = counts.iter().fold((first, first), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        Ok(Self { mean, std, min, max })
    }
}

pub fn minutiae_count_stats<'a>(
    records: impl IntoIterator<Item = &'a MinutiaeRecord>,
) -> Result<CountStats, DatasetError> {
    let counts: Vec<usize> = records.into_iter().map(MinutiaeRecord::minutiae_count).collect();
    CountStats::from_counts(&counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualitySource {
    Perceived,
    Nfiq,
}

/// Bucket label → count, in display order, plus entries with no label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualityHistogram {
    pub buckets: Vec<(String, usize)>,
    pub unlabeled: usize,
}

impl QualityHistogram {
    pub fn labeled(&self) -> usize {
        self.buckets.iter().map(|(_, c)| c).sum()
    }

    pub fn count(&self, label: &str) -> usize {
        self.buckets.iter().find(|(l, _)| l == label).map_or(0, |(_, c)| *c)
    }

    pub fn fraction(&self, label: &str) -> f64 {
        match self.labeled() {
            0 => 0.0,
            n => self.count(label) as f64 / n as f64,
        }
    }
}

pub fn quality_histogram(manifest: &DatabaseManifest, source: QualitySource) -> QualityHistogram {
    let labels: Vec<&str> = match source {
        QualitySource::Perceived => vec!["G", "F", "P"],
        QualitySource::Nfiq => vec!["1", "2", "3", "4", "5"],
    };
    let mut counts = vec![0usize; labels.len()];
    let mut unlabeled = 0;
    for e in &manifest.entries {
        let idx = match source {
            QualitySource::Perceived => {
                e.perceived_quality.map(|q| labels.iter().position(|l| *l == q.letter()).unwrap())
            }
            QualitySource::Nfiq => e.nfiq.filter(|n| (1..=5).contains(n)).map(|n| usize::from(n) - 1),
        };
        match idx {
            Some(i) => counts[i] += 1,
            None => unlabeled += 1,
        }
    }
    QualityHistogram { buckets: labels.into_iter().map(String::from).zip(counts).collect(), unlabeled }
}
