//! File-backed marking store.
//!
//! Layout under the data root, one directory per database:
//!
//! ```text
//! <db>/manifest.json          database manifest
//! <db>/log/<f>_<i>.jsonl      append-only audit log, one state per line
//! <db>/index.json             current revision/status of every template
//! <db>/iso/<f>_<i>.iso-fmr    latest submitted record
//! ```
//!
//! The logs are authoritative; the index is rewritten after every commit
//! and rebuilt from the logs at startup.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Cursor, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::render::{render_image, RenderedImage};
use super::schedule::{generate_marking_schedule, MarkingAssignment};
use super::{
    Clock, LogEntry, LogEvent, ReviewAction, ReviewRecord, ReviewRequest, ServiceConfig, ServiceError, TemplateForm,
    TemplateState, TemplateStatus,
};
use crate::codec::{encode_record, validate_for_image, MinutiaeRecord};
use crate::dataset::{minutiae_count_stats, CountStats, DatabaseManifest, ImageRef, PerceivedQuality};

fn storage(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |e| ServiceError::Storage(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(storage(&tmp))?;
    fs::rename(&tmp, path).map_err(storage(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    revision: u32,
    status: TemplateStatus,
    marker: u16,
    perceived_quality: PerceivedQuality,
}

struct DbState {
    manifest: DatabaseManifest,
    dir: PathBuf,
    schedule: Vec<MarkingAssignment>,
    /// image → (subject, day)
    assigned: HashMap<ImageRef, (u16, u32)>,
    templates: BTreeMap<ImageRef, Arc<Mutex<Option<TemplateState>>>>,
    index: Mutex<BTreeMap<String, IndexEntry>>,
}

impl DbState {
    fn log_path(&self, image: &ImageRef) -> PathBuf {
        self.dir.join("log").join(format!("{}.jsonl", image.stem()))
    }

    fn iso_path(&self, image: &ImageRef) -> PathBuf {
        self.dir.join("iso").join(image.template_file_name())
    }

    fn slot(&self, image: &ImageRef) -> Result<&Arc<Mutex<Option<TemplateState>>>, ServiceError> {
        self.templates.get(image).ok_or_else(|| ServiceError::NotFound(image.clone()))
    }
}

/// Result of a submission: the new state and advisory warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub state: TemplateState,
    pub warnings: Vec<String>,
}

/// One subject-day of work with its calendar date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayAssignment {
    pub db_id: String,
    pub date: NaiveDate,
    #[serde(flatten)]
    pub assignment: MarkingAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbStats {
    pub db_id: String,
    pub total: usize,
    pub unmarked: usize,
    pub draft: usize,
    pub marked: usize,
    pub under_review: usize,
    #[serde(rename = "final")]
    pub final_count: usize,
    /// Over submitted (non-draft) templates.
    pub minutiae: Option<CountStats>,
    /// Perceived quality letter → count, over submitted templates.
    pub quality: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub db_id: String,
    pub total: usize,
    #[serde(rename = "final")]
    pub final_count: usize,
    pub completeness: f64,
    pub files: Vec<String>,
    pub perceived_quality: BTreeMap<String, PerceivedQuality>,
}

#[derive(Debug, Clone)]
pub struct ExportArchive {
    pub zip: Vec<u8>,
    pub summary: ExportSummary,
}

pub struct MarkingService {
    config: ServiceConfig,
    start_date: NaiveDate,
    clock: Arc<dyn Clock>,
    dbs: BTreeMap<String, DbState>,
    /// Shared by single-template operations, exclusive for export.
    batch: RwLock<()>,
    /// (subject, db, finger, date) → impression first viewed that day.
    viewed: Mutex<HashMap<(u16, String, u16, NaiveDate), u16>>,
}

impl MarkingService {
    /// Place a database under the data root so that the next `open` serves it.
    pub fn add_database(data_root: &Path, manifest: &DatabaseManifest) -> Result<PathBuf, ServiceError> {
        manifest.check().map_err(|e| ServiceError::BadInput(e.to_string()))?;
        let dir = data_root.join(&manifest.spec.db_id);
        fs::create_dir_all(&dir).map_err(storage(&dir))?;
        let path = dir.join("manifest.json");
        manifest.save_json(&path).map_err(|e| ServiceError::Storage(e.to_string()))?;
        Ok(path)
    }

    /// Load every `<db>/manifest.json` under the data root and replay the logs.
    pub fn open(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let subjects = config.subjects();
        if subjects == 0 {
            return Err(ServiceError::Config("roster is empty".into()));
        }
        let root = &config.data_root;
        fs::create_dir_all(root).map_err(storage(root))?;
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)
            .map_err(storage(root))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        dirs.sort();

        let mut dbs = BTreeMap::new();
        for dir in dirs {
            let manifest = DatabaseManifest::load_json(&dir.join("manifest.json"))
                .map_err(|e| ServiceError::Storage(e.to_string()))?;
            let schedule = generate_marking_schedule(&manifest.spec, subjects, config.capacity)?;
            let assigned = schedule
                .iter()
                .flat_map(|a| a.images.iter().map(move |i| (i.clone(), (a.subject_id, a.day_index))))
                .collect::<HashMap<_, _>>();
            for sub in ["log", "iso"] {
                fs::create_dir_all(dir.join(sub)).map_err(storage(&dir))?;
            }
            let mut db = DbState {
                manifest,
                dir,
                schedule,
                assigned,
                templates: BTreeMap::new(),
                index: Mutex::new(BTreeMap::new()),
            };
            let images: Vec<ImageRef> = db.assigned.keys().cloned().collect();
            let mut index = BTreeMap::new();
            for image in images {
                let state = read_log(&db.log_path(&image))?.pop().map(|e| e.state);
                if let Some(s) = &state {
                    index.insert(image.stem(), index_entry(s));
                }
                db.templates.insert(image, Arc::new(Mutex::new(state)));
            }
            write_index(&db.dir, &index)?;
            *db.index.get_mut().unwrap() = index;
            dbs.insert(db.manifest.spec.db_id.clone(), db);
        }
        let start_date = config.start_date.unwrap_or_else(|| clock.now().date_naive());
        Ok(Self { config, start_date, clock, dbs, batch: RwLock::new(()), viewed: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn database_ids(&self) -> Vec<String> {
        self.dbs.keys().cloned().collect()
    }

    fn db(&self, db_id: &str) -> Result<&DbState, ServiceError> {
        self.dbs.get(db_id).ok_or_else(|| ServiceError::UnknownDatabase(db_id.to_string()))
    }

    fn check_subject(&self, subject: u16) -> Result<(), ServiceError> {
        if subject == 0 || subject > self.config.subjects() {
            Err(ServiceError::UnknownSubject(subject))
        } else {
            Ok(())
        }
    }

    /// Schedule day (1-based) that `date` falls on; 0 or less before the start.
    pub fn day_index(&self, date: NaiveDate) -> i64 {
        (date - self.start_date).num_days() + 1
    }

    pub fn date_of_day(&self, day_index: u32) -> NaiveDate {
        self.start_date + chrono::Days::new(u64::from(day_index.saturating_sub(1)))
    }

    pub fn schedule_for(&self, subject: u16) -> Result<Vec<DayAssignment>, ServiceError> {
        self.check_subject(subject)?;
        Ok(self
            .dbs
            .values()
            .flat_map(|db| {
                db.schedule.iter().filter(|a| a.subject_id == subject).map(|a| DayAssignment {
                    db_id: db.manifest.spec.db_id.clone(),
                    date: self.date_of_day(a.day_index),
                    assignment: a.clone(),
                })
            })
            .collect())
    }

    /// Serve an image to a subject. A subject may not see two impressions of
    /// one finger on the same calendar day.
    pub fn view_image(
        &self,
        subject: u16,
        image: &ImageRef,
        display_height_cm: f64,
    ) -> Result<RenderedImage, ServiceError> {
        self.check_subject(subject)?;
        let db = self.db(&image.db_id)?;
        let entry = db.manifest.entry(image).ok_or_else(|| ServiceError::NotFound(image.clone()))?;
        let today = self.clock.now().date_naive();
        let key = (subject, image.db_id.clone(), image.finger, today);
        let mut viewed = self.viewed.lock().unwrap();
        if let Some(&other) = viewed.get(&key) {
            if other != image.impression {
                return Err(ServiceError::ViewingBlocked { subject, finger: image.finger, viewed: other });
            }
        }
        let path =
            if entry.image_path.is_relative() { db.dir.join(&entry.image_path) } else { entry.image_path.clone() };
        let rendered = render_image(&path, db.manifest.spec.px_per_cm(), display_height_cm)?;
        viewed.insert(key, image.impression);
        Ok(rendered)
    }

    pub fn template(&self, image: &ImageRef) -> Result<Option<TemplateState>, ServiceError> {
        let db = self.db(&image.db_id)?;
        Ok(db.slot(image)?.lock().unwrap().clone())
    }

    /// Every logged event for a template, oldest first.
    pub fn history(&self, image: &ImageRef) -> Result<Vec<LogEntry>, ServiceError> {
        let db = self.db(&image.db_id)?;
        let slot = db.slot(image)?.lock().unwrap();
        let out = read_log(&db.log_path(image));
        drop(slot);
        out
    }

    fn checked_record(&self, db: &DbState, form: &TemplateForm) -> Result<MinutiaeRecord, ServiceError> {
        let record = form.to_record(&db.manifest.spec).map_err(ServiceError::Invalid)?;
        let v = validate_for_image(&record, db.manifest.spec.image_width, db.manifest.spec.image_height, false);
        if v.is_empty() {
            Ok(record)
        } else {
            Err(ServiceError::Invalid(v))
        }
    }

    /// Save (draft) or submit a marked template for an assigned image.
    pub fn submit_template(
        &self,
        subject: u16,
        image: &ImageRef,
        form: &TemplateForm,
    ) -> Result<Submission, ServiceError> {
        let _batch = self.batch.read().unwrap();
        self.check_subject(subject)?;
        let db = self.db(&image.db_id)?;
        let &(owner, day) = db.assigned.get(image).ok_or_else(|| ServiceError::NotFound(image.clone()))?;
        if owner != subject {
            return Err(ServiceError::NotAssigned { subject, image: image.clone() });
        }
        let record = self.checked_record(db, form)?;

        let mut slot = db.slot(image)?.lock().unwrap();
        let current = slot.as_ref();
        check_revision(image, current, form.expected_revision)?;
        match current.map(|s| s.status) {
            None | Some(TemplateStatus::Draft) => {}
            Some(TemplateStatus::Marked) if !form.draft => {}
            status => {
                return Err(ServiceError::InvalidState {
                    image: image.clone(),
                    status,
                    reason: if form.draft {
                        "a submitted template cannot return to draft"
                    } else {
                        "it is already in review"
                    },
                })
            }
        }
        let now = self.clock.now();
        let state = TemplateState {
            image: image.clone(),
            revision: current.map_or(0, |s| s.revision) + 1,
            marker: subject,
            record,
            perceived_quality: form.perceived_quality,
            status: if form.draft { TemplateStatus::Draft } else { TemplateStatus::Marked },
            reviews: Vec::new(),
            fingerprint_type: form.fingerprint_type.clone(),
            completeness: form.completeness.clone(),
            updated_at: now,
        };
        let event = if form.draft { LogEvent::Draft } else { LogEvent::Submit };
        self.commit(db, &mut slot, state.clone(), subject, event, now)?;

        let mut warnings = Vec::new();
        let today = self.day_index(now.date_naive());
        if today != i64::from(day) {
            warnings
                .push(format!("{image} is scheduled for day {day} ({}); today is day {today}", self.date_of_day(day)));
        }
        Ok(Submission { state, warnings })
    }

    /// Approve or modify a template marked by another subject.
    pub fn submit_review(
        &self,
        reviewer: u16,
        image: &ImageRef,
        request: &ReviewRequest,
    ) -> Result<TemplateState, ServiceError> {
        let _batch = self.batch.read().unwrap();
        self.check_subject(reviewer)?;
        let db = self.db(&image.db_id)?;
        let modified = match (request.action, &request.template) {
            (ReviewAction::Modify, Some(form)) => Some((self.checked_record(db, form)?, form)),
            (ReviewAction::Modify, None) => return Err(ServiceError::BadInput("modify needs a template".into())),
            (ReviewAction::Approve, _) => None,
        };

        let mut slot = db.slot(image)?.lock().unwrap();
        let current = slot.as_ref().ok_or_else(|| ServiceError::NotFound(image.clone()))?;
        match current.status {
            TemplateStatus::Marked | TemplateStatus::UnderReview => {}
            status => {
                return Err(ServiceError::InvalidState {
                    image: image.clone(),
                    status: Some(status),
                    reason: "only marked templates can be reviewed",
                })
            }
        }
        if current.marker == reviewer {
            return Err(ServiceError::SelfReview { subject: reviewer, image: image.clone() });
        }
        check_revision(image, Some(current), request.expected_revision)?;

        let now = self.clock.now();
        let mut state = current.clone();
        state.updated_at = now;
        let event = match modified {
            Some((record, form)) => {
                state.revision += 1;
                state.record = record;
                state.perceived_quality = form.perceived_quality;
                state.fingerprint_type = form.fingerprint_type.clone().or(state.fingerprint_type);
                state.completeness = form.completeness.clone().or(state.completeness);
                LogEvent::Modify
            }
            None => LogEvent::Approve,
        };
        state.reviews.push(ReviewRecord { reviewer, action: request.action, revision: state.revision, timestamp: now });
        state.status = if state.approved_by_all(self.config.subjects()) {
            TemplateStatus::Final
        } else {
            TemplateStatus::UnderReview
        };
        self.commit(db, &mut slot, state.clone(), reviewer, event, now)?;
        Ok(state)
    }

    fn commit(
        &self,
        db: &DbState,
        slot: &mut Option<TemplateState>,
        state: TemplateState,
        subject: u16,
        event: LogEvent,
        at: DateTime<Utc>,
    ) -> Result<(), ServiceError> {
        let log = db.log_path(&state.image);
        let seq = count_lines(&log)? + 1;
        let entry = LogEntry { seq, at, subject, event, state: state.clone() };
        let mut line = serde_json::to_vec(&entry).map_err(|e| ServiceError::Storage(e.to_string()))?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&log).map_err(storage(&log))?;
        f.write_all(&line).map_err(storage(&log))?;
        f.sync_data().map_err(storage(&log))?;

        if event != LogEvent::Draft && event != LogEvent::Approve {
            let bytes = encode_record(&state.record).map_err(|e| ServiceError::Storage(e.to_string()))?;
            write_atomic(&db.iso_path(&state.image), &bytes)?;
        }
        let mut index = db.index.lock().unwrap();
        index.insert(state.image.stem(), index_entry(&state));
        write_index(&db.dir, &index)?;
        *slot = Some(state);
        Ok(())
    }

    pub fn stats(&self, db_id: &str) -> Result<DbStats, ServiceError> {
        let db = self.db(db_id)?;
        let mut stats = DbStats {
            db_id: db_id.to_string(),
            total: db.templates.len(),
            unmarked: 0,
            draft: 0,
            marked: 0,
            under_review: 0,
            final_count: 0,
            minutiae: None,
            quality: ["G", "F", "P"].iter().map(|k| (k.to_string(), 0)).collect(),
        };
        let mut records = Vec::new();
        for slot in db.templates.values() {
            let guard = slot.lock().unwrap();
            let Some(s) = guard.as_ref() else {
                stats.unmarked += 1;
                continue;
            };
            match s.status {
                TemplateStatus::Draft => stats.draft += 1,
                TemplateStatus::Marked => stats.marked += 1,
                TemplateStatus::UnderReview => stats.under_review += 1,
                TemplateStatus::Final => stats.final_count += 1,
            }
            if s.status != TemplateStatus::Draft {
                *stats.quality.entry(s.perceived_quality.letter().to_string()).or_default() += 1;
                records.push(s.record.clone());
            }
        }
        stats.minutiae = minutiae_count_stats(&records).ok();
        Ok(stats)
    }

    /// Zip of every final template as `<finger>_<impression>.iso-fmr` plus
    /// `manifest.json` describing completeness. Runs exclusively.
    pub fn export_database(&self, db_id: &str) -> Result<ExportArchive, ServiceError> {
        let _batch = self.batch.write().unwrap();
        let db = self.db(db_id)?;
        let mut files = Vec::new();
        let mut quality = BTreeMap::new();
        let mut payload = Vec::new();
        for (image, slot) in &db.templates {
            let guard = slot.lock().unwrap();
            if let Some(s) = guard.as_ref().filter(|s| s.status == TemplateStatus::Final) {
                let bytes = encode_record(&s.record).map_err(|e| ServiceError::Storage(e.to_string()))?;
                files.push(image.template_file_name());
                quality.insert(image.stem(), s.perceived_quality);
                payload.push((image.template_file_name(), bytes));
            }
        }
        let total = db.manifest.expected_len();
        let summary = ExportSummary {
            db_id: db_id.to_string(),
            total,
            final_count: files.len(),
            completeness: if total == 0 { 0.0 } else { files.len() as f64 / total as f64 },
            files,
            perceived_quality: quality,
        };

        let zip_err = |e: &dyn std::fmt::Display| ServiceError::Storage(format!("zip: {e}"));
        let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
        let opts = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Deflated)
            .last_modified_time(zip::DateTime::default());
        for (name, bytes) in &payload {
            zip.start_file(name.as_str(), opts).map_err(|e| zip_err(&e))?;
            zip.write_all(bytes).map_err(|e| zip_err(&e))?;
        }
        zip.start_file("manifest.json", opts).map_err(|e| zip_err(&e))?;
        let manifest = serde_json::to_vec_pretty(&summary).map_err(|e| zip_err(&e))?;
        zip.write_all(&manifest).map_err(|e| zip_err(&e))?;
        let zip = zip.finish().map_err(|e| zip_err(&e))?.into_inner();
        Ok(ExportArchive { zip, summary })
    }
}

fn check_revision(
    image: &ImageRef,
    current: Option<&TemplateState>,
    expected: Option<u32>,
) -> Result<(), ServiceError> {
    let actual = current.map_or(0, |s| s.revision);
    match expected {
        Some(expected) if expected != actual => {
            Err(ServiceError::RevisionConflict { image: image.clone(), expected, actual })
        }
        _ => Ok(()),
    }
}

fn index_entry(s: &TemplateState) -> IndexEntry {
    IndexEntry { revision: s.revision, status: s.status, marker: s.marker, perceived_quality: s.perceived_quality }
}

fn write_index(dir: &Path, index: &BTreeMap<String, IndexEntry>) -> Result<(), ServiceError> {
    let text = serde_json::to_vec_pretty(index).map_err(|e| ServiceError::Storage(e.to_string()))?;
    write_atomic(&dir.join("index.json"), &text)
}

fn count_lines(path: &Path) -> Result<u64, ServiceError> {
    match fs::File::open(path) {
        Ok(f) => Ok(BufReader::new(f).lines().count() as u64),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(storage(path)(e)),
    }
}

fn read_log(path: &Path) -> Result<Vec<LogEntry>, ServiceError> {
    let f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(storage(path)(e)),
    };
    BufReader::new(f)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.map_err(storage(path))?;
            serde_json::from_str(&line)
                .map_err(|e| ServiceError::Storage(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
