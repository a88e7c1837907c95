//! Backend of the manual marking workflow: per-subject schedules, image
//! delivery at a fixed physical height, template submission with an
//! append-only audit log, peer review by the other subjects and export of
//! the final templates.

mod form;
mod http;
mod render;
mod schedule;
mod service;

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::codec::{MinutiaeRecord, Violation};
use crate::dataset::{ImageRef, PerceivedQuality};

pub use form::{MinutiaForm, SingularForm, TemplateForm};
pub use http::{router, serve};
pub use render::{render_image, ImageMetadata, RenderError, RenderedImage, DEFAULT_DISPLAY_HEIGHT_CM};
pub use schedule::{
    generate_marking_schedule, schedule_days, validate_schedule, write_schedule_csv, MarkingAssignment, ScheduleError,
};
pub use service::{DayAssignment, DbStats, ExportArchive, ExportSummary, MarkingService, Submission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateStatus {
    Draft,
    Marked,
    UnderReview,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewAction {
    Approve,
    Modify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub reviewer: u16,
    pub action: ReviewAction,
    /// Revision the approval applies to, or the revision a modification created.
    pub revision: u32,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateState {
    pub image: ImageRef,
    pub revision: u32,
    pub marker: u16,
    pub record: MinutiaeRecord,
    pub perceived_quality: PerceivedQuality,
    pub status: TemplateStatus,
    pub reviews: Vec<ReviewRecord>,
    /// Accepted and stored, not used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint_type: Option<String>,
    /// Accepted and stored, not used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completeness: Option<String>,
    pub updated_at: DateTime<Utc>,
}

impl TemplateState {
    /// Latest review of each reviewer, in reviewer order.
    pub fn latest_reviews(&self) -> Vec<&ReviewRecord> {
        let mut latest: std::collections::BTreeMap<u16, &ReviewRecord> = Default::default();
        for r in &self.reviews {
            latest.insert(r.reviewer, r);
        }
        latest.into_values().collect()
    }

    /// True when every subject other than the marker has approved the
    /// current revision as their latest action.
    pub fn approved_by_all(&self, subjects: u16) -> bool {
        let latest = self.latest_reviews();
        (1..=subjects).filter(|&s| s != self.marker).all(|s| {
            latest.iter().any(|r| r.reviewer == s && r.action == ReviewAction::Approve && r.revision == self.revision)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEvent {
    Draft,
    Submit,
    Approve,
    Modify,
}

/// One line of a template's audit log: who did what, and the state after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub subject: u16,
    pub event: LogEvent,
    pub state: TemplateState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub action: ReviewAction,
    /// Required for `modify`.
    #[serde(default)]
    pub template: Option<TemplateForm>,
    #[serde(default)]
    pub expected_revision: Option<u32>,
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
pub struct ManualClock(std::sync::Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        Self(std::sync::Mutex::new(at))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock().unwrap() = at;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub data_root: PathBuf,
    pub bind: String,
    pub port: u16,
    pub capacity: usize,
    /// Subject `n` is the n-th name (1-based).
    pub roster: Vec<String>,
    /// Calendar date of schedule day 1; the service start date when unset.
    pub start_date: Option<NaiveDate>,
    pub display_height_cm: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            bind: "127.0.0.1".into(),
            port: 8080,
            capacity: 14,
            roster: (1..=4).map(|i| format!("subject-{i}")).collect(),
            start_date: None,
            display_height_cm: DEFAULT_DISPLAY_HEIGHT_CM,
        }
    }
}

impl ServiceConfig {
    /// Read a TOML file (if given), then apply `RIDGEMARK_*` environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        let bad = |k: &str, v: &str| ServiceError::Config(format!("{k}={v} is not valid"));
        if let Some(v) = var("RIDGEMARK_DATA_ROOT") {
            self.data_root = v.into();
        }
        if let Some(v) = var("RIDGEMARK_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("RIDGEMARK_PORT") {
            self.port = v.parse().map_err(|_| bad("RIDGEMARK_PORT", &v))?;
        }
        if let Some(v) = var("RIDGEMARK_CAPACITY") {
            self.capacity = v.parse().map_err(|_| bad("RIDGEMARK_CAPACITY", &v))?;
        }
        if let Some(v) = var("RIDGEMARK_ROSTER") {
            self.roster = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        if let Some(v) = var("RIDGEMARK_START_DATE") {
            self.start_date = Some(v.parse().map_err(|_| bad("RIDGEMARK_START_DATE", &v))?);
        }
        Ok(())
    }

    pub fn subjects(&self) -> u16 {
        self.roster.len() as u16
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown database `{0}`")]
    UnknownDatabase(String),
    #[error("subject {0} is not on the roster")]
    UnknownSubject(u16),
    #[error("no such image or template: {0}")]
    NotFound(ImageRef),
    #[error("{image} is not assigned to subject {subject}")]
    NotAssigned { subject: u16, image: ImageRef },
    #[error("subject {subject} marked {image} and cannot review it")]
    SelfReview { subject: u16, image: ImageRef },
    #[error("subject {subject} already viewed impression {viewed} of finger {finger} today")]
    ViewingBlocked { subject: u16, finger: u16, viewed: u16 },
    #[error("{image} is {status:?}; {reason}")]
    InvalidState { image: ImageRef, status: Option<TemplateStatus>, reason: &'static str },
    #[error("expected revision {expected} but {image} is at revision {actual}")]
    RevisionConflict { image: ImageRef, expected: u32, actual: u32 },
    #[error("template is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("storage: {0}")]
    Storage(String),
}
