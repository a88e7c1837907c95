use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use ridgemark::dataset::{DatabaseManifest, DbSpec, SensorKind};
use ridgemark::marking::{router, ManualClock, MarkingService, ServiceConfig};

fn spec() -> DbSpec {
    DbSpec {
        db_id: "THERMAL".into(),
        sensor_kind: SensorKind::ThermalSweep,
        image_width: 300,
        image_height: 480,
        dpi: 512,
        fingers: 2,
        impressions_per_finger: 4,
    }
}

struct Api {
    _dir: tempfile::TempDir,
    app: axum::Router,
}

impl Api {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let db_dir = dir.path().join("THERMAL");
        std::fs::create_dir_all(&db_dir).unwrap();
        let manifest = DatabaseManifest::synthetic(spec());
        for e in &manifest.entries {
            image::GrayImage::from_pixel(300, 480, image::Luma([128])).save(db_dir.join(&e.image_path)).unwrap();
        }
        MarkingService::add_database(dir.path(), &manifest).unwrap();
        let start = Utc.with_ymd_and_hms(2026, 5, 4, 9, 0, 0).unwrap();
        let config = ServiceConfig {
            data_root: dir.path().to_path_buf(),
            roster: vec!["a".into(), "b".into()],
            start_date: Some(start.date_naive()),
            ..Default::default()
        };
        let svc = MarkingService::open(config, Arc::new(ManualClock::new(start))).unwrap();
        Self { _dir: dir, app: router(Arc::new(svc)) }
    }

    async fn call(
        &self,
        method: &str,
        uri: &str,
        subject: Option<u16>,
        body: Option<Value>,
    ) -> (StatusCode, Vec<u8>, axum::http::HeaderMap) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(s) = subject {
            req = req.header("X-Subject-Id", s.to_string());
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes, headers)
    }

    async fn json(&self, method: &str, uri: &str, subject: Option<u16>, body: Option<Value>) -> (StatusCode, Value) {
        let (s, b, _) = self.call(method, uri, subject, body).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }
}

fn template(n: u16) -> Value {
    let minutiae: Vec<Value> = (0..n)
        .map(|i| json!({"kind": "ending", "x": 10 + i * 5, "y": 20 + i * 7, "angle_deg": 90.0, "quality": 60}))
        .collect();
    json!({
        "minutiae": minutiae,
        "singular_points": [{"kind": "core", "x": 150, "y": 240}],
        "perceived_quality": "good",
        "expected_revision": 0,
        "fingerprint_type": "loop",
        "completeness": "full"
    })
}

#[tokio::test]
async fn schedule_lists_days() {
    let api = Api::new();
    let (s, v) = api.json("GET", "/api/v1/schedule/1", None, None).await;
    assert_eq!(s, StatusCode::OK);
    let days = v.as_array().unwrap();
    assert_eq!(days.len(), 2);
    assert_eq!(days[0]["date"], "2026-05-04");
    assert_eq!(days[0]["images"][0], json!({"db_id": "THERMAL", "finger": 1, "impression": 1}));
    let (s, _) = api.json("GET", "/api/v1/schedule/3", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn image_carries_scale_metadata() {
    let api = Api::new();
    let (s, body, h) = api.call("GET", "/api/v1/images/THERMAL/1/1.png", Some(1), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["content-type"], "image/png");
    assert_eq!(h["x-px-per-cm"], "202");
    assert_eq!(h["x-image-height-px"], "480");
    assert_eq!(h["x-target-height-cm"], "22");
    assert_eq!(image::load_from_memory(&body).unwrap().height(), 480);

    let (s, _, _) = api.call("GET", "/api/v1/images/THERMAL/1/3.png", Some(1), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _, _) = api.call("GET", "/api/v1/images/THERMAL/2/1.png?height_cm=0", Some(1), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _, _) = api.call("GET", "/api/v1/images/THERMAL/2/1.png", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _, _) = api.call("GET", "/api/v1/images/THERMAL/9/1.png", Some(1), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn mark_review_export_flow() {
    let api = Api::new();
    let uri = "/api/v1/templates/THERMAL/1/1";

    let (s, v) = api.json("PUT", uri, Some(2), Some(template(5))).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::FORBIDDEN, Some("not-assigned")));

    let mut bad = template(5);
    bad["minutiae"][1]["y"] = json!(480);
    let (s, v) = api.json("PUT", uri, Some(1), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["violations"][0]["kind"], "coordinate-out-of-bounds");

    let (s, v) = api.json("PUT", uri, Some(1), Some(template(5))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["revision"], 1);
    assert_eq!(v["status"], "marked");

    let (s, v) = api.json("PUT", uri, Some(1), Some(template(6))).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("revision-conflict")));

    let (s, v) = api.json("GET", uri, None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["minutiae"].as_array().unwrap().len(), 5);
    assert_eq!(v["minutiae"][0]["angle_deg"], 90.0);
    assert_eq!(v["fingerprint_type"], "loop");

    let review = format!("{uri}/reviews");
    let (s, v) = api.json("POST", &review, Some(1), Some(json!({"action": "approve"}))).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::FORBIDDEN, Some("self-review")));
    let (s, v) = api.json("POST", &review, Some(2), Some(json!({"action": "approve", "expected_revision": 1}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "final");

    let (s, v) = api.json("GET", &format!("{uri}/history"), None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 2);

    let (s, v) = api.json("GET", "/api/v1/stats/THERMAL", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["total"].as_u64(), v["final"].as_u64(), v["unmarked"].as_u64()), (Some(8), Some(1), Some(7)));

    let (s, body, h) = api.call("GET", "/api/v1/export/THERMAL.zip", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["x-completeness"], "0.125");
    let mut zip = zip::ZipArchive::new(std::io::Cursor::new(body)).unwrap();
    let mut names: Vec<String> = zip.file_names().map(String::from).collect();
    names.sort();
    assert_eq!(names, ["1_1.iso-fmr", "manifest.json"]);
    let mut bytes = Vec::new();
    std::io::Read::read_to_end(&mut zip.by_name("1_1.iso-fmr").unwrap(), &mut bytes).unwrap();
    let rec = ridgemark::codec::decode_record(&bytes).unwrap();
    assert_eq!((rec.resolution_y, rec.minutiae_count()), (202, 5));

    let (s, _) = api.json("GET", "/api/v1/export/NOPE.zip", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn review_of_unmarked_and_malformed_requests() {
    let api = Api::new();
    let (s, _) =
        api.json("POST", "/api/v1/templates/THERMAL/1/1/reviews", Some(2), Some(json!({"action": "approve"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = api.json("PUT", "/api/v1/templates/THERMAL/x/1", Some(1), Some(template(1))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = api.json("PUT", "/api/v1/templates/THERMAL/1/1", Some(1), Some(json!({"minutiae": []}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) =
        api.json("POST", "/api/v1/templates/THERMAL/1/1/reviews", Some(2), Some(json!({"action": "modify"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
