use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use ocelgan::synthgen::{generate, generate_toy_linear, GenConfig};
use ocelgan_cli::server::{router, AppState};
use ocelgan_cli::store::Store;

struct App {
    router: Router,
    _dir: tempfile::TempDir,
}

fn app() -> App {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    App { router: router(AppState::new(store)), _dir: dir }
}

impl App {
    async fn raw(&self, method: &str, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map(Body::from).unwrap_or_else(Body::empty))
            .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body.map(|b| serde_json::to_vec(&b).unwrap())).await;
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    async fn upload(&self, bytes: Vec<u8>) -> String {
        let (status, body) = self.raw("POST", "/logs", Some(bytes)).await;
        assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
        let v: Value = serde_json::from_slice(&body).unwrap();
        v["log_id"].as_str().unwrap().to_string()
    }

    async fn wait_for(&self, job_id: &str) -> (Value, Vec<usize>) {
        let start = Instant::now();
        let mut seen = Vec::new();
        loop {
            let (status, job) = self.call("GET", &format!("/trainings/{job_id}"), None).await;
            assert_eq!(status, StatusCode::OK);
            seen.push(job["progress"]["epoch"].as_u64().unwrap() as usize);
            if matches!(job["status"].as_str(), Some("done" | "failed")) {
                return (job, seen);
            }
            assert!(start.elapsed() < Duration::from_secs(300), "job still {}", job["status"]);
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

fn small_config(epochs: usize) -> Value {
    json!({ "epochs": epochs, "seed": 1, "num_layers": 2, "hidden_size": 6, "init_scale": 0.3, "validation_every": 5 })
}

#[tokio::test]
async fn upload_is_content_addressed() {
    let app = app();
    let bytes = generate_toy_linear(5, 600).export_json();
    let id = app.upload(bytes.clone()).await;
    assert_eq!(id.len(), 16);
    assert_eq!(app.upload(bytes).await, id);
    let (status, list) = app.call("GET", "/logs", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list, json!({ "log_ids": [id] }));
}

#[tokio::test]
async fn invalid_log_names_the_field() {
    let app = app();
    let mut doc: Value = serde_json::from_slice(&generate_toy_linear(2, 600).export_json()).unwrap();
    doc["ocel:events"]["case00001-0"]["ocel:omap"] = json!(["ghost"]);
    let (status, err) = app.call("POST", "/logs", Some(doc)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "dangling_object_reference");
    assert_eq!(err["details"]["field"], "ocel:events.case00001-0.ocel:omap");

    let (status, err) = app.raw("POST", "/logs", Some(b"{not json".to_vec())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: Value = serde_json::from_slice(&err).unwrap();
    assert_eq!(err["code"], "malformed_json");
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let app = app();
    for uri in ["/logs/0123456789abcdef/stats", "/logs/../../etc/relations", "/models/0123456789abcdef", "/trainings/job-9"] {
        let (status, err) = app.call("GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        if !err.is_null() {
            assert_eq!(err["code"], "not_found", "{uri}");
        }
    }
}

#[tokio::test]
async fn stats_match_the_cli_byte_for_byte() {
    let app = app();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.json");
    let bytes = generate(&GenConfig { num_orders: 40, ..Default::default() }).unwrap().export_json();
    std::fs::write(&path, &bytes).unwrap();
    let id = app.upload(bytes).await;

    for query in [None, Some("packages")] {
        let uri = match query {
            Some(t) => format!("/logs/{id}/stats?object_type={t}"),
            None => format!("/logs/{id}/stats"),
        };
        let (status, http) = app.raw("GET", &uri, None).await;
        assert_eq!(status, StatusCode::OK);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ocelgan"));
        cmd.args(["stats", "--json", "--log"]).arg(&path);
        if let Some(t) = query {
            cmd.args(["--object-type", t]);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end(), String::from_utf8(http).unwrap());
    }
}

#[tokio::test]
async fn toy_stats_relations_and_schema() {
    let app = app();
    let id = app.upload(generate_toy_linear(30, 600).export_json()).await;
    let (_, stats) = app.call("GET", &format!("/logs/{id}/stats"), None).await;
    assert_eq!(stats[0]["object_type"], "case");
    assert_eq!(stats[0]["count"], 30);
    assert_eq!(stats[0]["mean_len"], 4.0);
    assert_eq!(stats[0]["mean_dur"], 1800.0);

    let (status, rel) = app.call("GET", &format!("/logs/{id}/relations"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rel, json!({ "case": ["a", "b", "c", "d"] }));

    let (status, err) = app.call("GET", &format!("/logs/{id}/stats?object_type=nope"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["details"]["field"], "object_type");
}

#[tokio::test]
async fn schema_lists_attributes_per_type() {
    let app = app();
    let id = app.upload(generate(&GenConfig { num_orders: 20, ..Default::default() }).unwrap().export_json()).await;
    let (status, schema) = app.call("GET", &format!("/logs/{id}/schema"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(schema["object_attributes"]["packages"].as_array().unwrap().contains(&json!("weight")));
    assert!(schema["activities"].as_array().unwrap().contains(&json!("place order")));
}

#[tokio::test]
async fn bad_training_requests_are_rejected_up_front() {
    let app = app();
    let id = app.upload(generate_toy_linear(30, 600).export_json()).await;
    let cases = [
        (json!({ "log_id": id, "object_type": "nope" }), StatusCode::BAD_REQUEST, "unknown_object_type"),
        (json!({ "log_id": id, "object_type": "case", "attrs": ["x"] }), StatusCode::BAD_REQUEST, "unknown_attribute"),
        (
            json!({ "log_id": id, "object_type": "case", "config": { "gumbel_tau": 0.0 } }),
            StatusCode::BAD_REQUEST,
            "invalid_config",
        ),
        (json!({ "log_id": "0123456789abcdef", "object_type": "case" }), StatusCode::NOT_FOUND, "not_found"),
        (json!({ "object_type": "case" }), StatusCode::BAD_REQUEST, "invalid_request"),
    ];
    for (body, status, code) in cases {
        let (got, err) = app.call("POST", "/trainings", Some(body.clone())).await;
        assert_eq!((got, err["code"].as_str().unwrap()), (status, code), "{body}");
    }
}

#[tokio::test]
async fn training_job_lifecycle_and_prediction() {
    let app = app();
    let id = app.upload(generate_toy_linear(40, 600).export_json()).await;
    let req = json!({ "log_id": id, "object_type": "case", "config": small_config(40) });
    let (status, started) = app.call("POST", "/trainings", Some(req.clone())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job_id = started["job_id"].as_str().unwrap().to_string();

    let (status, busy) = app.call("POST", "/trainings", Some(req)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(busy["code"], "training_in_progress");
    assert_eq!(busy["details"]["job_id"], job_id.as_str());

    let (job, seen) = app.wait_for(&job_id).await;
    assert_eq!(job["status"], "done", "{job}");
    assert!(seen.windows(2).all(|w| w[0] <= w[1]), "{seen:?}");
    let epochs: Vec<u64> =
        job["progress"]["history"].as_array().unwrap().iter().map(|r| r["epoch"].as_u64().unwrap()).collect();
    assert_eq!(epochs, (1..=40).collect::<Vec<u64>>());
    assert_eq!(job["progress"]["epoch"], 40);
    let model_id = job["model_id"].as_str().unwrap().to_string();

    let (_, models) = app.call("GET", "/models", None).await;
    let listed = &models.as_array().unwrap()[0];
    assert_eq!(listed["model_id"], model_id.as_str());
    assert_eq!(listed["source"]["log_id"], id.as_str());
    assert!(listed["metrics"]["mean_similarity"].is_number());
    assert!(listed["metrics"]["mae_normalized"].is_number());

    let (status, detail) = app.call("GET", &format!("/models/{model_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(detail["schema"]["activity_vocab"], json!(["a", "b", "c", "d"]));

    let predict = format!("/models/{model_id}/predict");
    let prefix = json!({
        "object_type": "case",
        "events": [{ "activity": "a", "timestamp": "2021-01-04 08:00:00", "object-id": "case00001" }],
    });
    let (status, resp) = app.call("POST", &predict, Some(prefix)).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let mut last = "2021-01-04 08:00:00".to_string();
    for e in resp["suffix"].as_array().unwrap() {
        assert!(["a", "b", "c", "d"].contains(&e["activity"].as_str().unwrap()));
        let t = e["timestamp"].as_str().unwrap().to_string();
        assert!(t >= last, "{t} before {last}");
        last = t;
    }

    let bad = [
        (json!({ "object_type": "case", "events": [] }), "empty_prefix"),
        (json!({ "object_type": "case", "events": [{ "activity": "zz", "timestamp": "2021-01-04 08:00:00" }] }), "unknown_activity"),
        (json!({ "object_type": "case", "events": [{ "activity": "a", "timestamp": "yesterday" }] }), "invalid_timestamp"),
        (
            json!({ "object_type": "case", "events": [
                { "activity": "a", "timestamp": "2021-01-04 09:00:00" },
                { "activity": "b", "timestamp": "2021-01-04 08:00:00" },
            ] }),
            "unordered_events",
        ),
        (json!({ "object_type": "order", "events": [{ "activity": "a", "timestamp": "2021-01-04 08:00:00" }] }), "object_type_mismatch"),
    ];
    for (body, code) in bad {
        let (status, err) = app.call("POST", &predict, Some(body)).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{code}");
        assert_eq!(err["code"], code);
        assert!(err["details"]["field"].is_string(), "{err}");
    }

    let (status, again) = app.call("POST", "/trainings", Some(json!({ "log_id": id, "object_type": "case", "config": small_config(1) }))).await;
    assert_eq!(status, StatusCode::ACCEPTED, "a finished job no longer blocks: {again}");
}

#[tokio::test]
async fn spec_documents_every_route() {
    let app = app();
    let (status, doc) = app.call("GET", "/spec", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(doc["openapi"].as_str().unwrap().starts_with("3."));
    let paths = doc["paths"].as_object().unwrap();
    for p in [
        "/logs",
        "/logs/{id}/stats",
        "/logs/{id}/relations",
        "/logs/{id}/schema",
        "/trainings",
        "/trainings/{job_id}",
        "/models",
        "/models/{id}",
        "/models/{id}/predict",
        "/spec",
    ] {
        assert!(paths.contains_key(p), "{p} missing");
    }
}
