use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use cardtune::composer::{PromptParagraph, REQUESTS_HEADER};
use cardtune::oracle::{mock_complete, Backend, BackendError};
use cardtune_service::{app, load_snapshot, write_snapshot, ServiceConfig};
use cardtune_testkit::fixtures::{fixtures, two_neighbor_registry};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(router: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn card(name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(fixtures().join("cards").join(format!("{name}.json"))).unwrap()).unwrap()
}

fn cards(data: &str, model: &str) -> Value {
    json!({"data_card": card(data), "model_card": card(model)})
}

async fn session(router: &Router) -> String {
    let (status, body) = call(router, Method::POST, "/v1/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["id"].as_str().unwrap().to_string()
}

async fn recommended(router: &Router, data: &str, model: &str) -> (String, Value) {
    let id = session(router).await;
    let (s, _) = call(
        router,
        Method::POST,
        &format!("/v1/sessions/{id}/cards"),
        Some(cards(data, model)),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let (s, body) = call(
        router,
        Method::POST,
        &format!("/v1/sessions/{id}/recommend"),
        Some(json!({})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{body}");
    (id, body)
}

fn mock_router() -> Router {
    app(ServiceConfig::default()).1
}

#[tokio::test]
async fn health_reports_ok() {
    let (s, body) = call(&mock_router(), Method::GET, "/v1/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok"}));
}

#[tokio::test]
async fn sessions_start_empty_with_distinct_ids() {
    let router = mock_router();
    let a = session(&router).await;
    let b = session(&router).await;
    assert_ne!(a, b);
    assert_eq!(a.len(), 32);
    assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
    let (s, body) = call(&router, Method::GET, &format!("/v1/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["state"], "empty");
}

#[tokio::test]
async fn thousand_sessions_never_collide() {
    let (state, _) = app(ServiceConfig::default());
    let ids: std::collections::HashSet<String> = (0..1000).map(|_| state.create_session()).collect();
    assert_eq!(ids.len(), 1000);
    assert_eq!(state.len(), 1000);
}

#[tokio::test]
async fn coco_cards_compose_the_golden_prompt() {
    let router = mock_router();
    let id = session(&router).await;
    let (s, body) = call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/cards"),
        Some(cards("coco", "detector")),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["state"], "cards_set");
    let prompt: PromptParagraph = serde_json::from_value(body["prompt"].clone()).unwrap();
    let golden = std::fs::read_to_string(fixtures().join("prompts/coco_detector.txt")).unwrap();
    assert_eq!(prompt.text, golden);
}

#[tokio::test]
async fn malformed_card_reports_field_path() {
    let router = mock_router();
    let id = session(&router).await;
    let mut body = cards("coco", "detector");
    body["data_card"]["input_type"] = json!("video");
    let (s, err) = call(&router, Method::POST, &format!("/v1/sessions/{id}/cards"), Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["code"], "schema_violation");
    assert_eq!(err["error"]["field"], "data_card.input_type");

    let mut body = cards("coco", "detector");
    body["model_card"]["arch_hparams"]["epochs"]["default"] = json!(1000);
    let (s, err) = call(&router, Method::POST, &format!("/v1/sessions/{id}/cards"), Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["field"], "model_card.arch_hparams.epochs.default");

    let (_, state) = call(&router, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(state["state"], "empty");
}

#[tokio::test]
async fn resubmitting_cards_replaces_them() {
    let router = mock_router();
    let id = session(&router).await;
    call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/cards"),
        Some(cards("coco", "detector")),
    )
    .await;
    let (s, body) = call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/cards"),
        Some(cards("nq", "dpr")),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let golden = std::fs::read_to_string(fixtures().join("prompts/nq_dpr.txt")).unwrap();
    assert_eq!(body["prompt"]["text"], golden);
    let (_, state) = call(&router, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(state["data_card"]["name"], "nq");
}

#[tokio::test]
async fn recommend_before_cards_is_wrong_state() {
    let router = mock_router();
    let id = session(&router).await;
    let (s, err) = call(&router, Method::POST, &format!("/v1/sessions/{id}/recommend"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "wrong_state");
    let (s, err) = call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/requests"),
        Some(json!({"request": "fps >= 10"})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "wrong_state");
}

#[tokio::test]
async fn unknown_session_is_404() {
    let router = mock_router();
    for (m, uri) in [
        (Method::GET, "/v1/sessions/deadbeef"),
        (Method::POST, "/v1/sessions/deadbeef/recommend"),
        (Method::POST, "/v1/sessions/deadbeef/cards"),
    ] {
        let body = (m == Method::POST).then(|| cards("coco", "detector"));
        let (s, err) = call(&router, m, uri, body).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(err["error"]["code"], "unknown_session");
    }
}

#[tokio::test]
async fn mock_recommendation_is_deterministic() {
    let router = mock_router();
    let (id, first) = recommended(&router, "coco", "detector").await;
    assert_eq!(first["state"], "recommended");
    assert_eq!(first["predicted_log"]["entries"].as_array().unwrap().len(), 12);
    let (_, second) = recommended(&router, "coco", "detector").await;
    assert_eq!(first, second);
    let (s, again) = call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/recommend"),
        Some(json!({})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first, again);
    let (_, state) = call(&router, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(state["history"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn constraint_loop_revises_then_rejects_unsatisfiable() {
    let router = mock_router();
    let (id, _) = recommended(&router, "nq", "dpr").await;
    let uri = format!("/v1/sessions/{id}/requests");

    let (s, revised) = call(&router, Method::POST, &uri, Some(json!({"request": "fps >= 10"}))).await;
    assert_eq!(s, StatusCode::OK, "{revised}");
    assert_eq!(revised["request"]["kind"], "constraint");
    assert!(revised["tune_result"]["best_reported_metrics"]["fps"].as_f64().unwrap() >= 10.0);
    assert_eq!(revised["predicted_log"]["entries"].as_array().unwrap().len(), 12);

    let (_, before) = call(&router, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    let (s, err) = call(
        &router,
        Method::POST,
        &uri,
        Some(json!({"request": "val_metric >= 0.99"})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["code"], "all_candidates_filtered");
    let (_, after) = call(&router, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(before, after);
    assert_eq!(after["state"], "recommended");
    assert_eq!(after["constraints"].as_array().unwrap().len(), 1);

    let (s, _) = call(
        &router,
        Method::POST,
        &uri,
        Some(json!({"request": "val_metric >= 0.5"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn free_text_lands_verbatim_in_requests_span() {
    let router = mock_router();
    let (id, _) = recommended(&router, "coco", "detector").await;
    let text = "prefer a smaller backbone for edge devices";
    let (s, body) = call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/requests"),
        Some(json!({"request": text})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["request"]["kind"], "free_text");
    let prompt: PromptParagraph = serde_json::from_value(body["prompt"].clone()).unwrap();
    let range = prompt.section_range(REQUESTS_HEADER).unwrap();
    assert!(prompt.text[range].contains(text));
}

#[tokio::test]
async fn bad_parameters_are_400() {
    let router = mock_router();
    let id = session(&router).await;
    call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/cards"),
        Some(cards("coco", "detector")),
    )
    .await;
    for body in [
        json!({"k": 0}),
        json!({"tau": 1.5}),
        json!({"budget": 0}),
        json!({"bogus": 1}),
        json!({"backend": "gpt"}),
    ] {
        let (s, err) = call(
            &router,
            Method::POST,
            &format!("/v1/sessions/{id}/recommend"),
            Some(body.clone()),
        )
        .await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body} -> {err}");
    }
    let (_, state) = call(&router, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(state["state"], "cards_set");
}

#[tokio::test]
async fn registry_records_drive_transfer() {
    let router = mock_router();
    let reg = two_neighbor_registry();
    let vit = card("vit");
    for (i, record) in reg.records().iter().enumerate() {
        let mut body = json!({"record": record});
        if i == 0 {
            body["model_card"] = vit.clone();
        }
        let (s, resp) = call(&router, Method::POST, "/v1/registry/records", Some(body)).await;
        assert_eq!(s, StatusCode::CREATED, "{resp}");
    }
    let (s, listed) = call(&router, Method::GET, "/v1/registry/records", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(listed["records"].as_array().unwrap().len(), 2);

    let (_, rec) = recommended(&router, "new", "vit").await;
    let seed = &rec["seed"];
    assert_eq!(seed["source"], "transfer");
    let weights: Vec<(String, f64)> = seed["neighbor_summary"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| {
            (
                n["dataset"].as_str().unwrap().to_string(),
                n["weight"].as_f64().unwrap(),
            )
        })
        .collect();
    assert_eq!(weights.len(), 2);
    assert_eq!(weights[0].0, "A");
    assert!((weights[0].1 - 0.6).abs() < 1e-12);
    let lr = seed["config"]["learning_rate"].as_f64().unwrap();
    assert!((lr / 10f64.powf(-4.4) - 1.0).abs() < 1e-9);
}

#[tokio::test]
async fn registry_rejects_unknown_model_and_bad_cards() {
    let router = mock_router();
    let record = two_neighbor_registry().records()[0].clone();
    let (s, err) = call(
        &router,
        Method::POST,
        "/v1/registry/records",
        Some(json!({"record": record})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["code"], "unknown_model_card");

    let mut body = json!({"record": record, "model_card": card("vit")});
    body["record"]["data_card"]["eval_metrics"] = json!([]);
    let (s, err) = call(&router, Method::POST, "/v1/registry/records", Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["field"], "record.data_card.eval_metrics");
}

#[tokio::test]
async fn registry_directory_persists_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = || ServiceConfig {
        registry_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let router = app(config()).1;
    let record = two_neighbor_registry().records()[0].clone();
    let (s, _) = call(
        &router,
        Method::POST,
        "/v1/registry/records",
        Some(json!({"record": record, "model_card": card("vit")})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let (_, listed) = call(&app(config()).1, Method::GET, "/v1/registry/records", None).await;
    assert_eq!(listed["records"][0]["data_card"]["name"], "A");
}

/// Mock that takes its time, to hold a session busy.
struct Slow(AtomicUsize);

impl Backend for Slow {
    fn id(&self) -> &str {
        "slow-mock"
    }

    fn complete(&self, prompt: &PromptParagraph) -> Result<String, BackendError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(40));
        mock_complete(&prompt.text)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_request_on_one_session_is_busy() {
    let slow = Arc::new(Slow(AtomicUsize::new(0)));
    let (_, router) = app(ServiceConfig {
        http_backend: Some(slow.clone()),
        ..ServiceConfig::default()
    });
    let id = session(&router).await;
    call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/cards"),
        Some(cards("coco", "detector")),
    )
    .await;
    let other = session(&router).await;

    let uri = format!("/v1/sessions/{id}/recommend");
    let first = tokio::spawn({
        let router = router.clone();
        let uri = uri.clone();
        async move {
            call(
                &router,
                Method::POST,
                &uri,
                Some(json!({"backend": "http", "budget": 10})),
            )
            .await
        }
    });
    while slow.0.load(Ordering::SeqCst) == 0 {
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    let (s, err) = call(&router, Method::POST, &uri, Some(json!({"backend": "http"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "session_busy");
    // other sessions are unaffected
    let (s, body) = call(&router, Method::GET, &format!("/v1/sessions/{other}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["state"], "empty");

    let (s, _) = first.await.unwrap();
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call(&router, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn unconfigured_http_backend_is_502() {
    if std::env::var_os(cardtune::oracle::API_URL_ENV).is_some() {
        return;
    }
    let router = mock_router();
    let id = session(&router).await;
    call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/cards"),
        Some(cards("coco", "detector")),
    )
    .await;
    let (s, err) = call(
        &router,
        Method::POST,
        &format!("/v1/sessions/{id}/recommend"),
        Some(json!({"backend": "http"})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
    assert_eq!(err["error"]["code"], "backend_not_configured");
}

#[tokio::test]
async fn snapshot_round_trips_sessions() {
    let (state, router) = app(ServiceConfig::default());
    recommended(&router, "coco", "detector").await;
    session(&router).await;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.json");
    write_snapshot(&path, &state.sessions()).unwrap();
    let restored = load_snapshot(&path).unwrap();
    assert_eq!(restored, state.sessions());
    assert!(load_snapshot(&dir.path().join("missing.json")).unwrap().is_empty());
}
