mod common;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use surgsafe::harness::{gen_scenario, golden_catalog, golden_spec_document, Scenario};
use surgsafe::model::{SessionReport, SimEvent};
use surgsafe::service::{serve, AppState, IngestResponse};

use common::*;

async fn start_session(client: &Client, base: &str, spec: &Value, seed: u64) -> String {
    let r = client
        .post(format!("{base}/session?seed={seed}"))
        .json(spec)
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    r.json::<Value>().await.unwrap()["sessionId"].as_str().unwrap().to_string()
}

async fn post_events(client: &Client, base: &str, id: &str, events: &[SimEvent]) -> reqwest::Response {
    client
        .post(format!("{base}/session/{id}/events"))
        .body(events_jsonl(events))
        .send()
        .await
        .unwrap()
}

fn golden_doc() -> Value {
    serde_json::to_value(golden_spec_document()).unwrap()
}

#[tokio::test]
async fn completion_endpoint() {
    let out = tempfile::tempdir().unwrap();
    let base = spawn_service(golden_catalog(), out.path()).await;
    let get = |q: &'static str| reqwest::get(format!("{base}/catalog/complete{q}"));
    let r = get("?prefix=Com").await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.json::<Vec<String>>().await.unwrap(), vec!["Common bile duct"]);
    let all = get("?prefix=").await.unwrap().json::<Vec<String>>().await.unwrap();
    assert_eq!(all.len(), 10);
    assert_eq!(get("").await.unwrap().status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn validate_endpoint() {
    let out = tempfile::tempdir().unwrap();
    let base = spawn_service(golden_catalog(), out.path()).await;
    let client = Client::new();
    let post = |body: String| client.post(format!("{base}/spec/validate")).body(body).send();
    let r = post(golden_doc().to_string()).await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.json::<Value>().await.unwrap(), json!([]));
    let mut bad = golden_doc();
    bad["steps"][1]["safety"] = json!("do not overstrech Cystic duct");
    let findings = post(bad.to_string()).await.unwrap().json::<Vec<Value>>().await.unwrap();
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0]["step"], json!(2));
    assert_eq!(post("{\"nope\": 1}".into()).await.unwrap().status(), StatusCode::BAD_REQUEST);
    let r = client.post(format!("{base}/session")).json(&bad).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn live_session_alerts_and_reports() {
    let out = tempfile::tempdir().unwrap();
    let base = spawn_service(golden_catalog(), out.path()).await;
    let client = Client::new();
    let id = start_session(&client, &base, &golden_doc(), 5).await;
    let events = gen_scenario(Scenario::ErrI).events;
    let (head, tail) = events.split_at(events.len() / 2);

    let r = post_events(&client, &base, &id, head).await;
    assert_eq!(r.status(), StatusCode::OK);
    let body: IngestResponse = r.json().await.unwrap();
    assert_eq!(body.accepted, head.len());
    assert_eq!(body.alerts.len(), 1);
    assert_eq!(body.violations.len(), 1);

    let r = client.get(format!("{base}/session/{id}/report")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);

    // A stale timestamp rejects the whole batch.
    let stale = vec![tail[0].clone(), SimEvent::new(0, tail[0].kind.clone())];
    assert_eq!(post_events(&client, &base, &id, &stale).await.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let r = client.post(format!("{base}/session/{id}/events")).body("{oops").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);

    assert_eq!(post_events(&client, &base, &id, tail).await.status(), StatusCode::OK);
    let end: SessionReport = client
        .post(format!("{base}/session/{id}/end"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(end.violations.len(), 1);
    let again: SessionReport = client
        .post(format!("{base}/session/{id}/end"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(again, end);
    assert_eq!(post_events(&client, &base, &id, tail).await.status(), StatusCode::CONFLICT);

    let base_name = &end.violations[0].snapshot_base_name;
    for (ext, ct) in [("svg", "image/svg+xml"), ("json", "application/json")] {
        let r = client
            .get(format!("{base}/session/{id}/snapshots/{base_name}.{ext}"))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        assert_eq!(r.headers()["content-type"], ct);
    }
    let r = client
        .get(format!("{base}/session/{id}/snapshots/report.json"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unknown_and_duplicate_sessions() {
    let out = tempfile::tempdir().unwrap();
    let base = spawn_service(golden_catalog(), out.path()).await;
    let client = Client::new();
    let r = post_events(&client, &base, "nope", &[]).await;
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let r = client.get(format!("{base}/session/nope/report")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    start_session(&client, &base, &golden_doc(), 9).await;
    let r = client
        .post(format!("{base}/session?seed=9"))
        .json(&golden_doc())
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
}

#[tokio::test]
async fn sessions_survive_a_restart_through_the_event_log() {
    let out = tempfile::tempdir().unwrap();
    let logs = tempfile::tempdir().unwrap();
    let client = Client::new();
    let events = gen_scenario(Scenario::ErrII).events;
    let (head, tail) = events.split_at(events.len() / 2);

    let spawn = || async {
        let state = AppState::new(golden_catalog(), out.path().to_path_buf(), Some(logs.path().to_path_buf()));
        let recovered = state.recover().await.unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = tokio::spawn(serve(listener, state));
        (format!("http://{addr}"), handle, recovered)
    };

    let (base, first, recovered) = spawn().await;
    assert!(recovered.is_empty());
    let id = start_session(&client, &base, &golden_doc(), 77).await;
    assert_eq!(post_events(&client, &base, &id, head).await.status(), StatusCode::OK);
    first.abort();

    let (base, _second, recovered) = spawn().await;
    assert_eq!(recovered, vec![id.clone()]);
    assert_eq!(post_events(&client, &base, &id, tail).await.status(), StatusCode::OK);
    let report: SessionReport = client
        .post(format!("{base}/session/{id}/end"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();

    // Same outcome as an uninterrupted replay of the full stream.
    let c = golden_catalog();
    let spec = surgsafe::specparse::parse_spec(&golden_spec_document(), &c).unwrap();
    let direct = tempfile::tempdir().unwrap();
    let traj = surgsafe::harness::Trajectory {
        header: surgsafe::harness::TrajectoryHeader {
            spec_ref: "spec.json".into(),
            catalog_ref: "catalog.json".into(),
            session_seed: Some(77),
        },
        events: events.clone(),
    };
    let expected = surgsafe::harness::replay_events(spec, &c, &traj, None, Some(77), direct.path()).unwrap();
    assert_eq!(masked(&report), masked(&expected));
}
