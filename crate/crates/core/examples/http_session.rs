//! Starts the service in-process and drives one session over HTTP.
//!
//! cargo run --example http_session

use surgsafe::harness::{gen_scenario, golden_catalog, golden_spec_document, Scenario};
use surgsafe::service::{serve, AppState};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let out = std::env::temp_dir().join("surgsafe-http");
    let state = AppState::new(golden_catalog(), out, None);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(serve(listener, state));
    let client = reqwest::Client::new();

    let names: Vec<String> = client.get(format!("{base}/catalog/complete?prefix=cy")).send().await?.json().await?;
    println!("complete cy -> {names:?}");

    let created: serde_json::Value = client
        .post(format!("{base}/session?seed=3"))
        .json(&golden_spec_document())
        .send()
        .await?
        .json()
        .await?;
    let id = created["sessionId"].as_str().unwrap().to_string();
    println!("session {id}");

    let body: String = gen_scenario(Scenario::ErrI)
        .events
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    let ingest: serde_json::Value = client.post(format!("{base}/session/{id}/events")).body(body).send().await?.json().await?;
    println!("alerts: {}", ingest["alerts"]);

    let report: serde_json::Value = client.post(format!("{base}/session/{id}/end")).send().await?.json().await?;
    print!("{}", report["messageText"].as_str().unwrap_or_default());
    Ok(())
}
