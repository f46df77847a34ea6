#![allow(dead_code)]

use std::path::PathBuf;

use quickcue::{router, AppState, ServiceConfig};

pub fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

pub fn schema(name: &str) -> serde_json::Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Serve `cfg` on an ephemeral local port; returns the base URL.
pub async fn spawn(cfg: &ServiceConfig) -> String {
    let pipeline = cfg.build_pipeline().unwrap();
    let app = router(
        AppState::new(pipeline, cfg.max_reviews_per_request.get()),
        &cfg.cors_allowed_origins,
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

pub async fn post(base: &str, path: &str, body: impl Into<reqwest::Body>) -> (u16, String) {
    let resp = reqwest::Client::new()
        .post(format!("{base}{path}"))
        .header("content-type", "application/json")
        .body(body)
        .send()
        .await
        .unwrap();
    (resp.status().as_u16(), resp.text().await.unwrap())
}

/// Drop the `generated_at` line so digests from different moments compare equal.
pub fn without_timestamp(doc: &str) -> String {
    doc.lines()
        .filter(|l| !l.trim_start().starts_with("\"generated_at\""))
        .collect::<Vec<_>>()
        .join("\n")
}
