#![allow(dead_code)]

use std::path::PathBuf;

use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use persona_service::{router, AppState, ServiceConfig};
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// The reference creation request, with the comma it is missing after
/// `"occupation"` restored so that it parses as JSON.
pub const EMILY_CREATE_REQUEST: &str = r#"{
  "theme": "Employment",
  "profile": {
    "name": "Emily",
    "age": 34,
    "occupation": "School assistant",
    "Medical Condition": "Down Syndrome"
  }
}"#;

pub const EMILY_CHAT_REQUEST: &str = r#"{
  "context": [
    {
      "role": "system",
      "content": "You are Emily, a school assistant with Down syndrome. Despite your condition, you are passionate about your job and dedicated to your responsibilities."
    },
    {
      "role": "assistant",
      "content": "Hello, I'm Emily. How can I assist you today?"
    },
    {
      "role": "user",
      "content": "What motivates you to learn new skills, especially those related to your job?"
    }
  ]
}"#;

pub const MOTIVATION_QUESTION: &str = "What motivates you to learn new skills, especially those related to your job?";

pub struct TestApp {
    pub router: Router,
    pub state: AppState,
    pub store_dir: TempDir,
}

pub fn stub_app(seed: u64) -> TestApp {
    let store_dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig::stub(data_dir(), store_dir.path(), seed);
    let state = AppState::from_config(&config).unwrap();
    TestApp {
        router: router(state.clone()),
        state,
        store_dir,
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub raw: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.raw).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.raw)))
    }

    pub fn header(&self, name: &str) -> Option<String> {
        self.headers.get(name).map(|v| v.to_str().unwrap().to_string())
    }

    /// `(code, field)` of an error envelope.
    pub fn error(&self) -> (String, Option<String>) {
        let v = self.json();
        let e = &v["error"];
        (
            e["code"].as_str().unwrap().to_string(),
            e["field"].as_str().map(str::to_string),
        )
    }
}

pub async fn call(router: &Router, method: Method, uri: &str, body: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let res = router.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let raw = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, headers, raw }
}

pub async fn get(router: &Router, uri: &str) -> Reply {
    call(router, Method::GET, uri, None).await
}

pub async fn post(router: &Router, uri: &str, body: &str) -> Reply {
    call(router, Method::POST, uri, Some(body)).await
}

/// Sorted keys of a JSON object body.
pub fn raw_keys(raw: &[u8]) -> Vec<String> {
    let v: serde_json::Map<String, Value> = serde_json::from_slice(raw).unwrap();
    v.keys().cloned().collect()
}

pub async fn create_emily(router: &Router) -> String {
    let r = post(router, "/api/personas", EMILY_CREATE_REQUEST).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.raw));
    r.header("x-persona-id").unwrap()
}

pub fn persona_chat_body(persona_id: &str, conversation_id: Option<&str>, context: Value) -> String {
    let mut body = serde_json::json!({ "persona_id": persona_id, "context": context });
    if let Some(c) = conversation_id {
        body["conversation_id"] = c.into();
    }
    body.to_string()
}
