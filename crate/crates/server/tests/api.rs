use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use ppc_core::catalog::load_builtin_catalog;
use ppc_core::composer::compile;
use ppc_core::llm::{record, replay, Cassette, ChatProvider, ScriptedProvider};
use ppc_core::pdl::parse_pipeline;
use ppc_core::session::Session;
use ppc_server::{router, serve, AppState};

const PDL: &str =
    "pipeline api\n  context requirements\n  use api-generator with format=\"OpenAPI\"\n  use api-simulator\nend\n";
const REQS: &str = "- As a user, I can list prompts.\n- As a user, I can delete my prompt.\n";

fn replies() -> Vec<&'static str> {
    vec![
        "```yaml\nopenapi: 3.0.0\npaths:\n  /prompts:\n    get: {}\n```",
        "Ready.",
        "```http\nHTTP/1.1 200 OK\nContent-Type: application/json\n\n[]\n```",
        "HTTP/1.1 404 Not Found",
    ]
}

fn state(provider: impl ChatProvider + 'static) -> Arc<AppState> {
    Arc::new(AppState::new(Arc::new(provider), None).with_ids(|| "s-1".to_string()))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

fn create_body() -> Value {
    json!({ "pdl_text": PDL, "context_files": { "requirements": REQS } })
}

#[tokio::test]
async fn catalog_endpoints() {
    let app = router(state(ScriptedProvider::new(Vec::<String>::new())));
    let (status, all) = call(&app, "GET", "/api/catalog", None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = all.as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), load_builtin_catalog().patterns().len());
    let expected: Vec<String> = load_builtin_catalog().patterns().iter().map(|p| p.id.clone()).collect();
    assert_eq!(ids, expected);

    let (status, one) = call(&app, "GET", "/api/catalog/api-simulator", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(one["id"], "api-simulator");

    let (status, err) = call(&app, "GET", "/api/catalog/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not-found");
}

#[tokio::test]
async fn check_reports_diagnostics() {
    let app = router(state(ScriptedProvider::new(Vec::<String>::new())));
    let (status, ok) = call(&app, "POST", "/api/pipelines/check", Some(json!({ "pdl_text": PDL }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ok["ok"], true);

    let bad = "pipeline x\n  use no-such-pattern\nend\n";
    let (status, res) = call(&app, "POST", "/api/pipelines/check", Some(json!({ "pdl_text": bad }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(res["ok"], false);
    assert!(!res["diagnostics"].as_array().unwrap().is_empty());

    let (status, _) = call(&app, "POST", "/api/pipelines/check", Some(json!({ "text": PDL }))).await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn session_lifecycle() {
    let app = router(state(ScriptedProvider::new(replies())));
    let (status, created) = call(&app, "POST", "/api/sessions", Some(create_body())).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["session_id"], "s-1");
    assert_eq!(created["status"], json!("interactive"));
    assert!(created["setup_turns"].as_array().unwrap().len() >= 4);

    let (status, turn) =
        call(&app, "POST", "/api/sessions/s-1/turns", Some(json!({ "text": "GET /prompts HTTP/1.1" }))).await;
    assert_eq!(status, StatusCode::OK, "{turn}");
    assert!(turn["reply"].as_str().unwrap().contains("200 OK"));
    assert!(turn["new_artifacts"].as_array().unwrap().iter().any(|a| a["kind"] == "http-response"));

    let (_, artifacts) = call(&app, "GET", "/api/sessions/s-1/artifacts", None).await;
    let kinds: Vec<&str> = artifacts.as_array().unwrap().iter().map(|a| a["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"openapi-spec") && kinds.contains(&"http-response"), "{kinds:?}");

    let (status, done) = call(&app, "POST", "/api/sessions/s-1/turns", Some(json!({ "text": "/done" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(done["status"], json!("closed"));

    let (status, err) = call(&app, "POST", "/api/sessions/s-1/turns", Some(json!({ "text": "more" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "session-closed");

    let (status, transcript) = call(&app, "GET", "/api/sessions/s-1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(transcript["session_id"], "s-1");

    let (status, _) = call(&app, "GET", "/api/sessions/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_pipeline_is_422() {
    let app = router(state(ScriptedProvider::new(Vec::<String>::new())));
    let body = json!({ "pdl_text": "pipeline x\n  use no-such-pattern\nend\n" });
    let (status, err) = call(&app, "POST", "/api/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "invalid-pipeline");
    assert!(!err["diagnostics"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn provider_failure_is_502_and_retry_resends() {
    let provider = Arc::new(ScriptedProvider::from_results([
        Ok(replies()[0].to_string()),
        Ok(replies()[1].to_string()),
        Err(ppc_core::llm::LlmError::Timeout),
        Ok(replies()[2].to_string()),
    ]));
    let st = Arc::new(AppState::new(provider.clone(), None).with_ids(|| "s-1".to_string()));
    let app = router(st);
    let (status, _) = call(&app, "POST", "/api/sessions", Some(create_body())).await;
    assert_eq!(status, StatusCode::CREATED);
    let turn = json!({ "text": "GET /prompts HTTP/1.1" });
    let (status, err) = call(&app, "POST", "/api/sessions/s-1/turns", Some(turn.clone())).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(err["code"], "provider-failure");

    let (status, _) = call(&app, "POST", "/api/sessions/s-1/turns", Some(json!({ "text": "other" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, ok) = call(&app, "POST", "/api/sessions/s-1/turns", Some(turn)).await;
    assert_eq!(status, StatusCode::OK, "{ok}");
    assert_eq!(provider.remaining(), 0);
}

#[tokio::test]
async fn bindings_fill_unbound_slots() {
    let provider = Arc::new(ScriptedProvider::new(["ok", "ok", "ok"]));
    let app = router(Arc::new(AppState::new(provider.clone(), None)));
    let body = json!({
        "pdl_text": "pipeline p\n  use principled-code\nend\n",
        "bindings": { "principled-code": { "principle": "the DRY principle" } },
    });
    let (status, created) = call(&app, "POST", "/api/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let first = &provider.calls()[0];
    assert!(first.iter().any(|m| m.content.contains("the DRY principle")));
}

#[tokio::test]
async fn transcripts_persist_under_workdir() {
    let dir = tempfile::tempdir().unwrap();
    let st = AppState::new(Arc::new(ScriptedProvider::new(replies())), Some(dir.path().into())).with_ids(|| "p".into());
    let app = router(Arc::new(st));
    call(&app, "POST", "/api/sessions", Some(create_body())).await;
    call(&app, "POST", "/api/sessions/p/turns", Some(json!({ "text": "GET /prompts HTTP/1.1" }))).await;
    let saved = Session::load(&dir.path().join("sessions/p.json")).unwrap();
    assert_eq!(saved.session_id, "p");
    assert!(saved.turns.iter().any(|t| t.content == "GET /prompts HTTP/1.1"));
}

#[tokio::test]
async fn cors_allows_loopback_only() {
    let app = router(state(ScriptedProvider::new(Vec::<String>::new())));
    for (origin, allowed) in [("http://localhost:5173", true), ("http://evil.example", false)] {
        let req = Request::builder().uri("/api/catalog").header(header::ORIGIN, origin).body(Body::empty()).unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let got = resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).map(|v| v.to_str().unwrap().to_string());
        assert_eq!(got.is_some(), allowed, "{origin}");
    }
}

/// The same cassette replayed through real HTTP and through the library
/// must give the same transcript.
#[tokio::test(flavor = "multi_thread")]
async fn http_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("c.json");
    let turns = ["GET /prompts HTTP/1.1", "GET /missing HTTP/1.1", "/done"];

    let catalog = load_builtin_catalog();
    let (spec, _) = parse_pipeline(PDL);
    let context = BTreeMap::from([("requirements".to_string(), REQS.to_string())]);
    let plan = compile(&spec.unwrap(), &catalog, &context).unwrap();
    let recorder = record(ScriptedProvider::new(replies()), &cassette).unwrap();
    let mut local = Session::create(plan, "same").unwrap();
    local.advance(&recorder).unwrap();
    for t in turns {
        local.user_turn(&recorder, t).unwrap();
    }

    let provider = replay(Cassette::load(&cassette).unwrap()).unwrap().with_model("scripted");
    let st = Arc::new(AppState::new(Arc::new(provider), None).with_ids(|| "same".into()));
    let (tx, rx) = tokio::sync::oneshot::channel();
    tokio::spawn(serve(ppc_server::loopback(0), st, move |addr| tx.send(addr).unwrap()));
    let addr = rx.await.unwrap();

    let remote = tokio::task::spawn_blocking(move || {
        let base = format!("http://{addr}");
        let agent = ureq::agent();
        agent.post(&format!("{base}/api/sessions")).send_json(create_body()).unwrap();
        for t in turns {
            agent.post(&format!("{base}/api/sessions/same/turns")).send_json(json!({ "text": t })).unwrap();
        }
        agent.get(&format!("{base}/api/sessions/same")).call().unwrap().body_mut().read_json::<Value>().unwrap()
    })
    .await
    .unwrap();

    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("meta");
        v
    };
    let local_json = strip(serde_json::to_value(&local).unwrap());
    assert_eq!(strip(remote), local_json);
}
