use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use prodintent_annotation::server::router;
use prodintent_annotation::{fleiss_kappa, AnnotationItem, ItemClick, LabelStore, Workspace};
use serde_json::{json, Value};
use tower::ServiceExt;

fn items() -> Vec<AnnotationItem> {
    (0..4)
        .map(|i| AnnotationItem {
            query_id: format!("q{i}"),
            query: format!("buy thing {i}"),
            clicks: vec![ItemClick { url: format!("https://shop.example/{i}"), snippet: "deal".into() }],
            topic: i % 2,
        })
        .collect()
}

fn app(dir: &tempfile::TempDir) -> Router {
    let store = LabelStore::open(&dir.path().join("labels.jsonl")).unwrap();
    let ws = Workspace::new(items(), ["a1", "a2"], store).unwrap();
    router(Arc::new(Mutex::new(ws)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 20).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn label(app: &Router, annotator: &str, q: &str, l: &str) -> (StatusCode, Value) {
    call(app, "POST", "/api/labels", Some(json!({"annotator": annotator, "query_id": q, "label": l}).to_string())).await
}

#[tokio::test]
async fn next_item_matches_queue_order() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (s, v) = call(&app, "GET", "/api/items/next?annotator=a1", None).await;
    assert_eq!(s, StatusCode::OK);
    // Topic 0 holds q0 and q2; q0 sorts first.
    assert_eq!(v["item"]["query_id"], "q0");
    assert_eq!(v["item"]["clicks"][0]["snippet"], "deal");
    let (s, _) = call(&app, "GET", "/api/items/next?annotator=ghost", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn label_then_agreement_reflects_it() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (_, a) = call(&app, "GET", "/api/agreement", None).await;
    assert_eq!(a["kappa"], Value::Null);

    let (s, ack) = label(&app, "a1", "q0", "Transactional").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ack["status"], "partially_labeled");
    let (_, ack) = label(&app, "a2", "q0", "Transactional").await;
    assert_eq!(ack["status"], "complete");
    label(&app, "a1", "q1", "Comparison").await;
    label(&app, "a2", "q1", "Support").await;

    let (_, a) = call(&app, "GET", "/api/agreement", None).await;
    let expected = fleiss_kappa(&[vec![0, 0, 0, 0, 2, 0], vec![1, 0, 0, 1, 0, 0]], 2).unwrap();
    assert_eq!(a["n_items"], 2);
    assert!((a["kappa"].as_f64().unwrap() - expected).abs() < 1e-12);

    let (_, p) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(p["complete"], 2);
    assert_eq!(p["per_annotator"]["a1"], 2);

    let (_, v) = call(&app, "GET", "/api/items/next?annotator=a1", None).await;
    assert_eq!(v["item"]["query_id"], "q2");
    let (s, item) = call(&app, "GET", "/api/items/q1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(item["status"], "complete");
    assert_eq!(item["query"], "buy thing 1");
}

#[tokio::test]
async fn malformed_posts_leave_store_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let path = dir.path().join("labels.jsonl");
    let (s, _) = call(&app, "POST", "/api/labels", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/api/labels", Some(json!({"annotator": "a1"}).to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = label(&app, "a1", "q0", "Shopping").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = label(&app, "a1", "missing", "Skip").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    let (s, _) = call(&app, "GET", "/api/items/missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn restart_restores_state() {
    let dir = tempfile::tempdir().unwrap();
    let app1 = app(&dir);
    label(&app1, "a1", "q0", "Navigational").await;
    label(&app1, "a2", "q0", "Navigational").await;
    label(&app1, "a1", "q2", "Skip").await;
    let (_, p1) = call(&app1, "GET", "/api/progress", None).await;
    let (_, k1) = call(&app1, "GET", "/api/agreement", None).await;
    drop(app1);
    let app2 = app(&dir);
    assert_eq!(call(&app2, "GET", "/api/progress", None).await.1, p1);
    assert_eq!(call(&app2, "GET", "/api/agreement", None).await.1, k1);
    assert_eq!(call(&app2, "GET", "/api/items/next?annotator=a1", None).await.1["item"]["query_id"], "q1");
}

#[tokio::test]
async fn serves_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let store = LabelStore::open(&dir.path().join("labels.jsonl")).unwrap();
    let ws = Arc::new(Mutex::new(Workspace::new(items(), ["a1"], store).unwrap()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(ws)).await.unwrap() });
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream.write_all(b"GET /api/progress HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    assert!(buf.contains("\"total\":4"));
}

#[tokio::test]
async fn scripted_three_annotator_session() {
    let dir = tempfile::tempdir().unwrap();
    let queue: Vec<AnnotationItem> = (0..12)
        .map(|i| AnnotationItem { query_id: format!("s{i:02}"), query: format!("query {i}"), clicks: vec![], topic: i % 4 })
        .collect();
    let store = LabelStore::open(&dir.path().join("labels.jsonl")).unwrap();
    let annotators = ["ann", "bob", "cat"];
    let app = router(Arc::new(Mutex::new(Workspace::new(queue, annotators, store).unwrap())));
    let names = ["Comparison", "Informational", "Navigational", "Support", "Transactional", "NotProduct"];

    // Each annotator drains their own queue; "cat" disagrees on every third item.
    let mut table = Vec::new();
    for (a, who) in annotators.iter().enumerate() {
        let mut seen = 0;
        loop {
            let (_, v) = call(&app, "GET", &format!("/api/items/next?annotator={who}"), None).await;
            let Some(q) = v["item"]["query_id"].as_str().map(str::to_string) else { break };
            let i: usize = q[1..].parse().unwrap();
            let mut choice = i % 6;
            if a == 2 && i % 3 == 0 {
                choice = (choice + 1) % 6;
            }
            let (s, _) = label(&app, who, &q, names[choice]).await;
            assert_eq!(s, StatusCode::OK);
            seen += 1;
        }
        assert_eq!(seen, 12);
    }
    for i in 0..12 {
        let mut row = vec![0; 6];
        row[i % 6] += 2;
        row[if i % 3 == 0 { (i + 1) % 6 } else { i % 6 }] += 1;
        table.push(row);
    }

    let (_, p) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(p["complete"], 12);
    assert_eq!(p["pending"], 0);
    let lines = std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 36);

    let (_, a) = call(&app, "GET", "/api/agreement", None).await;
    let expected = fleiss_kappa(&table, 3).unwrap();
    assert!((a["kappa"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!(expected < 1.0 && expected > 0.0);
}
