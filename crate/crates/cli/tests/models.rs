mod common;

use flatlift_core::backends::{BackendCallRecord, Role};
use flatlift_core::fixtures;
use flatlift_core::model::{content_hash, encode_image};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use tempfile::TempDir;

fn sprite() -> Vec<u8> {
    encode_image(&fixtures::disk_sprite(64, 22.0, [200, 60, 40]))
}

#[test]
fn fixture_server_replays_every_role_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let rec = common::record(&sprite(), &dir.path().join("rec")).unwrap();
    let base = format!("http://{}", flatlift::spawn_background(common::fixture_router(rec.fixtures.clone())).unwrap());
    let mut roles = common::check_wire(&rec, &base).unwrap();
    roles.sort();
    assert_eq!(roles, Role::ALL.to_vec());

    let (m, ply) = common::run_over_http(&sprite(), &base, &dir.path().join("http")).unwrap();
    assert_eq!(ply, rec.final_ply);
    let calls: Vec<&BackendCallRecord> = m.backend_calls.iter().map(|c| &c.record).collect();
    assert_eq!(calls.len(), rec.exchanges.len());
    for (c, ex) in calls.iter().zip(&rec.exchanges) {
        assert_eq!(c.role, ex.role);
        assert_eq!(c.request_hash, content_hash(&ex.request));
        assert_eq!(c.response_hash, Some(content_hash(&ex.response)));
        assert!(c.backend_id.starts_with("http"), "{}", c.backend_id);
    }
}

#[test]
fn unknown_roles_and_requests_are_rejected() {
    let dir = TempDir::new().unwrap();
    let rec = common::record(&sprite(), &dir.path().join("rec")).unwrap();
    let base = format!("http://{}", flatlift::spawn_background(common::fixture_router(rec.fixtures)).unwrap());
    let client = Client::new();
    assert_eq!(client.get(format!("{base}/health")).send().unwrap().status(), StatusCode::OK);
    let post = |path: &str, body: &str| client.post(format!("{base}{path}")).body(body.to_string()).send().unwrap().status();
    assert_eq!(post("/v1/paint", "{}"), StatusCode::NOT_FOUND);
    assert_eq!(post("/v1/caption", "{\"image_png_b64\": \"\"}"), StatusCode::UNPROCESSABLE_ENTITY);
}
