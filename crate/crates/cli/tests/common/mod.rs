//! Records builtin model exchanges and replays them against a fixture
//! server over HTTP.

#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, Mutex};

use flatlift_core::backends::wire::{self, *};
use flatlift_core::backends::{
    Backends, BackendEndpoint, BuiltinTransport, FixtureSet, FixtureTransport, RecordingTransport, Role, Transport,
    TransportError,
};
use flatlift_core::model::{content_hash, ContentHash};
use flatlift_core::pipeline::{Pipeline, PipelineConfig, RunManifest, RunOptions};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub struct Exchange {
    pub role: Role,
    pub request: Vec<u8>,
    pub response: Vec<u8>,
}

/// Keeps full request and response bodies.
pub struct Capture {
    inner: Arc<dyn Transport>,
    pub log: Mutex<Vec<Exchange>>,
}

impl Capture {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl Transport for Capture {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn post(&self, role: Role, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        let response = self.inner.post(role, body)?;
        self.log.lock().unwrap().push(Exchange { role, request: body.to_vec(), response: response.clone() });
        Ok(response)
    }
}

pub struct Recording {
    pub exchanges: Vec<Exchange>,
    pub fixtures: FixtureSet,
    pub final_ply: Vec<u8>,
}

/// Runs the builtin pipeline once, keeping every exchange.
pub fn record(input: &[u8], work: &Path) -> Result<Recording, String> {
    let cfg = PipelineConfig::default();
    let recorder = Arc::new(RecordingTransport::new(Arc::new(BuiltinTransport::new(cfg.builtin_models()))));
    let capture = Arc::new(Capture::new(recorder.clone()));
    let p = Pipeline::with_backends(cfg, Backends::uniform(capture.clone(), 0)).map_err(|e| e.to_string())?;
    p.run(input, work, &RunOptions::default()).map_err(|e| e.to_string())?;
    let exchanges = std::mem::take(&mut *capture.log.lock().unwrap());
    let final_ply = std::fs::read(work.join("final.ply")).map_err(|e| e.to_string())?;
    Ok(Recording { exchanges, fixtures: recorder.recorded(), final_ply })
}

pub fn fixture_router(set: FixtureSet) -> axum::Router {
    flatlift::models::router(Arc::new(FixtureTransport::new(set)))
}

/// Parses `body` as `T` and checks it serializes back to the same bytes.
fn round_trip<T: Serialize + DeserializeOwned>(body: &[u8], what: &str) -> Result<(), String> {
    let typed: T = wire::from_body(body, what).map_err(|e| e.to_string())?;
    if wire::to_body(&typed) != body {
        return Err(format!("{what} does not round-trip bit-exactly"));
    }
    Ok(())
}

fn check_schemas(role: Role, req: &[u8], resp: &[u8]) -> Result<(), String> {
    match role {
        Role::Caption => {
            round_trip::<CaptionRequest>(req, "caption request")?;
            round_trip::<CaptionResponse>(resp, "caption response")
        }
        Role::Generate => {
            round_trip::<GenerateRequest>(req, "generate request")?;
            round_trip::<GenerateResponse>(resp, "generate response")
        }
        Role::Vqa => {
            round_trip::<VqaRequest>(req, "vqa request")?;
            round_trip::<VqaResponse>(resp, "vqa response")
        }
        Role::Shape => {
            round_trip::<ShapeRequest>(req, "shape request")?;
            round_trip::<MeshResponse>(resp, "shape response")
        }
        Role::Texture => {
            round_trip::<TextureRequest>(req, "texture request")?;
            round_trip::<MeshResponse>(resp, "texture response")
        }
    }
}

/// Hashes of every decoded `*_b64` payload, in field order.
pub fn payload_hashes(body: &[u8]) -> Result<Vec<ContentHash>, String> {
    let v: Value = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    let Value::Object(map) = v else { return Err("body is not an object".into()) };
    for (k, v) in &map {
        if !k.ends_with("_b64") {
            continue;
        }
        let texts: Vec<&Value> = match v {
            Value::Array(items) => items.iter().collect(),
            other => vec![other],
        };
        for t in texts {
            let s = t.as_str().ok_or(format!("{k} is not a string"))?;
            out.push(content_hash(&wire::unb64(s, k).map_err(|e| e.to_string())?));
        }
    }
    Ok(out)
}

/// Replays every recorded request against the server at `base` and checks
/// schemas, bodies and payload hashes. Returns the roles seen.
pub fn check_wire(rec: &Recording, base: &str) -> Result<Vec<Role>, String> {
    let client = reqwest::blocking::Client::new();
    let mut roles = Vec::new();
    for ex in &rec.exchanges {
        check_schemas(ex.role, &ex.request, &ex.response)?;
        let resp = client
            .post(format!("{base}/v1/{}", ex.role.name()))
            .header("content-type", "application/json")
            .body(ex.request.clone())
            .send()
            .map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("{} answered {}", ex.role.name(), resp.status()));
        }
        let body = resp.bytes().map_err(|e| e.to_string())?.to_vec();
        if body != ex.response {
            return Err(format!("{} response differs from the recording", ex.role.name()));
        }
        let fixture = rec.fixtures.get(ex.role, &content_hash(&ex.request)).ok_or("exchange missing from fixtures")?;
        if payload_hashes(&body)? != payload_hashes(fixture.as_bytes())? {
            return Err(format!("{} payload hashes differ from the fixture", ex.role.name()));
        }
        if !roles.contains(&ex.role) {
            roles.push(ex.role);
        }
    }
    Ok(roles)
}

/// Runs the whole pipeline with every role served over HTTP from `base`.
pub fn run_over_http(input: &[u8], base: &str, work: &Path) -> Result<(RunManifest, Vec<u8>), String> {
    let mut cfg = PipelineConfig::default();
    cfg.backends.endpoints = Role::ALL.iter().map(|&r| BackendEndpoint::new(base, r)).collect();
    let p = Pipeline::new(cfg).map_err(|e| e.to_string())?;
    let m = p.run(input, work, &RunOptions::default()).map_err(|e| e.to_string())?;
    let ply = std::fs::read(work.join("final.ply")).map_err(|e| e.to_string())?;
    Ok((m, ply))
}
