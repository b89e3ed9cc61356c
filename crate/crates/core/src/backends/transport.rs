//! Byte-level transports: native, fixture replay, recording and HTTP.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::builtin::{BuiltinModels, BUILTIN_ID};
use super::wire::*;
use super::{BackendEndpoint, Role};
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, ply_bytes};
use crate::model::{content_hash, decode_image, encode_image, ConditionKind, ContentHash};

pub const TOKEN_ENV: &str = "FLATLIFT_BACKEND_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth another attempt: connection trouble, timeouts, 5xx, 429.
    Retryable(String),
    Fatal(String),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Retryable(m) => write!(f, "{m}"),
            TransportError::Fatal(m) => write!(f, "{m}"),
        }
    }
}

/// Sends one JSON request body for a role and returns the response body.
pub trait Transport: Send + Sync {
    /// Stable identity; part of cache keys and call records.
    fn id(&self) -> String;
    fn post(&self, role: Role, body: &[u8]) -> Result<Vec<u8>, TransportError>;
}

/// Serves every role with [`BuiltinModels`], speaking the wire format.
#[derive(Debug, Clone, Default)]
pub struct BuiltinTransport {
    pub models: BuiltinModels,
}

impl BuiltinTransport {
    pub fn new(models: BuiltinModels) -> Self {
        Self { models }
    }

    fn handle(&self, role: Role, body: &[u8]) -> Result<Vec<u8>> {
        let image = |b: &str, f: &str| decode_image(&unb64(b, f)?);
        Ok(match role {
            Role::Caption => {
                let req: CaptionRequest = from_body(body, "caption request")?;
                let img = image(&req.image_png_b64, "image_png_b64")?;
                to_body(&CaptionResponse { caption: self.models.caption(&img) })
            }
            Role::Generate => {
                let req: GenerateRequest = from_body(body, "generate request")?;
                let img = image(&req.image_png_b64, "image_png_b64")?;
                let cond = image(&req.condition_png_b64, "condition_png_b64")?;
                let kind = ConditionKind::from_wire(&req.condition_kind)
                    .ok_or_else(|| Error::MalformedResponse(format!("unknown condition_kind {:?}", req.condition_kind)))?;
                let out = self.models.generate(&img, &cond, kind, req.seed)?;
                to_body(&GenerateResponse { image_png_b64: b64(&encode_image(&out)) })
            }
            Role::Vqa => {
                let req: VqaRequest = from_body(body, "vqa request")?;
                let imgs = req
                    .images_png_b64
                    .iter()
                    .map(|b| image(b, "images_png_b64"))
                    .collect::<Result<Vec<_>>>()?;
                to_body(&VqaResponse { answer: self.models.vqa(&req.question, &imgs)? })
            }
            Role::Shape => {
                let req: ShapeRequest = from_body(body, "shape request")?;
                let img = image(&req.image_png_b64, "image_png_b64")?;
                let mesh = self.models.shape(&img, req.seed)?;
                to_body(&MeshResponse { mesh_ply_b64: b64(&ply_bytes(&mesh)) })
            }
            Role::Texture => {
                let req: TextureRequest = from_body(body, "texture request")?;
                let mesh = load_mesh(&unb64(&req.mesh_ply_b64, "mesh_ply_b64")?)?;
                let img = image(&req.image_png_b64, "image_png_b64")?;
                let out = self.models.texture(&mesh, &img)?;
                to_body(&MeshResponse { mesh_ply_b64: b64(&ply_bytes(&out)) })
            }
        })
    }
}

impl Transport for BuiltinTransport {
    fn id(&self) -> String {
        BUILTIN_ID.to_string()
    }

    fn post(&self, role: Role, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        self.handle(role, body).map_err(|e| TransportError::Fatal(e.to_string()))
    }
}

pub const FIXTURE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub role: Role,
    pub request_hash: ContentHash,
    /// Response body exactly as the server sent it.
    pub response: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureFile {
    schema: u32,
    entries: Vec<FixtureEntry>,
}

/// Recorded responses keyed by role and request hash.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureSet {
    entries: BTreeMap<(Role, ContentHash), String>,
}

impl FixtureSet {
    pub fn insert(&mut self, role: Role, request: &[u8], response: String) {
        self.entries.insert((role, content_hash(request)), response);
    }

    pub fn get(&self, role: Role, request_hash: &ContentHash) -> Option<&str> {
        self.entries.get(&(role, *request_hash)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> Vec<FixtureEntry> {
        self.entries
            .iter()
            .map(|((role, request_hash), response)| FixtureEntry {
                role: *role,
                request_hash: *request_hash,
                response: response.clone(),
            })
            .collect()
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&FixtureFile {
            schema: FIXTURE_SCHEMA,
            entries: self.entries(),
        })
        .expect("fixture file serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: FixtureFile = serde_json::from_slice(bytes)?;
        if file.schema != FIXTURE_SCHEMA {
            return Err(Error::Config(format!("fixture schema {} not supported", file.schema)));
        }
        let mut set = FixtureSet::default();
        for e in file.entries {
            set.entries.insert((e.role, e.request_hash), e.response);
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::CacheIo { path: path.to_path_buf(), source })?;
        Self::from_json(&bytes)
    }
}

/// Answers only requests it has seen; the response depends on nothing but
/// the request hash.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    set: Arc<FixtureSet>,
    id: String,
}

impl FixtureTransport {
    pub fn new(set: FixtureSet) -> Self {
        let id = format!("fixture:{}", content_hash(&set.to_json()).short());
        Self { set: Arc::new(set), id }
    }
}

impl Transport for FixtureTransport {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn post(&self, role: Role, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        let hash = content_hash(body);
        self.set
            .get(role, &hash)
            .map(|r| r.as_bytes().to_vec())
            .ok_or_else(|| TransportError::Fatal(format!("no {} fixture for request {}", role.name(), hash.short())))
    }
}

/// Forwards to another transport and keeps every successful exchange.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    recorded: Mutex<FixtureSet>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner,
            recorded: Mutex::new(FixtureSet::default()),
        }
    }

    pub fn recorded(&self) -> FixtureSet {
        self.recorded.lock().expect("fixture lock").clone()
    }
}

impl Transport for RecordingTransport {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn post(&self, role: Role, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        let resp = self.inner.post(role, body)?;
        let text = String::from_utf8(resp.clone())
            .map_err(|_| TransportError::Fatal("response body is not UTF-8".into()))?;
        self.recorded.lock().expect("fixture lock").insert(role, body, text);
        Ok(resp)
    }
}

/// JSON over HTTP POST to `{base_url}/v1/{role}`.
pub struct HttpTransport {
    url: url::Url,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    /// The bearer token comes from `FLATLIFT_BACKEND_TOKEN` when set,
    /// otherwise from the endpoint.
    pub fn new(endpoint: &BackendEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let url = endpoint.url()?;
        let token = std::env::var(TOKEN_ENV)
            .ok()
            .filter(|t| !t.is_empty())
            .or_else(|| endpoint.auth_token.clone());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self { url, token, client })
    }
}

impl Transport for HttpTransport {
    fn id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn post(&self, _role: Role, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        let mut req = self
            .client
            .post(self.url.clone())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req
            .send()
            .map_err(|e| TransportError::Retryable(format!("request to {} failed: {e}", self.url)))?;
        let status = resp.status();
        let bytes = resp
            .bytes()
            .map_err(|e| TransportError::Retryable(format!("reading body from {}: {e}", self.url)))?;
        if status.is_success() {
            Ok(bytes.to_vec())
        } else if status.is_server_error() || status.as_u16() == 429 {
            Err(TransportError::Retryable(format!("{} answered {status}", self.url)))
        } else {
            Err(TransportError::Fatal(format!(
                "{} answered {status}: {}",
                self.url,
                String::from_utf8_lossy(&bytes).chars().take(200).collect::<String>()
            )))
        }
    }
}
