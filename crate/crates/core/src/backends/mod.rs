//! Model roles behind one wire contract, with native, fixture and HTTP
//! implementations.

mod builtin;
mod transport;
pub mod wire;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use builtin::{BuiltinModels, BUILTIN_CAPTION, BUILTIN_ID, EDGE_FIELD_SIGMA};
pub use transport::{
    BuiltinTransport, FixtureEntry, FixtureSet, FixtureTransport, HttpTransport, RecordingTransport,
    Transport, TransportError, FIXTURE_SCHEMA, TOKEN_ENV,
};

use crate::error::{Error, Result};
use crate::mesh::{load_mesh, ply_bytes};
use crate::model::{
    content_hash, decode_image, encode_image, CandidateImage, Caption, CaptionSource, ConditionMap,
    ContentHash, RasterImage, TriMesh,
};
use wire::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Caption,
    Generate,
    Vqa,
    Shape,
    Texture,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Caption, Role::Generate, Role::Vqa, Role::Shape, Role::Texture];

    pub fn name(self) -> &'static str {
        match self {
            Role::Caption => "caption",
            Role::Generate => "generate",
            Role::Vqa => "vqa",
            Role::Shape => "shape",
            Role::Texture => "texture",
        }
    }

    pub fn path(self) -> &'static str {
        match self {
            Role::Caption => "/v1/caption",
            Role::Generate => "/v1/generate",
            Role::Vqa => "/v1/vqa",
            Role::Shape => "/v1/shape",
            Role::Texture => "/v1/texture",
        }
    }

    pub fn from_name(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.name() == s)
    }
}

/// Where a remote model for one role lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub base_url: String,
    pub role: Role,
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    2
}

impl BackendEndpoint {
    pub fn new(base_url: &str, role: Role) -> Self {
        Self {
            base_url: base_url.to_string(),
            role,
            auth_token: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.url()?;
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config(format!("{} endpoint timeout must be > 0", self.role.name())));
        }
        Ok(())
    }

    /// Full URL for this endpoint's role.
    pub fn url(&self) -> Result<url::Url> {
        let base = url::Url::parse(&self.base_url)
            .map_err(|e| Error::Config(format!("bad base_url {:?}: {e}", self.base_url)))?;
        if !matches!(base.scheme(), "http" | "https") {
            return Err(Error::Config(format!("base_url {:?} must be http or https", self.base_url)));
        }
        let joined = format!("{}{}", base.as_str().trim_end_matches('/'), self.role.path());
        url::Url::parse(&joined).map_err(|e| Error::Config(format!("bad endpoint url {joined:?}: {e}")))
    }
}

/// Audit entry for one backend call, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendCallRecord {
    pub role: Role,
    pub request_hash: ContentHash,
    pub response_hash: Option<ContentHash>,
    pub latency_ms: u64,
    pub attempts: u32,
    pub backend_id: String,
    /// `"ok"` or the error message.
    pub outcome: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Delay before the second attempt; doubles after each further failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(2))
    }
}

#[derive(Clone)]
struct Slot {
    transport: Arc<dyn Transport>,
    max_retries: u32,
}

/// Per-role transports plus the typed operations the pipeline uses.
#[derive(Clone)]
pub struct Backends {
    slots: [Slot; 5],
    retry: RetryPolicy,
}

/// Fixture file and remote endpoints to use instead of the builtins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendSettings {
    /// Replays recorded responses for every role without an endpoint.
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    #[serde(default)]
    pub endpoints: Vec<BackendEndpoint>,
}

impl Backends {
    pub fn builtin(models: BuiltinModels) -> Self {
        Self::uniform(Arc::new(BuiltinTransport::new(models)), 0)
    }

    pub fn uniform(transport: Arc<dyn Transport>, max_retries: u32) -> Self {
        let slot = Slot { transport, max_retries };
        Self {
            slots: [slot.clone(), slot.clone(), slot.clone(), slot.clone(), slot],
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_settings(settings: &BackendSettings, models: BuiltinModels) -> Result<Self> {
        let mut b = match &settings.fixtures {
            Some(path) => Self::uniform(Arc::new(FixtureTransport::new(FixtureSet::load(path)?)), 0),
            None => Self::builtin(models),
        };
        for ep in &settings.endpoints {
            b = b.with(ep.role, Arc::new(HttpTransport::new(ep)?), ep.max_retries);
        }
        Ok(b)
    }

    pub fn with(mut self, role: Role, transport: Arc<dyn Transport>, max_retries: u32) -> Self {
        self.slots[role as usize] = Slot { transport, max_retries };
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn identity(&self, role: Role) -> String {
        self.slots[role as usize].transport.id()
    }

    /// Sends `body`, retrying retryable failures with exponential backoff.
    /// Appends exactly one record to `log`.
    pub fn call(&self, role: Role, body: &[u8], log: &mut Vec<BackendCallRecord>) -> Result<Vec<u8>> {
        let slot = &self.slots[role as usize];
        let started = Instant::now();
        let mut attempts = 0u32;
        let result = loop {
            attempts += 1;
            if attempts > 1 {
                std::thread::sleep(self.retry.delay_before(attempts));
            }
            match slot.transport.post(role, body) {
                Ok(resp) => break Ok(resp),
                Err(TransportError::Retryable(m)) if attempts <= slot.max_retries => {
                    tracing::warn!(role = role.name(), attempt = attempts, "retrying: {m}");
                }
                Err(e) => {
                    break Err(Error::BackendUnavailable {
                        attempts,
                        message: e.to_string(),
                    })
                }
            }
        };
        log.push(BackendCallRecord {
            role,
            request_hash: content_hash(body),
            response_hash: result.as_ref().ok().map(|r| content_hash(r)),
            latency_ms: started.elapsed().as_millis() as u64,
            attempts,
            backend_id: slot.transport.id(),
            outcome: match &result {
                Ok(_) => "ok".to_string(),
                Err(e) => e.to_string(),
            },
        });
        result
    }

    pub fn caption(&self, img: &RasterImage, log: &mut Vec<BackendCallRecord>) -> Result<Caption> {
        let body = to_body(&CaptionRequest { image_png_b64: b64(&encode_image(img)) });
        let resp: CaptionResponse = from_body(&self.call(Role::Caption, &body, log)?, "caption response")?;
        Caption::new(&resp.caption, CaptionSource::Backend)
    }

    pub fn generate(
        &self,
        img: &RasterImage,
        cond: &ConditionMap,
        index: usize,
        cap: &Caption,
        seed: u64,
        log: &mut Vec<BackendCallRecord>,
    ) -> Result<CandidateImage> {
        if img.dims() != cond.map.dims() {
            return Err(Error::DimensionMismatch {
                expected: img.dims(),
                actual: cond.map.dims(),
            });
        }
        let body = to_body(&GenerateRequest {
            image_png_b64: b64(&encode_image(img)),
            condition_png_b64: b64(&encode_image(&cond.map)),
            condition_kind: cond.kind.wire_name().to_string(),
            prompt: cap.text().to_string(),
            seed,
        });
        let resp: GenerateResponse = from_body(&self.call(Role::Generate, &body, log)?, "generate response")?;
        let out = decode_image(&unb64(&resp.image_png_b64, "image_png_b64")?)
            .map_err(|e| Error::MalformedResponse(format!("generated image: {e}")))?;
        if out.dims() != img.dims() {
            return Err(Error::DimensionMismatch {
                expected: img.dims(),
                actual: out.dims(),
            });
        }
        Ok(CandidateImage {
            image: out.to_rgb_over_white(),
            condition_kind: cond.kind,
            condition_index: index,
            backend_id: self.identity(Role::Generate),
            seed,
        })
    }

    pub fn vqa(&self, question: &str, images: &[&RasterImage], log: &mut Vec<BackendCallRecord>) -> Result<String> {
        if images.is_empty() || images.len() > 16 {
            return Err(Error::Config(format!("vqa takes 1 to 16 images, got {}", images.len())));
        }
        let body = to_body(&VqaRequest {
            question: question.to_string(),
            images_png_b64: images.iter().map(|i| b64(&encode_image(i))).collect(),
        });
        let resp: VqaResponse = from_body(&self.call(Role::Vqa, &body, log)?, "vqa response")?;
        if resp.answer.trim().is_empty() {
            return Err(Error::MalformedResponse("empty vqa answer".into()));
        }
        Ok(resp.answer)
    }

    /// Untextured mesh; colors in the response are dropped.
    pub fn shape(&self, img: &RasterImage, seed: u64, log: &mut Vec<BackendCallRecord>) -> Result<TriMesh> {
        let body = to_body(&ShapeRequest {
            image_png_b64: b64(&encode_image(img)),
            seed,
        });
        let resp: MeshResponse = from_body(&self.call(Role::Shape, &body, log)?, "shape response")?;
        Ok(load_mesh(&unb64(&resp.mesh_ply_b64, "mesh_ply_b64")?)?.without_colors())
    }

    pub fn texture(&self, mesh: &TriMesh, img: &RasterImage, log: &mut Vec<BackendCallRecord>) -> Result<TriMesh> {
        let body = to_body(&TextureRequest {
            mesh_ply_b64: b64(&ply_bytes(mesh)),
            image_png_b64: b64(&encode_image(img)),
        });
        let resp: MeshResponse = from_body(&self.call(Role::Texture, &body, log)?, "texture response")?;
        let out = load_mesh(&unb64(&resp.mesh_ply_b64, "mesh_ply_b64")?)?;
        if out.vertex_colors.is_none() {
            return Err(Error::MalformedMesh("textured mesh has no vertex colors".into()));
        }
        Ok(out)
    }
}
