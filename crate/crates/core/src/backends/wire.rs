//! JSON bodies exchanged with model servers. Field names are the contract.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub image_png_b64: String,
    pub condition_png_b64: String,
    pub condition_kind: String,
    pub prompt: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaRequest {
    pub question: String,
    pub images_png_b64: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaResponse {
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeRequest {
    pub image_png_b64: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshResponse {
    pub mesh_ply_b64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextureRequest {
    pub mesh_ply_b64: String,
    pub image_png_b64: String,
}

pub fn b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn unb64(text: &str, field: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(text)
        .map_err(|e| Error::MalformedResponse(format!("{field} is not valid base64: {e}")))
}

pub fn to_body<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("wire types serialize")
}

pub fn from_body<'a, T: Deserialize<'a>>(body: &'a [u8], what: &str) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::MalformedResponse(format!("{what}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_names_match_contract() {
        let g = GenerateRequest {
            image_png_b64: "aQ==".into(),
            condition_png_b64: "Yw==".into(),
            condition_kind: "canny".into(),
            prompt: "p".into(),
            seed: u64::MAX,
        };
        assert_eq!(
            String::from_utf8(to_body(&g)).unwrap(),
            r#"{"image_png_b64":"aQ==","condition_png_b64":"Yw==","condition_kind":"canny","prompt":"p","seed":18446744073709551615}"#
        );
        let v = VqaRequest { question: "q".into(), images_png_b64: vec!["a".into()] };
        assert_eq!(String::from_utf8(to_body(&v)).unwrap(), r#"{"question":"q","images_png_b64":["a"]}"#);
        let t = TextureRequest { mesh_ply_b64: "m".into(), image_png_b64: "i".into() };
        assert_eq!(String::from_utf8(to_body(&t)).unwrap(), r#"{"mesh_ply_b64":"m","image_png_b64":"i"}"#);
    }

    #[test]
    fn bad_base64_is_malformed_response() {
        assert!(matches!(unb64("!!", "image_png_b64"), Err(Error::MalformedResponse(_))));
        assert_eq!(unb64(&b64(b"xyz"), "f").unwrap(), b"xyz");
    }
}
