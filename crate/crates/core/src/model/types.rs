use serde::{Deserialize, Serialize};

use super::hash::ContentHash;
use super::raster::{Channels, RasterImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    CannyEdge,
    Depth,
}

impl ConditionKind {
    /// Token used on the wire and in artifact names.
    pub fn wire_name(self) -> &'static str {
        match self {
            ConditionKind::CannyEdge => "canny",
            ConditionKind::Depth => "depth",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        match s {
            "canny" => Some(ConditionKind::CannyEdge),
            "depth" => Some(ConditionKind::Depth),
            _ => None,
        }
    }
}

/// A single-channel structural guide derived from an input image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMap {
    pub kind: ConditionKind,
    pub map: RasterImage,
    pub source_hash: ContentHash,
}

impl ConditionMap {
    pub fn new(kind: ConditionKind, map: RasterImage, source_hash: ContentHash) -> Result<Self> {
        if map.channels() != Channels::Gray8 {
            return Err(Error::MalformedImage(format!(
                "condition map must be Gray8, got {:?}",
                map.channels()
            )));
        }
        if kind == ConditionKind::CannyEdge && map.data().iter().any(|&v| v != 0 && v != 255) {
            return Err(Error::MalformedImage(
                "canny edge map holds values other than 0 and 255".into(),
            ));
        }
        Ok(Self {
            kind,
            map,
            source_hash,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaptionSource {
    Backend,
    UserProvided,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    text: String,
    pub source: CaptionSource,
}

impl Caption {
    /// Trims `text`; fails when nothing is left.
    pub fn new(text: &str, source: CaptionSource) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::MalformedResponse("empty caption".into()));
        }
        Ok(Self {
            text: text.to_string(),
            source,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// One generated reference candidate with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateImage {
    pub image: RasterImage,
    pub condition_kind: ConditionKind,
    pub condition_index: usize,
    pub backend_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMethod {
    Vqa,
    HeuristicFallback,
    UserOverride,
}

/// The selected candidate, fed to shape generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyImage {
    pub image: RasterImage,
    /// 1-based position among the candidates.
    pub chosen_index: usize,
    pub method: SelectionMethod,
    pub rationale: String,
}
