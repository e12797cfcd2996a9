//! Version-1 detection protocol.
//!
//! `POST /v1/detect` carries
//! `{"protocol":1,"width":W,"height":H,"encoding":"png-base64","image":"..."}`
//! and is answered with
//! `{"protocol":1,"detections":[{"box":[x1,y1,x2,y2],"label":L,"score":S,"score2":S2}],"num_classes":Y}`.
//! `score2` may be absent. Unknown fields are ignored on both sides.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use prfa_core::{BBox, Detection, Image, OracleError};
use serde::{Deserialize, Serialize};

use crate::io::{decode_png, encode_png};

pub const PROTOCOL_VERSION: u32 = 1;
pub const ENCODING: &str = "png-base64";
pub const DETECT_PATH: &str = "/v1/detect";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub protocol: u32,
    pub width: usize,
    pub height: usize,
    pub encoding: String,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub label: usize,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score2: Option<f64>,
}

impl From<&Detection> for WireDetection {
    fn from(d: &Detection) -> Self {
        Self { bbox: [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2], label: d.label, score: d.score, score2: d.score2 }
    }
}

impl WireDetection {
    pub fn to_detection(&self) -> Detection {
        let [x1, y1, x2, y2] = self.bbox;
        Detection { bbox: BBox::new(x1, y1, x2, y2), label: self.label, score: self.score, score2: self.score2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<u32>,
    pub detections: Vec<WireDetection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub protocol: u32,
    pub num_classes: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub protocol: u32,
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { protocol: PROTOCOL_VERSION, error: ErrorDetail { code: code.into(), message: message.into() } }
    }
}

/// Server-side request failures; all map to HTTP 400.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    #[error("request is not valid JSON for protocol 1: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("unsupported image encoding `{0}`")]
    Encoding(String),
    #[error("image payload does not decode: {0}")]
    Payload(String),
    #[error("declared size {declared:?} does not match decoded size {decoded:?}")]
    Size { declared: (usize, usize), decoded: (usize, usize) },
}

impl RequestError {
    pub fn code(&self) -> &'static str {
        match self {
            RequestError::Malformed(_) => "malformed_request",
            RequestError::Version(_) => "protocol_version",
            RequestError::Encoding(_) => "unsupported_encoding",
            RequestError::Payload(_) => "bad_image",
            RequestError::Size { .. } => "size_mismatch",
        }
    }
}

pub fn encode_request(image: &Image) -> DetectRequest {
    DetectRequest {
        protocol: PROTOCOL_VERSION,
        width: image.width(),
        height: image.height(),
        encoding: ENCODING.into(),
        image: STANDARD.encode(encode_png(image)),
    }
}

pub fn decode_request(body: &[u8]) -> Result<Image, RequestError> {
    let req: DetectRequest = serde_json::from_slice(body).map_err(|e| RequestError::Malformed(e.to_string()))?;
    if req.protocol != PROTOCOL_VERSION {
        return Err(RequestError::Version(req.protocol));
    }
    if req.encoding != ENCODING {
        return Err(RequestError::Encoding(req.encoding));
    }
    let bytes = STANDARD.decode(req.image.as_bytes()).map_err(|e| RequestError::Payload(e.to_string()))?;
    let image = decode_png(&bytes).map_err(|e| RequestError::Payload(e.to_string()))?;
    if image.dims() != (req.width, req.height) {
        return Err(RequestError::Size { declared: (req.width, req.height), decoded: image.dims() });
    }
    Ok(image)
}

pub fn encode_response(dets: &[Detection], num_classes: usize) -> DetectResponse {
    DetectResponse {
        protocol: Some(PROTOCOL_VERSION),
        detections: dets.iter().map(WireDetection::from).collect(),
        num_classes: Some(num_classes),
    }
}

/// Parses and validates a detect response.
///
/// Labels are checked against the response's `num_classes`, or against
/// `known_classes` when the response omits it.
pub fn decode_response(body: &str, known_classes: usize) -> Result<Vec<Detection>, OracleError> {
    let resp: DetectResponse = serde_json::from_str(body).map_err(|e| OracleError::Malformed(e.to_string()))?;
    if let Some(found) = resp.protocol {
        if found != PROTOCOL_VERSION {
            return Err(OracleError::ProtocolVersion { expected: PROTOCOL_VERSION, found });
        }
    }
    let num_classes = resp.num_classes.unwrap_or(known_classes);
    resp.detections
        .iter()
        .map(|w| {
            let d = w.to_detection();
            d.validate(num_classes).map(|()| d).map_err(|e| OracleError::Validation(e.to_string()))
        })
        .collect()
}
