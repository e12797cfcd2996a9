//! Client for detectors served over the version-1 wire protocol.

use std::time::Duration;

use prfa_core::{Detection, DetectorOracle, Image, OracleError, OracleInfo};

use crate::wire::{decode_response, encode_request, ErrorBody, Health, DETECT_PATH, HEALTH_PATH, PROTOCOL_VERSION};

/// Environment variable that overrides the configured endpoint.
pub const ENDPOINT_ENV: &str = "PRFA_ENDPOINT";

#[derive(Debug, Clone)]
pub struct HttpOracle {
    agent: ureq::Agent,
    base: String,
    info: OracleInfo,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into()
}

fn read_body(resp: &mut ureq::http::Response<ureq::Body>) -> Result<String, OracleError> {
    resp.body_mut().read_to_string().map_err(|e| OracleError::Transport(e.to_string()))
}

fn status_error(status: u16, body: &str) -> OracleError {
    match serde_json::from_str::<ErrorBody>(body) {
        Ok(e) => OracleError::Transport(format!("HTTP {status} ({}): {}", e.error.code, e.error.message)),
        Err(_) => OracleError::Transport(format!("HTTP {status}")),
    }
}

impl HttpOracle {
    /// Client for `base` (scheme, host and port) with a known class count.
    pub fn new(base: &str, num_classes: usize, timeout: Duration) -> Self {
        let base = base.trim_end_matches('/').to_string();
        let info = OracleInfo { num_classes, name: format!("http:{base}") };
        Self { agent: agent(timeout), base, info }
    }

    /// Queries `/v1/health` for the class count and model name.
    pub fn connect(base: &str, timeout: Duration) -> Result<Self, OracleError> {
        let mut oracle = Self::new(base, 0, timeout);
        let url = format!("{}{HEALTH_PATH}", oracle.base);
        let mut resp = oracle.agent.get(&url).call().map_err(|e| OracleError::Transport(e.to_string()))?;
        let body = read_body(&mut resp)?;
        if resp.status() != 200 {
            return Err(status_error(resp.status().as_u16(), &body));
        }
        let health: Health = serde_json::from_str(&body).map_err(|e| OracleError::Malformed(e.to_string()))?;
        if health.protocol != PROTOCOL_VERSION {
            return Err(OracleError::ProtocolVersion { expected: PROTOCOL_VERSION, found: health.protocol });
        }
        oracle.info = OracleInfo { num_classes: health.num_classes, name: health.name };
        Ok(oracle)
    }

    pub fn base(&self) -> &str {
        &self.base
    }
}

impl DetectorOracle for HttpOracle {
    fn detect(&self, image: &Image) -> Result<Vec<Detection>, OracleError> {
        let body = serde_json::to_string(&encode_request(image)).expect("request serializes");
        let url = format!("{}{DETECT_PATH}", self.base);
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        let text = read_body(&mut resp)?;
        if resp.status() != 200 {
            return Err(status_error(resp.status().as_u16(), &text));
        }
        decode_response(&text, self.info.num_classes)
    }

    fn info(&self) -> OracleInfo {
        self.info.clone()
    }
}
