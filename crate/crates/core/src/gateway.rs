//! Frozen-model interface and the deterministic scripted stand-in.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub request_id: String,
    pub prompt_text: String,
    pub model_name: String,
    pub decision_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("model endpoint unavailable: {0}")]
    ModelUnavailable(String),
    #[error("model request timed out")]
    ModelTimeout,
    #[error("gateway not configured: {0}")]
    NotConfigured(String),
}

/// One line of `requests.jsonl`: a single attempt against the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: String,
    pub decision_index: u32,
    pub prompt_text: String,
    pub response_text: Option<String>,
    pub error: Option<String>,
    pub latency_ms: u64,
}

pub trait ModelGateway {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, GatewayError>;

    /// Drain the per-attempt records collected since the last call.
    fn take_records(&mut self) -> Vec<RequestRecord> {
        Vec::new()
    }
}

/// A scripted rule fires when the prompt contains every listed fragment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub contains: Vec<String>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedModelSpec {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    pub default_response: String,
}

impl ScriptedModelSpec {
    pub fn constant(response: &str) -> ScriptedModelSpec {
        ScriptedModelSpec {
            rules: Vec::new(),
            default_response: response.into(),
        }
    }

    /// First matching rule wins.
    pub fn respond(&self, prompt: &str) -> &str {
        self.rules
            .iter()
            .find(|r| r.contains.iter().all(|frag| prompt.contains(frag.as_str())))
            .map_or(self.default_response.as_str(), |r| r.response.as_str())
    }
}

/// Scripted model that keeps its request log in memory.
#[derive(Debug, Clone)]
pub struct ScriptedGateway {
    spec: ScriptedModelSpec,
    log: Vec<RequestRecord>,
}

impl ScriptedGateway {
    pub fn new(spec: ScriptedModelSpec) -> ScriptedGateway {
        ScriptedGateway { spec, log: Vec::new() }
    }

    pub fn spec(&self) -> &ScriptedModelSpec {
        &self.spec
    }

    pub fn log(&self) -> &[RequestRecord] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<RequestRecord> {
        core::mem::take(&mut self.log)
    }
}

impl ModelGateway for ScriptedGateway {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, GatewayError> {
        let response: String = self.spec.respond(&request.prompt_text).into();
        self.log.push(RequestRecord {
            request_id: request.request_id.clone(),
            decision_index: request.decision_index,
            prompt_text: request.prompt_text.clone(),
            response_text: Some(response.clone()),
            error: None,
            latency_ms: 0,
        });
        Ok(response)
    }

    fn take_records(&mut self) -> Vec<RequestRecord> {
        self.take_log()
    }
}

/// Gateway that always fails; used for fault-injection.
#[derive(Debug, Clone)]
pub struct FailingGateway {
    pub error: GatewayError,
    pub attempts: u32,
    log: Vec<RequestRecord>,
}

impl FailingGateway {
    pub fn new(error: GatewayError) -> FailingGateway {
        FailingGateway { error, attempts: 0, log: Vec::new() }
    }
}

impl ModelGateway for FailingGateway {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, GatewayError> {
        self.attempts += 1;
        self.log.push(RequestRecord {
            request_id: request.request_id.clone(),
            decision_index: request.decision_index,
            prompt_text: request.prompt_text.clone(),
            response_text: None,
            error: Some(self.error.to_string()),
            latency_ms: 0,
        });
        Err(self.error.clone())
    }

    fn take_records(&mut self) -> Vec<RequestRecord> {
        core::mem::take(&mut self.log)
    }
}
