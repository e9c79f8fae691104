//! Model gateways with IO: the remote chat-completion client, request-log
//! files and gateway selection from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use harnevo_core::gateway::{
    GatewayError, ModelGateway, ModelRequest, RequestRecord, ScriptedGateway, ScriptedModelSpec,
};
use serde_json::{json, Value};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};

pub const ENV_ENDPOINT: &str = "MODEL_ENDPOINT";
pub const ENV_API_KEY: &str = "MODEL_API_KEY";
pub const ENV_MODEL: &str = "MODEL_NAME";

#[derive(Debug, Error)]
pub enum RequestLogError {
    #[error("no request log at {0}")]
    NoRequestLog(PathBuf),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

/// Read a `requests.jsonl` file.
pub fn read_request_log(path: &Path) -> Result<Vec<RequestRecord>, RequestLogError> {
    if !path.is_file() {
        return Err(RequestLogError::NoRequestLog(path.to_path_buf()));
    }
    Ok(jsonl::read(path)?)
}

/// Serialized appender for one rollout's request log.
#[derive(Debug)]
pub struct RequestSink {
    path: PathBuf,
    lock: Mutex<()>,
}

impl RequestSink {
    pub fn new(path: impl Into<PathBuf>) -> RequestSink {
        RequestSink { path: path.into(), lock: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, records: &[RequestRecord]) -> Result<(), JsonlError> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        for r in records {
            jsonl::append(&self.path, r)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: &str, model: &str) -> RemoteConfig {
        RemoteConfig {
            endpoint: endpoint.into(),
            api_key: None,
            model: model.into(),
            attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }

    pub fn from_env() -> Result<RemoteConfig, GatewayError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| GatewayError::NotConfigured(format!("{ENV_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into());
        let mut c = RemoteConfig::new(&endpoint, &model);
        c.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(c)
    }
}

/// Chat-completion client. Each attempt, failed or not, becomes one
/// request record; failed attempts are retried with exponential backoff.
pub struct RemoteGateway {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    log: Vec<RequestRecord>,
}

impl RemoteGateway {
    pub fn new(config: RemoteConfig) -> Result<RemoteGateway, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::NotConfigured(e.to_string()))?;
        Ok(RemoteGateway { config, client, log: Vec::new() })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, model: &str, prompt: &str) -> Result<String, GatewayError> {
        let body = json!({
            "model": model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        let text = resp.text().map_err(classify)?;
        if !status.is_success() {
            return Err(GatewayError::ModelUnavailable(format!("HTTP {}", status.as_u16())));
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| GatewayError::ModelUnavailable(format!("bad response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::ModelUnavailable("response has no message content".into()))
    }
}

fn classify(e: reqwest::Error) -> GatewayError {
    if e.is_timeout() {
        GatewayError::ModelTimeout
    } else {
        GatewayError::ModelUnavailable(e.to_string())
    }
}

impl ModelGateway for RemoteGateway {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, GatewayError> {
        let model = if request.model_name.is_empty() || request.model_name == "scripted" {
            self.config.model.clone()
        } else {
            request.model_name.clone()
        };
        let mut last = GatewayError::ModelUnavailable("no attempts made".into());
        for n in 0..self.config.attempts.max(1) {
            if n > 0 {
                thread::sleep(self.config.backoff * 2u32.pow(n - 1));
            }
            let started = Instant::now();
            let result = self.attempt(&model, &request.prompt_text);
            let latency_ms = started.elapsed().as_millis() as u64;
            let (response_text, error) = match &result {
                Ok(t) => (Some(t.clone()), None),
                Err(e) => (None, Some(e.to_string())),
            };
            self.log.push(RequestRecord {
                request_id: format!("{}#a{n}", request.request_id),
                decision_index: request.decision_index,
                prompt_text: request.prompt_text.clone(),
                response_text,
                error,
                latency_ms,
            });
            match result {
                Ok(t) => return Ok(t),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn take_records(&mut self) -> Vec<RequestRecord> {
        std::mem::take(&mut self.log)
    }
}

/// Gateway choice as written on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    /// Fixed reply to every prompt.
    Constant(String),
    /// Rule file in the scripted-model JSON format.
    Scripted(PathBuf),
    /// Remote endpoint configured through the environment.
    Remote,
}

impl std::str::FromStr for ModelSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "remote" {
            return Ok(ModelSource::Remote);
        }
        match s.split_once(':') {
            Some(("constant", text)) => Ok(ModelSource::Constant(text.into())),
            Some(("scripted", path)) => Ok(ModelSource::Scripted(path.into())),
            _ => Err(format!("unknown model source `{s}` (constant:<text>, scripted:<file>, remote)")),
        }
    }
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Constant("[Call]".into())
    }
}

#[derive(Debug, Error)]
pub enum GatewaySetupError {
    #[error("{path}: {message}")]
    Spec { path: PathBuf, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub fn load_scripted_spec(path: &Path) -> Result<ScriptedModelSpec, GatewaySetupError> {
    let err = |message: String| GatewaySetupError::Spec { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

impl ModelSource {
    pub fn build(&self) -> Result<Box<dyn ModelGateway + Send>, GatewaySetupError> {
        Ok(match self {
            ModelSource::Constant(t) => Box::new(ScriptedGateway::new(ScriptedModelSpec::constant(t))),
            ModelSource::Scripted(p) => Box::new(ScriptedGateway::new(load_scripted_spec(p)?)),
            ModelSource::Remote => Box::new(RemoteGateway::new(RemoteConfig::from_env()?)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_sources_parse() {
        assert_eq!("remote".parse::<ModelSource>().unwrap(), ModelSource::Remote);
        assert_eq!(
            "constant:[Bid] 1x2".parse::<ModelSource>().unwrap(),
            ModelSource::Constant("[Bid] 1x2".into())
        );
        assert_eq!(
            "scripted:rules.json".parse::<ModelSource>().unwrap(),
            ModelSource::Scripted("rules.json".into())
        );
        assert!("gpt".parse::<ModelSource>().is_err());
    }

    #[test]
    fn missing_log_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("requests.jsonl");
        assert!(matches!(read_request_log(&p), Err(RequestLogError::NoRequestLog(_))));
        let sink = RequestSink::new(&p);
        let rec = RequestRecord {
            request_id: "a/d0/m0".into(),
            decision_index: 0,
            prompt_text: "p".into(),
            response_text: Some("[Call]".into()),
            error: None,
            latency_ms: 3,
        };
        sink.append(&[rec.clone(), rec.clone()]).unwrap();
        assert_eq!(read_request_log(&p).unwrap(), vec![rec.clone(), rec]);
        fs::write(&p, "{\"request_id\":1}\n").unwrap();
        assert!(matches!(
            read_request_log(&p),
            Err(RequestLogError::Jsonl(JsonlError::Record { line: 1, .. }))
        ));
    }
}
