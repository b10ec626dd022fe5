//! Blocking HTTP client for the `/v1` API.

use std::time::Duration;

use serde_json::Value;
use ureq::Agent;

use crate::CliError;

pub struct Client {
    endpoint: String,
    token: String,
    agent: Agent,
}

impl Client {
    pub fn new(endpoint: &str, token: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            token: token.to_string(),
            agent,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.endpoint)
    }

    pub fn get(&self, path: &str, query: &[(&str, String)]) -> Result<Value, CliError> {
        let mut req = self.agent.get(&self.url(path)).header("X-Api-Token", &self.token);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        decode(req.call().map_err(transport)?)
    }

    pub fn post(&self, path: &str, body: Option<&Value>) -> Result<Value, CliError> {
        let req = self.agent.post(&self.url(path)).header("X-Api-Token", &self.token);
        let resp = match body {
            Some(b) => req.send_json(b),
            None => req.send_empty(),
        };
        decode(resp.map_err(transport)?)
    }

    pub fn get_bytes(&self, path: &str) -> Result<Vec<u8>, CliError> {
        let mut resp = self
            .agent
            .get(&self.url(path))
            .header("X-Api-Token", &self.token)
            .call()
            .map_err(transport)?;
        if !resp.status().is_success() {
            return decode(resp).map(|_| Vec::new());
        }
        resp.body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(transport)
    }
}

fn transport(e: ureq::Error) -> CliError {
    CliError::Transport(e.to_string())
}

fn decode(mut resp: ureq::http::Response<ureq::Body>) -> Result<Value, CliError> {
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .with_config()
        .limit(u64::MAX)
        .read_to_string()
        .map_err(transport)?;
    let value: Value = if text.trim().is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Transport(format!("invalid JSON from server: {e}")))?
    };
    if (200..300).contains(&status) {
        return Ok(value);
    }
    Err(CliError::Api {
        status,
        code: value["code"].as_str().unwrap_or("HTTP_ERROR").to_string(),
        message: value["message"].as_str().unwrap_or(&text).to_string(),
        details: value.get("details").cloned(),
    })
}
