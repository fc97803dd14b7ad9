//! OpenAI-compatible chat-completions client for persona sessions.

use std::time::Duration;

use a2c_core::persona::{Agent, ChatBackend, ChatRequest, ENDPOINT_ENV, KEY_ENV};
use a2c_core::{Error, Result};
use serde_json::{json, Value};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    key: Option<String>,
}

impl HttpBackend {
    /// Reads the endpoint URL and optional bearer token from the environment.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| Error::Config(format!("set {ENDPOINT_ENV} to a chat-completions URL, or pass --stub-decision")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint,
            key: std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, agent: Agent, request: &ChatRequest) -> Result<String> {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| json!({ "role": m.role, "content": m.content }))
            .collect();
        let mut call = self
            .client
            .post(&self.endpoint)
            .json(&json!({ "model": request.model, "messages": messages }));
        if let Some(key) = &self.key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::Transport(format!("{agent:?} request returned {status}")));
        }
        if !status.is_success() {
            return Err(Error::MalformedReply(format!("{agent:?} request returned {status}")));
        }
        let body: Value = resp.json().map_err(|e| Error::MalformedReply(e.to_string()))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::MalformedReply("reply has no choices[0].message.content".into()))
    }
}
