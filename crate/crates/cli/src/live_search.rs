//! Blocking HTTP search client.
//!
//! Understands Bing-style bodies (`webPages.value[].name/snippet`) and plain
//! arrays of `{title, snippet}` objects.

use std::time::Duration;

use clozegen_core::features::{SearchBackend, SearchError, SearchHit};
use serde_json::Value;

pub struct HttpSearchBackend {
    agent: ureq::Agent,
    endpoint: String,
    key_header: String,
    key: Option<String>,
}

impl HttpSearchBackend {
    pub fn new(endpoint: String, key_header: String, key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(10))).build().into();
        Self { agent, endpoint, key_header, key }
    }
}

pub fn parse_hits(body: &Value) -> Vec<SearchHit> {
    let items = body
        .pointer("/webPages/value")
        .and_then(Value::as_array)
        .or_else(|| body.as_array())
        .cloned()
        .unwrap_or_default();
    items
        .iter()
        .filter_map(|v| {
            let title = v.get("name").or_else(|| v.get("title")).and_then(Value::as_str).unwrap_or_default();
            let snippet = v.get("snippet").and_then(Value::as_str).unwrap_or_default();
            (!title.is_empty() || !snippet.is_empty()).then(|| SearchHit { title: title.into(), snippet: snippet.into() })
        })
        .collect()
}

impl SearchBackend for HttpSearchBackend {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        let mut req = self.agent.get(&self.endpoint).query("q", format!("\"{query}\""));
        if let Some(k) = &self.key {
            req = req.header(self.key_header.as_str(), k.as_str());
        }
        let mut resp = req.call().map_err(|e| SearchError::Backend(e.to_string()))?;
        let body: Value = resp.body_mut().read_json().map_err(|e| SearchError::Backend(e.to_string()))?;
        Ok(parse_hits(&body))
    }
}
