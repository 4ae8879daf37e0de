//! Remote chat-completion provider speaking the de-facto industry wire
//! format (model + message list + temperature, usage block in the reply).

use serde_json::{json, Value};

use super::provider::{Provider, ProviderError, ProviderResponse};
use super::CompletionRequest;

/// HTTP chat-completion backend. `endpoint` is the full completions URL;
/// credentials come from the environment, never from config files.
pub struct HttpChatProvider {
    pub provider_name: String,
    pub model: String,
    pub endpoint: String,
    pub api_key: Option<String>,
    /// Opaque provider options (reasoning effort and the like) merged into
    /// the request body without interpretation.
    pub extra_options: serde_json::Map<String, Value>,
    client: reqwest::blocking::Client,
}

impl HttpChatProvider {
    pub fn new(
        provider_name: impl Into<String>,
        model: impl Into<String>,
        endpoint: impl Into<String>,
        api_key: Option<String>,
        extra_options: serde_json::Map<String, Value>,
    ) -> Self {
        Self {
            provider_name: provider_name.into(),
            model: model.into(),
            endpoint: endpoint.into(),
            api_key,
            extra_options,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Provider for HttpChatProvider {
    fn id(&self) -> String {
        format!("{}:{}", self.provider_name, self.model)
    }

    fn complete(
        &self,
        request: &CompletionRequest,
        _turn_index: u64,
    ) -> Result<ProviderResponse, ProviderError> {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_output {
            body["max_tokens"] = json!(max);
        }
        for (k, v) in &self.extra_options {
            body[k] = v.clone();
        }

        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call
            .send()
            .map_err(|e| ProviderError::Transient(format!("transport: {e}")))?;

        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ProviderError::Transient(format!("read body: {e}")))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ProviderError::Transient(format!("http {status}: {text}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Permanent(format!("http {status}: {text}")));
        }

        let payload: Value = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Permanent(format!("bad response json: {e}")))?;
        let content = payload["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                ProviderError::Permanent("response missing choices[0].message.content".into())
            })?
            .to_string();
        Ok(ProviderResponse {
            text: content,
            prompt_tokens: payload["usage"]["prompt_tokens"].as_u64(),
            completion_tokens: payload["usage"]["completion_tokens"].as_u64(),
        })
    }
}
