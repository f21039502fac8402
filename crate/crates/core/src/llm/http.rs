use serde_json::{json, Value};

use super::{ApiStyle, Backend, BackendConfig, GenerationRequest, LlmError};

/// Client for a remote inference endpoint.
pub struct HttpBackend {
    agent: ureq::Agent,
    config: BackendConfig,
    id: String,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let url = config.endpoint_url.trim();
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(LlmError::InvalidConfig(format!("endpoint_url {url:?} is not an http(s) URL")));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let id = if config.model_id.is_empty() {
            format!("http:{url}")
        } else {
            format!("http:{}", config.model_id)
        };
        Ok(Self { agent, config, id })
    }

    fn body(&self, prompt: &str) -> Value {
        let c = &self.config;
        match c.api_style {
            ApiStyle::Completion => json!({
                "model": c.model_id,
                "prompt": prompt,
                "max_new_tokens": c.max_new_tokens,
                "temperature": c.temperature,
            }),
            // The prompt already carries its own chat markup, so the server
            // template is replaced by one that emits the message verbatim.
            ApiStyle::Chat => json!({
                "model": c.model_id,
                "messages": [{"role": "user", "content": prompt}],
                "max_tokens": c.max_new_tokens,
                "temperature": c.temperature,
                "chat_template": "{{ messages[0]['content'] }}",
            }),
        }
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, LlmError> {
        let mut call = self
            .agent
            .post(self.config.endpoint_url.trim())
            .header("Accept", "application/json");
        if let Some(token) = &self.config.auth_token {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = call.send_json(self.body(request.prompt)).map_err(transport)?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(transport)?;
        if !(200..300).contains(&status) {
            return Err(LlmError::BackendRejected(status, body));
        }
        let value: Value =
            serde_json::from_str(&body).map_err(|_| LlmError::MalformedResponse(snippet(&body)))?;
        generated_text(&value).ok_or_else(|| LlmError::MalformedResponse(snippet(&body)))
    }
}

fn transport(err: ureq::Error) -> LlmError {
    match err {
        ureq::Error::Timeout(_) => LlmError::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => LlmError::Timeout,
        other => LlmError::TransportError(other.to_string()),
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

/// Pulls the generated text out of the common response shapes.
fn generated_text(v: &Value) -> Option<String> {
    let s = |v: &Value| v.as_str().map(str::to_string);
    if let Some(arr) = v.as_array() {
        return arr.first().and_then(generated_text);
    }
    if let Some(t) = v.get("text").and_then(s) {
        return Some(t);
    }
    if let Some(t) = v.get("generated_text").and_then(s) {
        return Some(t);
    }
    let choice = v.get("choices")?.get(0)?;
    choice
        .get("text")
        .and_then(s)
        .or_else(|| choice.get("message")?.get("content").and_then(s))
}
