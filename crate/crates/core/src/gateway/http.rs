use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Serialize;

use super::{BackendConfig, GatewayError, GenerationRequest, Generator};

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

/// Chat-completions request body. Field order is fixed, so equal inputs give
/// equal bytes.
pub fn request_body(model: &str, request: &GenerationRequest) -> Vec<u8> {
    serde_json::to_vec(&ChatBody {
        model,
        messages: [Message {
            role: "user",
            content: &request.prompt,
        }],
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    })
    .expect("body serializes")
}

struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.released.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.released.notify_one();
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    url: String,
    agent: ureq::Agent,
    permits: Permits,
}

enum Attempt {
    Retry(GatewayError),
    Fail(GatewayError),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let endpoint = config.endpoint.as_deref().expect("validated");
        let url = format!("{}/chat/completions", endpoint.trim_end_matches('/'));
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let permits = Permits {
            free: Mutex::new(config.max_in_flight),
            released: Condvar::new(),
        };
        Ok(HttpBackend {
            config,
            url,
            agent,
            permits,
        })
    }

    fn attempt(&self, key: &str, body: &[u8]) -> Result<String, Attempt> {
        let response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(Attempt::Retry(GatewayError::Timeout)),
            Err(e) => return Err(Attempt::Retry(GatewayError::Transport(e.to_string()))),
        };
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(GatewayError::HttpError(status)));
        }
        if status != 200 {
            return Err(Attempt::Fail(GatewayError::HttpError(status)));
        }
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(GatewayError::Transport(e.to_string())))?;
        first_message(&text).map_err(Attempt::Fail)
    }
}

fn first_message(text: &str) -> Result<String, GatewayError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| GatewayError::BadResponse("no choices[0].message.content".into()))
}

impl Generator for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        let key = std::env::var(&self.config.auth_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::AuthMissing(self.config.auth_env.clone()))?;
        let body = request_body(self.config.model.as_deref().expect("validated"), request);
        let _permit = self.permits.acquire();
        let mut attempt = 0;
        loop {
            match self.attempt(&key, &body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= self.config.retries => return Err(e),
                Err(Attempt::Retry(e)) => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("request failed ({e}); retrying in {wait} ms");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendKind, Purpose};

    #[test]
    fn body_field_order() {
        let req = GenerationRequest::new("hi \"there\"", Purpose::Plan);
        assert_eq!(
            String::from_utf8(request_body("m", &req)).unwrap(),
            r#"{"model":"m","messages":[{"role":"user","content":"hi \"there\""}],"temperature":0.0,"max_tokens":512}"#
        );
    }

    #[test]
    fn missing_key_fails_before_connecting() {
        let mut cfg = BackendConfig::new(BackendKind::Http);
        // Nothing listens here; reaching the network would be a transport error.
        cfg.endpoint = Some("http://127.0.0.1:9".into());
        cfg.model = Some("m".into());
        cfg.auth_env = "TKGQA_TEST_UNSET_KEY".into();
        let backend = HttpBackend::new(cfg).unwrap();
        let err = backend.generate(&GenerationRequest::new("q", Purpose::Plan)).unwrap_err();
        assert!(matches!(err, GatewayError::AuthMissing(v) if v == "TKGQA_TEST_UNSET_KEY"));
    }

    #[test]
    fn response_parsing() {
        assert_eq!(first_message(r#"{"choices":[{"message":{"content":"ok"}}]}"#).unwrap(), "ok");
        assert!(matches!(first_message(r#"{"choices":[]}"#), Err(GatewayError::BadResponse(_))));
    }
}
