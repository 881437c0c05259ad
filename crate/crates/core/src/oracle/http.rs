//! Client for OpenAI-compatible chat completion endpoints.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Completion, Oracle, OracleError, OracleRequest};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpOracleSettings {
    /// Endpoint root, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub request_timeout_secs: f64,
    /// Retries after the first failed attempt.
    pub retries: u32,
    /// Delay before the first retry; doubled for each further retry.
    pub backoff_initial_ms: u64,
}

impl Default for HttpOracleSettings {
    fn default() -> Self {
        HttpOracleSettings {
            base_url: String::new(),
            model: String::new(),
            api_key: None,
            temperature: 0.0,
            max_tokens: None,
            request_timeout_secs: 300.0,
            retries: 3,
            backoff_initial_ms: 1000,
        }
    }
}

impl HttpOracleSettings {
    /// Settings from an optional TOML file, then overridden by
    /// `ACSL_ORACLE_BASE_URL`, `ACSL_ORACLE_MODEL` and `ACSL_ORACLE_API_KEY`.
    pub fn load(file: Option<&Path>) -> Result<Self, OracleError> {
        let mut settings = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| OracleError::Config(format!("{}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| OracleError::Config(format!("{}: {e}", path.display())))?
            }
            None => HttpOracleSettings::default(),
        };
        if let Ok(v) = std::env::var("ACSL_ORACLE_BASE_URL") {
            settings.base_url = v;
        }
        if let Ok(v) = std::env::var("ACSL_ORACLE_MODEL") {
            settings.model = v;
        }
        if let Ok(v) = std::env::var("ACSL_ORACLE_API_KEY") {
            settings.api_key = Some(v);
        }
        Ok(settings)
    }
}

#[derive(Debug)]
pub struct HttpOracle {
    settings: HttpOracleSettings,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl HttpOracle {
    pub fn new(settings: HttpOracleSettings) -> Result<Self, OracleError> {
        if settings.base_url.is_empty() || settings.model.is_empty() {
            return Err(OracleError::Config("base_url and model must be set".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(settings.request_timeout_secs))
            .build()
            .map_err(|e| OracleError::Config(e.to_string()))?;
        Ok(HttpOracle { settings, client })
    }

    fn attempt(&self, prompt: &str) -> Result<String, String> {
        let url = format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'));
        let mut body = serde_json::json!({
            "model": self.settings.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": self.settings.temperature,
        });
        if let Some(n) = self.settings.max_tokens {
            body["max_tokens"] = n.into();
        }
        let mut request = self.client.post(&url).json(&body);
        if let Some(key) = &self.settings.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ChatResponse = response.json().map_err(|e| e.to_string())?;
        Ok(parsed.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default())
    }
}

impl Oracle for HttpOracle {
    fn complete(&self, request: &OracleRequest) -> Result<Completion, OracleError> {
        let mut delay = Duration::from_millis(self.settings.backoff_initial_ms);
        let mut last_error = String::new();
        for attempt in 0..=self.settings.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&request.prompt) {
                Ok(text) => return Ok(Completion { text, reported_latency: None }),
                Err(e) => {
                    tracing::warn!(program = %request.program_id, attempt, error = %e, "oracle request failed");
                    last_error = e;
                }
            }
        }
        Err(OracleError::OracleUnavailable { attempts: self.settings.retries + 1, last_error })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "oracle": "http", "settings": self.settings })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Phase;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn request() -> OracleRequest {
        OracleRequest {
            phase: Phase::Generate,
            program_id: "p".into(),
            config_name: "CB".into(),
            attempt_index: 0,
            run_index: 1,
            prompt: "write a spec".into(),
        }
    }

    fn settings(base_url: String) -> HttpOracleSettings {
        HttpOracleSettings {
            base_url,
            model: "m".into(),
            backoff_initial_ms: 1,
            request_timeout_secs: 5.0,
            ..Default::default()
        }
    }

    #[test]
    fn transport_down_exhausts_retries() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let oracle = HttpOracle::new(settings(format!("http://127.0.0.1:{port}/v1"))).unwrap();
        match oracle.complete(&request()) {
            Err(OracleError::OracleUnavailable { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reads_first_choice() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let body: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert_eq!(body["messages"][0]["content"], "write a spec");
            let reply = r#"{"choices":[{"message":{"role":"assistant","content":"/*@ ensures \\true; */"}}]}"#;
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        });
        let oracle = HttpOracle::new(settings(format!("http://127.0.0.1:{port}/v1/"))).unwrap();
        let completion = oracle.complete(&request()).unwrap();
        assert_eq!(completion.text, "/*@ ensures \\true; */");
        server.join().unwrap();
    }

    #[test]
    fn requires_endpoint_and_model() {
        assert!(matches!(HttpOracle::new(HttpOracleSettings::default()), Err(OracleError::Config(_))));
    }
}
