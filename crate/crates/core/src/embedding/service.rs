//! Client for an external embedding service.
//!
//! Wire protocol: one TCP connection per request. The client writes a single
//! JSON line `{"text": "..."}` and reads a single JSON line back, either
//! `{"embedding": [f64, ...]}` with exactly `dimension` entries or
//! `{"error": "..."}`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingProvider};
use crate::error::EmbedError;

#[derive(Debug, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub text: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct ServiceResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ServiceEmbedder {
    endpoint: String,
    dimension: usize,
    timeout: Duration,
}

impl ServiceEmbedder {
    pub fn new(endpoint: impl Into<String>, dimension: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            dimension,
            timeout: Duration::from_secs(10),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn round_trip(&self, text: &str) -> Result<ServiceResponse, EmbedError> {
        let transport =
            |e: std::io::Error| EmbedError::Transport(format!("{}: {e}", self.endpoint));
        let addr = self
            .endpoint
            .to_socket_addrs()
            .map_err(transport)?
            .next()
            .ok_or_else(|| EmbedError::Transport(format!("{}: no address", self.endpoint)))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(transport)?;
        stream
            .set_read_timeout(Some(self.timeout))
            .map_err(transport)?;
        stream
            .set_write_timeout(Some(self.timeout))
            .map_err(transport)?;

        let mut line = serde_json::to_string(&ServiceRequest {
            text: text.to_string(),
        })
        .expect("request always serializes");
        line.push('\n');
        stream.write_all(line.as_bytes()).map_err(transport)?;

        let mut reply = String::new();
        BufReader::new(stream)
            .read_line(&mut reply)
            .map_err(transport)?;
        if reply.trim().is_empty() {
            return Err(EmbedError::Transport(format!(
                "{}: empty response",
                self.endpoint
            )));
        }
        serde_json::from_str(&reply)
            .map_err(|e| EmbedError::Transport(format!("{}: bad response: {e}", self.endpoint)))
    }
}

impl EmbeddingProvider for ServiceEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let resp = self.round_trip(text)?;
        if let Some(err) = resp.error {
            return Err(EmbedError::Transport(format!("service error: {err}")));
        }
        let v = resp
            .embedding
            .ok_or_else(|| EmbedError::Transport("response carries no embedding".into()))?;
        if v.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension,
                actual: v.len(),
            });
        }
        Embedding::normalized(v)
    }
}
