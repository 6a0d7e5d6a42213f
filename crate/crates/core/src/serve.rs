//! Line-oriented request protocol for programmatic clients.
//!
//! Each request is one line; each response is one line of JSON.
//!
//! Requests are either a JSON object
//!
//! ```text
//! {"op": "query", "text": "who is Mark?", "k": 5}
//! {"op": "stats"}
//! {"op": "reload"}
//! ```
//!
//! or any other non-empty line, taken as query text. Responses are
//! `{"ok": true, "result": ...}` or `{"ok": false, "error": "..."}`.
//! Queries do not modify the engine, so a fixed request stream against a fixed
//! snapshot always yields the same responses.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::engine::Engine;
use crate::error::Result;

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
enum Request {
    Query {
        text: String,
        #[serde(default)]
        k: Option<usize>,
    },
    Stats,
    Reload,
}

pub struct Server {
    engine: Engine,
    store: Option<PathBuf>,
}

impl Server {
    /// `store` is the snapshot re-read by `reload`.
    pub fn new(engine: Engine, store: Option<PathBuf>) -> Self {
        Self { engine, store }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn dispatch(&mut self, req: Request) -> Result<Value> {
        match req {
            Request::Query { text, k } => {
                let result = match k {
                    Some(k) => {
                        let mut p = self.engine.params().clone();
                        p.top_k = k.max(1);
                        self.engine.retrieve_with_params(&text, &p)?
                    }
                    None => self.engine.retrieve(&text)?,
                };
                Ok(serde_json::to_value(result).expect("result serializes"))
            }
            Request::Stats => {
                Ok(serde_json::to_value(self.engine.stats()).expect("stats serialize"))
            }
            Request::Reload => {
                if let Some(path) = &self.store {
                    let mut fresh = Engine::load(path)?;
                    fresh.set_params(self.engine.params().clone())?;
                    self.engine = fresh;
                }
                Ok(json!({"nodes": self.engine.graph().len()}))
            }
        }
    }

    /// Handle one request line. Returns `None` for blank lines.
    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        let req = if line.starts_with('{') {
            match serde_json::from_str::<Request>(line) {
                Ok(r) => r,
                Err(e) => {
                    return Some(
                        json!({"ok": false, "error": format!("bad request: {e}")}).to_string(),
                    )
                }
            }
        } else {
            Request::Query {
                text: line.to_string(),
                k: None,
            }
        };
        let resp = match self.dispatch(req) {
            Ok(v) => json!({"ok": true, "result": v}),
            Err(e) => json!({"ok": false, "error": e.to_string()}),
        };
        Some(resp.to_string())
    }

    /// Serve requests from `input` until end of stream.
    pub fn serve<R: BufRead, W: Write>(&mut self, input: R, mut output: W) -> std::io::Result<()> {
        for line in input.lines() {
            if let Some(resp) = self.handle_line(&line?) {
                writeln!(output, "{resp}")?;
                output.flush()?;
            }
        }
        Ok(())
    }
}
