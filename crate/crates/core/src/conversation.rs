//! Plain-text conversation logs.
//!
//! One turn per line:
//!
//! ```text
//! # comment lines and blank lines are skipped
//! @12 Alice: We went on a ski trip with Mark.
//! Bob: Sounds fun!
//! ```
//!
//! An optional `@<number>` prefix sets the timestamp in the configured units;
//! without it the engine assigns one. The speaker tag (`Name:`) is optional and
//! is kept as part of the stored text.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    /// 1-based source line.
    pub line: usize,
    pub timestamp: Option<f64>,
    pub speaker: Option<String>,
    /// Text after the speaker tag.
    pub text: String,
}

impl Turn {
    /// The text stored for this turn: `Speaker: text`, or just the text.
    pub fn content(&self) -> String {
        match &self.speaker {
            Some(s) => format!("{s}: {}", self.text),
            None => self.text.clone(),
        }
    }
}

impl fmt::Display for Turn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(t) = self.timestamp {
            write!(f, "@{t} ")?;
        }
        f.write_str(&self.content())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn speaker_tag(s: &str) -> Option<(&str, &str)> {
    let (head, rest) = s.split_once(':')?;
    let head = head.trim();
    let plausible = !head.is_empty()
        && head.split_whitespace().count() <= 3
        && head
            .chars()
            .all(|c| c.is_alphanumeric() || c == ' ' || c == '_' || c == '-' || c == '.');
    plausible.then(|| (head, rest.trim()))
}

pub fn parse_conversation(input: &str) -> Result<Vec<Turn>, ParseError> {
    let mut turns = Vec::new();
    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        let mut s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let mut timestamp = None;
        if let Some(rest) = s.strip_prefix('@') {
            let (num, tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            let t: f64 = num.parse().map_err(|_| ParseError {
                line,
                message: format!("bad timestamp {num:?}"),
            })?;
            if !t.is_finite() || t < 0.0 {
                return Err(ParseError {
                    line,
                    message: format!("timestamp {t} must be finite and non-negative"),
                });
            }
            timestamp = Some(t);
            s = tail.trim();
        }
        let (speaker, text) = match speaker_tag(s) {
            Some((who, text)) => (Some(who.to_string()), text),
            None => (None, s),
        };
        if text.is_empty() {
            return Err(ParseError {
                line,
                message: "turn has no text".into(),
            });
        }
        turns.push(Turn {
            line,
            timestamp,
            speaker,
            text: text.to_string(),
        });
    }
    Ok(turns)
}
