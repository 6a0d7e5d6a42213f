//! Extraction prompt builder and the parser for its two-block response.

use std::fmt::Write;

use serde_json::Value;

use super::{Category, ExtractedEdgeHint, ExtractedItem, Extraction};
use crate::error::ExtractError;

const SYSTEM_INSTRUCTION: &str = "You are an expert knowledge engineer building a semantic graph \
from conversation history. Your goal is to consolidate episodic details into structured knowledge nodes.";

const REASONING: &str = "\
1. Analyze: Identify new facts not present in previous context.
2. Classify: Categorize facts into Identity, Preference, Event, or Technical.
3. Extract: Form canonical node names (e.g., \"likes camping\" -> \"Camping Preference\").";

const NODE_SCHEMA: &str = r#"[
  {"name": "Camping", "type": "Preference", "confidence": 0.95},
  {"name": "John", "type": "Person", "attr": "Has Green Jacket"},
  {"name": "Airport Trip", "type": "Event", "time": "2023-05-12"}
]"#;

const EDGE_SCHEMA: &str = r#"[
  {"src": "John", "rel": "HAS_INTEREST", "tgt": "Camping", "w": 1.0},
  {"src": "Airport Trip", "rel": "INVOLVES", "tgt": "John", "w": 0.8}
]"#;

/// Render the graph-construction prompt for one consolidation window.
pub fn build_extraction_prompt(turns: &[&str]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "System Instruction: {SYSTEM_INSTRUCTION}");
    out.push('\n');
    let _ = writeln!(
        out,
        "Input Context: {} recent conversation turns.",
        turns.len()
    );
    for (i, t) in turns.iter().enumerate() {
        let _ = writeln!(out, "Turn {}: {}", i + 1, t);
    }
    out.push('\n');
    let _ = writeln!(out, "Reasoning (Chain of Thought):\n{REASONING}");
    out.push('\n');
    let _ = writeln!(out, "Task 1: Node Extraction (JSON)\n{NODE_SCHEMA}");
    out.push('\n');
    let _ = writeln!(
        out,
        "Task 2: Edge Formation\nLink new nodes to existing anchors. Use weights w in [0.0, 1.0].\n{EDGE_SCHEMA}"
    );
    out
}

struct Block {
    start: usize,
    end: usize,
    /// Byte offsets of the records (top-level objects) inside the block.
    records: Vec<usize>,
}

/// Top-level `[...]` spans, ignoring brackets inside JSON strings.
fn find_blocks(text: &str) -> Result<Vec<Block>, usize> {
    let mut blocks = Vec::new();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    let mut current: Option<Block> = None;
    for (i, c) in text.char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' if depth > 0 => in_string = true,
            '[' | '{' => {
                if depth == 0 {
                    if c == '{' {
                        // prose braces outside a block are ignored
                        continue;
                    }
                    current = Some(Block {
                        start: i,
                        end: i,
                        records: Vec::new(),
                    });
                } else if depth == 1 && c == '{' {
                    if let Some(b) = current.as_mut() {
                        b.records.push(i);
                    }
                }
                depth += 1;
            }
            ']' | '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    let mut b = current.take().expect("open block");
                    b.end = i + 1;
                    blocks.push(b);
                }
            }
            _ => {}
        }
    }
    match current {
        Some(b) => Err(b.start),
        None => Ok(blocks),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn parse_block(text: &str, block: &Block, name: &'static str) -> Result<Vec<Value>, ExtractError> {
    let body = &text[block.start..block.end];
    serde_json::from_str::<Vec<Value>>(body).map_err(|e| {
        let (bl, bc) = line_col(text, block.start);
        let (line, column) = if e.line() <= 1 {
            (bl, bc + e.column().saturating_sub(1))
        } else {
            (bl + e.line() - 1, e.column())
        };
        ExtractError::Malformed {
            block: name,
            line,
            column,
            message: e.to_string(),
        }
    })
}

fn record_error(
    text: &str,
    block: &Block,
    name: &'static str,
    index: usize,
    message: impl Into<String>,
) -> ExtractError {
    let offset = block.records.get(index).copied().unwrap_or(block.start);
    let (line, column) = line_col(text, offset);
    ExtractError::InvalidRecord {
        block: name,
        index,
        line,
        column,
        message: message.into(),
    }
}

fn unit_weight(v: Option<&Value>, default: f64) -> Result<f64, String> {
    match v {
        None | Some(Value::Null) => Ok(default),
        Some(Value::Number(n)) => {
            let x = n.as_f64().ok_or("not a finite number")?;
            if (0.0..=1.0).contains(&x) {
                Ok(x)
            } else {
                Err(format!("{x} is outside [0, 1]"))
            }
        }
        Some(other) => Err(format!("expected a number, found {other}")),
    }
}

fn opt_string(v: Option<&Value>) -> Result<Option<String>, String> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
        Some(other) => Err(format!("expected a string, found {other}")),
    }
}

fn required_string(v: Option<&Value>, field: &str) -> Result<String, String> {
    opt_string(v)?.ok_or_else(|| format!("missing or empty \"{field}\""))
}

fn parse_item(v: &Value) -> Result<ExtractedItem, String> {
    let obj = v.as_object().ok_or("record is not an object")?;
    let name = required_string(obj.get("name"), "name")?;
    // Types outside the closed set are kept as Other rather than dropped.
    let category = opt_string(obj.get("type"))?
        .map(|t| t.parse().unwrap_or(Category::Other))
        .unwrap_or(Category::Other);
    Ok(ExtractedItem {
        name,
        category,
        attribute: opt_string(obj.get("attr"))?,
        confidence: unit_weight(obj.get("confidence"), 1.0)?,
        time_hint: opt_string(obj.get("time"))?,
    })
}

fn parse_hint(v: &Value) -> Result<ExtractedEdgeHint, String> {
    let obj = v.as_object().ok_or("record is not an object")?;
    let src_name = required_string(obj.get("src"), "src")?;
    let tgt_name = required_string(obj.get("tgt"), "tgt")?;
    if src_name.eq_ignore_ascii_case(&tgt_name) {
        return Err(format!("edge links {src_name:?} to itself"));
    }
    Ok(ExtractedEdgeHint {
        src_name,
        relation: opt_string(obj.get("rel"))?.unwrap_or_else(|| "RELATED_TO".into()),
        tgt_name,
        weight: unit_weight(obj.get("w"), 1.0)?,
    })
}

/// Parse a model response holding a node block and an optional edge block.
pub fn parse_extraction_response(text: &str) -> Result<Extraction, ExtractError> {
    let blocks = find_blocks(text).map_err(|start| {
        let (line, column) = line_col(text, start);
        ExtractError::Malformed {
            block: "nodes",
            line,
            column,
            message: "unterminated bracket".into(),
        }
    })?;
    let Some(nodes) = blocks.first() else {
        let (line, column) = line_col(text, text.len());
        return Err(ExtractError::Malformed {
            block: "nodes",
            line,
            column,
            message: "no record block found".into(),
        });
    };
    let mut out = Extraction::default();
    for (i, v) in parse_block(text, nodes, "nodes")?.iter().enumerate() {
        out.items
            .push(parse_item(v).map_err(|m| record_error(text, nodes, "nodes", i, m))?);
    }
    if let Some(edges) = blocks.get(1) {
        for (i, v) in parse_block(text, edges, "edges")?.iter().enumerate() {
            out.edge_hints
                .push(parse_hint(v).map_err(|m| record_error(text, edges, "edges", i, m))?);
        }
    }
    Ok(out)
}
