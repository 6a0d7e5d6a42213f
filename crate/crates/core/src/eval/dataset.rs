//! QA datasets: the native line-delimited layout and a LoCoMo adapter.
//!
//! Native layout: one JSON document per line, one conversation per document.
//!
//! ```text
//! {"id": "c1",
//!  "turns": [{"speaker": "Alice", "text": "I met Mark skiing", "timestamp": 0}],
//!  "qa": [{"question": "Where did Alice meet Mark?", "answer": "skiing",
//!          "category": "C1", "evidence": ["0"]}]}
//! ```
//!
//! `speaker` and `timestamp` are optional; timestamps, if given, must not
//! decrease. `category` is `C1`..`C5`, a name (`single-hop`, `temporal`,
//! `open-domain`, `multi-hop`, `adversarial`) or the integer 1..5 of the `C`
//! numbering. `evidence` is optional. Malformed lines and QA records are
//! skipped and reported, never fatal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::EvalError;

/// Gold answer used for adversarial questions that have none.
pub const ADVERSARIAL_GOLD: &str = "Not mentioned";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QACategory {
    SingleHop,
    Temporal,
    OpenDomain,
    MultiHop,
    Adversarial,
}

impl QACategory {
    pub const ALL: [QACategory; 5] = [
        QACategory::SingleHop,
        QACategory::Temporal,
        QACategory::OpenDomain,
        QACategory::MultiHop,
        QACategory::Adversarial,
    ];

    /// `C1`..`C5`.
    pub fn code(self) -> &'static str {
        ["C1", "C2", "C3", "C4", "C5"][self as usize]
    }

    pub fn name(self) -> &'static str {
        [
            "single-hop",
            "temporal",
            "open-domain",
            "multi-hop",
            "adversarial",
        ][self as usize]
    }

    pub fn from_index(i: u64) -> Option<Self> {
        (1..=5).contains(&i).then(|| Self::ALL[i as usize - 1])
    }

    /// LoCoMo's integer labels: 1 multi-hop, 2 temporal, 3 open-domain,
    /// 4 single-hop, 5 adversarial.
    pub fn from_locomo(i: u64) -> Option<Self> {
        use QACategory::*;
        match i {
            1 => Some(MultiHop),
            2 => Some(Temporal),
            3 => Some(OpenDomain),
            4 => Some(SingleHop),
            5 => Some(Adversarial),
            _ => None,
        }
    }
}

impl fmt::Display for QACategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.code(), self.name())
    }
}

impl FromStr for QACategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        QACategory::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s) || c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub conversation_id: String,
    pub question: String,
    pub gold_answer: String,
    pub category: QACategory,
    pub evidence_turn_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogTurn {
    pub speaker: Option<String>,
    pub text: String,
    pub timestamp: Option<f64>,
}

impl DialogTurn {
    pub fn content(&self) -> String {
        match &self.speaker {
            Some(s) => format!("{s}: {}", self.text),
            None => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<DialogTurn>,
    pub questions: Vec<QAInstance>,
}

/// A skipped record and why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub conversations: Vec<Conversation>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Dataset {
    pub fn question_count(&self) -> usize {
        self.conversations.iter().map(|c| c.questions.len()).sum()
    }
}

fn answer_text(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn evidence(v: Option<&Value>) -> Option<Vec<String>> {
    let arr = v?.as_array()?;
    Some(
        arr.iter()
            .map(|e| match e {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect(),
    )
}

fn native_category(v: Option<&Value>) -> Result<QACategory, String> {
    match v {
        Some(Value::String(s)) => s.parse(),
        Some(Value::Number(n)) => n
            .as_u64()
            .and_then(QACategory::from_index)
            .ok_or_else(|| format!("category {n} is not in 1..5")),
        _ => Err("missing category".into()),
    }
}

fn native_qa(conv: &str, v: &Value) -> Result<QAInstance, String> {
    let question = v
        .get("question")
        .and_then(Value::as_str)
        .filter(|q| !q.trim().is_empty())
        .ok_or("missing question")?;
    let category = native_category(v.get("category"))?;
    let gold_answer = match answer_text(v.get("answer")) {
        Some(a) => a,
        None if category == QACategory::Adversarial => ADVERSARIAL_GOLD.to_string(),
        None => return Err("missing answer".into()),
    };
    Ok(QAInstance {
        conversation_id: conv.to_string(),
        question: question.trim().to_string(),
        gold_answer,
        category,
        evidence_turn_ids: evidence(v.get("evidence")),
    })
}

fn native_turn(v: &Value) -> Result<DialogTurn, String> {
    let text = v
        .get("text")
        .and_then(Value::as_str)
        .filter(|t| !t.trim().is_empty())
        .ok_or("turn without text")?;
    let timestamp = match v.get("timestamp") {
        None | Some(Value::Null) => None,
        Some(t) => Some(
            t.as_f64()
                .filter(|t| t.is_finite() && *t >= 0.0)
                .ok_or("bad timestamp")?,
        ),
    };
    Ok(DialogTurn {
        speaker: v.get("speaker").and_then(Value::as_str).map(str::to_string),
        text: text.trim().to_string(),
        timestamp,
    })
}

/// Parse the native line-delimited layout.
pub fn parse_jsonl(text: &str) -> Dataset {
    let mut ds = Dataset::default();
    for (i, line) in text.lines().enumerate() {
        let loc = format!("line {}", i + 1);
        if line.trim().is_empty() {
            continue;
        }
        let doc: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                ds.diagnostics.push(Diagnostic {
                    location: loc,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let id = match doc.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("conversation-{}", i + 1),
        };
        let turns: Result<Vec<_>, _> = doc
            .get("turns")
            .and_then(Value::as_array)
            .ok_or_else(|| "missing turns".to_string())
            .and_then(|ts| ts.iter().map(native_turn).collect());
        let turns = match turns {
            Ok(t) => t,
            Err(message) => {
                ds.diagnostics.push(Diagnostic {
                    location: loc,
                    message,
                });
                continue;
            }
        };
        let mut questions = Vec::new();
        for (j, q) in doc
            .get("qa")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .enumerate()
        {
            match native_qa(&id, q) {
                Ok(q) => questions.push(q),
                Err(message) => ds.diagnostics.push(Diagnostic {
                    location: format!("{loc}, qa {j}"),
                    message,
                }),
            }
        }
        ds.conversations.push(Conversation {
            id,
            turns,
            questions,
        });
    }
    ds
}

/// Adapter for LoCoMo's native JSON (an array of samples with
/// `conversation.session_<n>` turn lists and a `qa` list).
pub fn parse_locomo(text: &str) -> Result<Dataset, EvalError> {
    let samples: Vec<Value> =
        serde_json::from_str(text).map_err(|e| EvalError::Dataset(e.to_string()))?;
    let mut ds = Dataset::default();
    for (i, s) in samples.iter().enumerate() {
        let id = s
            .get("sample_id")
            .and_then(Value::as_str)
            .map_or_else(|| format!("sample-{i}"), str::to_string);
        let Some(conv) = s.get("conversation").and_then(Value::as_object) else {
            ds.diagnostics.push(Diagnostic {
                location: format!("sample {i}"),
                message: "missing conversation".into(),
            });
            continue;
        };
        let mut sessions: Vec<(u64, &Vec<Value>)> = conv
            .iter()
            .filter_map(|(k, v)| {
                let n = k.strip_prefix("session_")?.parse().ok()?;
                Some((n, v.as_array()?))
            })
            .collect();
        sessions.sort_by_key(|(n, _)| *n);
        let mut turns = Vec::new();
        for (_, ts) in sessions {
            for t in ts {
                let Some(text) = t
                    .get("text")
                    .and_then(Value::as_str)
                    .filter(|x| !x.trim().is_empty())
                else {
                    continue;
                };
                turns.push(DialogTurn {
                    speaker: t.get("speaker").and_then(Value::as_str).map(str::to_string),
                    text: text.trim().to_string(),
                    timestamp: None,
                });
            }
        }
        let mut questions = Vec::new();
        for (j, q) in s
            .get("qa")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .enumerate()
        {
            let loc = format!("sample {i}, qa {j}");
            let Some(category) = q
                .get("category")
                .and_then(Value::as_u64)
                .and_then(QACategory::from_locomo)
            else {
                ds.diagnostics.push(Diagnostic {
                    location: loc,
                    message: "bad category".into(),
                });
                continue;
            };
            let Some(question) = q.get("question").and_then(Value::as_str) else {
                ds.diagnostics.push(Diagnostic {
                    location: loc,
                    message: "missing question".into(),
                });
                continue;
            };
            let gold_answer = match (category, answer_text(q.get("answer"))) {
                (QACategory::Adversarial, _) => ADVERSARIAL_GOLD.to_string(),
                (_, Some(a)) => a,
                (_, None) => {
                    ds.diagnostics.push(Diagnostic {
                        location: loc,
                        message: "missing answer".into(),
                    });
                    continue;
                }
            };
            questions.push(QAInstance {
                conversation_id: id.clone(),
                question: question.to_string(),
                gold_answer,
                category,
                evidence_turn_ids: evidence(q.get("evidence")),
            });
        }
        ds.conversations.push(Conversation {
            id,
            turns,
            questions,
        });
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn native_layout_with_bad_records() {
        let text = r#"{"id":"a","turns":[{"speaker":"Al","text":"hi"}],"qa":[{"question":"q?","answer":"hi","category":"C1"},{"question":"x","category":"C9"},{"question":"who?","category":5}]}
not json
{"id":"b","turns":[{"text":""}]}
"#;
        let ds = parse_jsonl(text);
        assert_eq!(ds.conversations.len(), 1);
        assert_eq!(ds.conversations[0].questions.len(), 2);
        assert_eq!(
            ds.conversations[0].questions[1].gold_answer,
            ADVERSARIAL_GOLD
        );
        assert_eq!(ds.diagnostics.len(), 3);
        assert_eq!(ds.conversations[0].turns[0].content(), "Al: hi");
    }

    #[test]
    fn locomo_adapter() {
        let text = r#"[{"sample_id":"s1","conversation":{"speaker_a":"A","session_2":[{"speaker":"A","dia_id":"D2:1","text":"second"}],"session_1":[{"speaker":"B","dia_id":"D1:1","text":"first"}],"session_1_date_time":"x"},
          "qa":[{"question":"q1","answer":2022,"category":2,"evidence":["D1:1"]},{"question":"q2","adversarial_answer":"z","category":5},{"question":"q3","category":1}]}]"#;
        let ds = parse_locomo(text).unwrap();
        let c = &ds.conversations[0];
        assert_eq!(c.turns[0].text, "first");
        assert_eq!(c.questions[0].category, QACategory::Temporal);
        assert_eq!(c.questions[0].gold_answer, "2022");
        assert_eq!(c.questions[1].category, QACategory::Adversarial);
        assert_eq!(ds.diagnostics.len(), 1);
    }

    #[test]
    fn category_parsing() {
        assert_eq!("c4".parse::<QACategory>().unwrap(), QACategory::MultiHop);
        assert_eq!(
            "Open-Domain".parse::<QACategory>().unwrap(),
            QACategory::OpenDomain
        );
        assert_eq!(QACategory::from_index(1), Some(QACategory::SingleHop));
        assert_eq!(QACategory::from_index(6), None);
    }
}
