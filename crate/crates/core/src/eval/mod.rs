//! Evaluation harness: replay conversations, answer questions, score answers.

mod dataset;
mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

pub use dataset::{
    parse_jsonl, parse_locomo, Conversation, Dataset, Diagnostic, DialogTurn, QACategory,
    QAInstance, ADVERSARIAL_GOLD,
};
pub use metrics::{bleu1, normalize_tokens, token_f1, weighted_average};

use crate::embedding::EmbeddingProvider;
use crate::engine::Engine;
use crate::error::{EvalError, Result};
use crate::extract::ConceptExtractor;
use crate::params::HyperParams;
use crate::retrieval::{build_verification_prompt, RetrievalCandidate, Verdict};

/// Produces an answer from retrieved context.
pub trait Answerer: Send + Sync {
    /// `context` is in presentation order; `prompt` is the verification prompt.
    fn answer(&self, question: &str, context: &[RetrievalCandidate], prompt: &str) -> String;
}

/// Answers with the text of the top-scored candidate, minus any speaker tag.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoAnswerer;

impl Answerer for EchoAnswerer {
    fn answer(&self, _question: &str, context: &[RetrievalCandidate], _prompt: &str) -> String {
        let Some(top) = context.iter().min_by_key(|c| c.rank) else {
            return String::new();
        };
        let text = top.text.lines().next().unwrap_or_default();
        match text.split_once(": ") {
            Some((_, rest)) => rest.to_string(),
            None => text.to_string(),
        }
    }
}

impl<F> Answerer for F
where
    F: Fn(&str, &[RetrievalCandidate], &str) -> String + Send + Sync,
{
    fn answer(&self, question: &str, context: &[RetrievalCandidate], prompt: &str) -> String {
        self(question, context, prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionOutcome {
    pub conversation_id: String,
    pub question: String,
    pub category: QACategory,
    pub gold: String,
    pub prediction: String,
    pub rejected: bool,
    pub confidence: f64,
    pub f1: f64,
    pub bleu1: f64,
    /// Whitespace tokens in the verification prompt (0 when rejected).
    pub prompt_tokens: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CategoryScore {
    pub f1: f64,
    pub bleu1: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RejectionStats {
    /// Adversarial questions rejected by the gate.
    pub true_rejections: usize,
    /// Answerable questions rejected by the gate.
    pub false_refusals: usize,
    pub false_refusal_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_category: BTreeMap<QACategory, CategoryScore>,
    /// Count-weighted means over the four non-adversarial categories; `None`
    /// if none of them has a question.
    pub weighted_f1: Option<f64>,
    pub weighted_bleu1: Option<f64>,
    pub rejection_stats: RejectionStats,
    pub outcomes: Vec<QuestionOutcome>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Minimum scores for a passing run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Thresholds {
    pub min_weighted_f1: Option<f64>,
    pub min_weighted_bleu1: Option<f64>,
    pub max_false_refusal_rate: Option<f64>,
}

impl EvalReport {
    pub fn from_outcomes(outcomes: Vec<QuestionOutcome>, diagnostics: Vec<Diagnostic>) -> Self {
        let mut sums: BTreeMap<QACategory, (f64, f64, usize)> = BTreeMap::new();
        let mut stats = RejectionStats::default();
        let mut answerable = 0usize;
        for o in &outcomes {
            let e = sums.entry(o.category).or_insert((0.0, 0.0, 0));
            e.0 += o.f1;
            e.1 += o.bleu1;
            e.2 += 1;
            if o.category == QACategory::Adversarial {
                stats.true_rejections += usize::from(o.rejected);
            } else {
                answerable += 1;
                stats.false_refusals += usize::from(o.rejected);
            }
        }
        if answerable > 0 {
            stats.false_refusal_rate = stats.false_refusals as f64 / answerable as f64;
        }
        let per_category: BTreeMap<_, _> = sums
            .into_iter()
            .map(|(c, (f, b, n))| {
                (
                    c,
                    CategoryScore {
                        f1: f / n as f64,
                        bleu1: b / n as f64,
                        count: n,
                    },
                )
            })
            .collect();
        let (weighted_f1, weighted_bleu1) = Self::weighted(&per_category);
        Self {
            per_category,
            weighted_f1,
            weighted_bleu1,
            rejection_stats: stats,
            outcomes,
            diagnostics,
        }
    }

    /// Weighted F1 and BLEU-1 over the non-adversarial categories.
    pub fn weighted(
        per_category: &BTreeMap<QACategory, CategoryScore>,
    ) -> (Option<f64>, Option<f64>) {
        let scored: Vec<_> = per_category
            .iter()
            .filter(|(c, _)| **c != QACategory::Adversarial)
            .map(|(_, s)| *s)
            .collect();
        let f1: Vec<_> = scored.iter().map(|s| (s.f1, s.count)).collect();
        let bl: Vec<_> = scored.iter().map(|s| (s.bleu1, s.count)).collect();
        (weighted_average(&f1).ok(), weighted_average(&bl).ok())
    }

    /// Descriptions of every missed threshold.
    pub fn check(&self, t: &Thresholds) -> Vec<String> {
        let mut missed = Vec::new();
        let mut at_least = |name: &str, got: Option<f64>, want: Option<f64>| {
            if let Some(want) = want {
                match got {
                    Some(g) if g >= want => {}
                    g => missed.push(format!("{name} {g:?} below required {want}")),
                }
            }
        };
        at_least("weighted F1", self.weighted_f1, t.min_weighted_f1);
        at_least("weighted BLEU-1", self.weighted_bleu1, t.min_weighted_bleu1);
        if let Some(max) = t.max_false_refusal_rate {
            if self.rejection_stats.false_refusal_rate > max {
                missed.push(format!(
                    "false refusal rate {} above allowed {max}",
                    self.rejection_stats.false_refusal_rate
                ));
            }
        }
        missed
    }

    /// Human-readable table, scores in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>8} {:>8}",
            "category", "count", "F1", "BLEU-1"
        );
        for (c, s) in &self.per_category {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>8.2} {:>8.2}",
                c.to_string(),
                s.count,
                s.f1 * 100.0,
                s.bleu1 * 100.0
            );
        }
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}", v * 100.0));
        let _ = writeln!(out, "weighted F1      {}", pct(self.weighted_f1));
        let _ = writeln!(out, "weighted BLEU-1  {}", pct(self.weighted_bleu1));
        let r = &self.rejection_stats;
        let _ = writeln!(
            out,
            "rejections       true {} / false {} (FRR {:.2}%)",
            r.true_rejections,
            r.false_refusals,
            r.false_refusal_rate * 100.0
        );
        let tokens: usize = self.outcomes.iter().map(|o| o.prompt_tokens).sum();
        let _ = writeln!(out, "prompt tokens    {tokens}");
        if !self.diagnostics.is_empty() {
            let _ = writeln!(out, "skipped records  {}", self.diagnostics.len());
        }
        out
    }
}

/// Replay one conversation and answer its questions.
pub fn evaluate_conversation(
    conv: &Conversation,
    params: &HyperParams,
    embedder: Arc<dyn EmbeddingProvider>,
    extractor: Arc<dyn ConceptExtractor>,
    answerer: &dyn Answerer,
) -> Result<Vec<QuestionOutcome>> {
    let mut engine = Engine::with_components(params.clone(), embedder, extractor)?;
    for t in &conv.turns {
        engine.ingest_turn(&t.content(), "", t.timestamp)?;
    }
    let mut out = Vec::with_capacity(conv.questions.len());
    for q in &conv.questions {
        let r = engine.retrieve(&q.question)?;
        let rejected = r.verdict == Verdict::Rejected;
        let (prediction, prompt_tokens) = if rejected {
            (ADVERSARIAL_GOLD.to_string(), 0)
        } else {
            let prompt = build_verification_prompt(&q.question, &r.candidates);
            let n = prompt.split_whitespace().count();
            (answerer.answer(&q.question, &r.candidates, &prompt), n)
        };
        out.push(QuestionOutcome {
            conversation_id: conv.id.clone(),
            question: q.question.clone(),
            category: q.category,
            f1: token_f1(&prediction, &q.gold_answer),
            bleu1: bleu1(&prediction, &q.gold_answer),
            gold: q.gold_answer.clone(),
            prediction,
            rejected,
            confidence: r.confidence,
            prompt_tokens,
        });
    }
    Ok(out)
}

/// Evaluate every conversation (in parallel, results in input order).
/// Conversations that fail to replay are skipped with a diagnostic.
pub fn run_eval(
    dataset: &Dataset,
    params: &HyperParams,
    embedder: Arc<dyn EmbeddingProvider>,
    extractor: Arc<dyn ConceptExtractor>,
    answerer: &dyn Answerer,
) -> Result<EvalReport> {
    params.validate()?;
    if dataset.question_count() == 0 && dataset.conversations.is_empty() {
        return Err(EvalError::Dataset("dataset has no conversations".into()).into());
    }
    let results: Vec<_> = dataset
        .conversations
        .par_iter()
        .map(|c| evaluate_conversation(c, params, embedder.clone(), extractor.clone(), answerer))
        .collect();
    let mut outcomes = Vec::new();
    let mut diagnostics = dataset.diagnostics.clone();
    for (conv, r) in dataset.conversations.iter().zip(results) {
        match r {
            Ok(o) => outcomes.extend(o),
            Err(e) => diagnostics.push(Diagnostic {
                location: format!("conversation {}", conv.id),
                message: e.to_string(),
            }),
        }
    }
    Ok(EvalReport::from_outcomes(outcomes, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::default_providers;

    fn conv(questions: Vec<(&str, &str, QACategory)>) -> Conversation {
        Conversation {
            id: "c".into(),
            turns: vec![DialogTurn {
                speaker: Some("Alice".into()),
                text: "my jacket is green".into(),
                timestamp: None,
            }],
            questions: questions
                .into_iter()
                .map(|(q, a, c)| QAInstance {
                    conversation_id: "c".into(),
                    question: q.into(),
                    gold_answer: a.into(),
                    category: c,
                    evidence_turn_ids: None,
                })
                .collect(),
        }
    }

    fn run(ds: &Dataset, params: &HyperParams) -> EvalReport {
        let (e, x) = default_providers(params).unwrap();
        run_eval(ds, params, e, x, &EchoAnswerer).unwrap()
    }

    fn params() -> HyperParams {
        HyperParams {
            embed_dim: 64,
            ..HyperParams::default()
        }
    }

    #[test]
    fn echo_answers_a_one_fact_conversation() {
        let ds = Dataset {
            conversations: vec![conv(vec![(
                "what colour is my jacket",
                "green",
                QACategory::SingleHop,
            )])],
            diagnostics: vec![],
        };
        // An isolated episode settles below the default gate.
        let open = HyperParams {
            tau_gate: 0.0,
            ..params()
        };
        let r = run(&ds, &open);
        assert!(r.outcomes[0].f1 > 0.0);
        assert_eq!(
            r.weighted_f1,
            Some(r.per_category[&QACategory::SingleHop].f1)
        );
    }

    #[test]
    fn adversarial_rejection_counts() {
        let ds = Dataset {
            conversations: vec![conv(vec![
                (
                    "quantum zebra orchestra",
                    ADVERSARIAL_GOLD,
                    QACategory::Adversarial,
                ),
                ("what colour is my jacket", "green", QACategory::SingleHop),
            ])],
            diagnostics: vec![],
        };
        let r = run(&ds, &params());
        assert_eq!(r.rejection_stats.true_rejections, 1);
        assert_eq!(r.outcomes[0].f1, 1.0);

        let open = HyperParams {
            tau_gate: 0.0,
            ..params()
        };
        let r = run(&ds, &open);
        assert_eq!(r.rejection_stats, RejectionStats::default());
    }

    #[test]
    fn thresholds() {
        let ds = Dataset {
            conversations: vec![conv(vec![(
                "what colour is my jacket",
                "green",
                QACategory::SingleHop,
            )])],
            diagnostics: vec![],
        };
        let r = run(
            &ds,
            &HyperParams {
                tau_gate: 0.0,
                ..params()
            },
        );
        assert!(r.check(&Thresholds::default()).is_empty());
        let strict = Thresholds {
            min_weighted_f1: Some(1.01),
            ..Default::default()
        };
        assert_eq!(r.check(&strict).len(), 1);
        assert!(r.to_table().contains("weighted F1"));
    }
}
