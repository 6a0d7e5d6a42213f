//! Answer-quality metrics.

use std::collections::HashMap;

use crate::error::EvalError;

/// Lowercase, drop punctuation, split on whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

fn overlap(pred: &[String], gold: &[String]) -> usize {
    let g = counts(gold);
    counts(pred)
        .into_iter()
        .map(|(t, n)| n.min(g.get(t).copied().unwrap_or(0)))
        .sum()
}

/// Token-overlap F1. Both empty scores 1, exactly one empty scores 0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let (p, g) = (normalize_tokens(prediction), normalize_tokens(gold));
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let common = overlap(&p, &g) as f64;
    if common == 0.0 {
        return 0.0;
    }
    let precision = common / p.len() as f64;
    let recall = common / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Clipped unigram precision times the brevity penalty.
pub fn bleu1(prediction: &str, gold: &str) -> f64 {
    let (p, g) = (normalize_tokens(prediction), normalize_tokens(gold));
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let precision = overlap(&p, &g) as f64 / p.len() as f64;
    let bp = if p.len() < g.len() {
        (1.0 - g.len() as f64 / p.len() as f64).exp()
    } else {
        1.0
    };
    precision * bp
}

/// `sum(N_k * S_k) / sum(N_k)` over `(score, count)` pairs.
pub fn weighted_average(entries: &[(f64, usize)]) -> Result<f64, EvalError> {
    let total: usize = entries.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(EvalError::ZeroCount);
    }
    Ok(entries.iter().map(|(s, n)| s * *n as f64).sum::<f64>() / total as f64)
}
