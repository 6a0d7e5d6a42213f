use std::collections::HashSet;

use serde::Deserialize;

use super::{Category, ConceptExtractor, ExtractedEdgeHint, ExtractedItem, Extraction};
use crate::error::ExtractError;

const BUILTIN_LEXICON: &str = include_str!("../../data/lexicon-v1.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct Confidence {
    pub preference: f64,
    pub event: f64,
    pub person: f64,
    pub other: f64,
}

/// Word lists driving [`RuleExtractor`]. Loaded from a versioned TOML file.
#[derive(Debug, Clone, Deserialize)]
pub struct Lexicon {
    pub version: u32,
    pub preference_verbs: Vec<String>,
    pub event_prefixes: Vec<String>,
    pub event_suffixes: Vec<String>,
    pub person_cues: Vec<String>,
    pub determiners: Vec<String>,
    pub phrase_stops: Vec<String>,
    pub stop_capitalized: Vec<String>,
    pub months: Vec<String>,
    pub max_phrase_words: usize,
    pub confidence: Confidence,
}

impl Lexicon {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_LEXICON).expect("bundled lexicon parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, ExtractError> {
        toml::from_str(text).map_err(|e| ExtractError::Lexicon(e.to_string()))
    }
}

/// One word of a sentence: the cleaned form plus whether punctuation followed it.
#[derive(Debug)]
struct Word<'a> {
    text: &'a str,
    lower: String,
    breaks_after: bool,
}

fn words(sentence: &str) -> Vec<Word<'_>> {
    sentence
        .split_whitespace()
        .filter_map(|raw| {
            let text = raw.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
            let text = text.trim_matches('\'');
            if text.is_empty() {
                return None;
            }
            let breaks_after = raw
                .chars()
                .last()
                .is_some_and(|c| matches!(c, ',' | ':' | ')' | '"'));
            Some(Word {
                text,
                lower: text.to_lowercase(),
                breaks_after,
            })
        })
        .collect()
}

fn is_capitalized(word: &str) -> bool {
    let mut chars = word.chars();
    chars.next().is_some_and(char::is_uppercase) && word.chars().count() >= 2
}

fn is_iso_date(word: &str) -> bool {
    let parts: Vec<&str> = word.split('-').collect();
    parts.len() == 3
        && [4, 2, 2]
            .iter()
            .zip(&parts)
            .all(|(n, p)| p.len() == *n && p.chars().all(|c| c.is_ascii_digit()))
}

/// Deterministic lexicon-driven extractor.
///
/// Rules, applied per sentence:
/// - capitalized words (two or more characters) that do not open the sentence
///   are entities; runs of them form one name; a preceding person cue makes
///   the entity a Person, otherwise Other;
/// - a preference verb followed by a short phrase yields a Preference;
/// - an event prefix ("went to") or suffix ("ski trip") yields an Event;
/// - ISO dates and month-day pairs become the time hint of that sentence's items.
///
/// Items are deduplicated by lowercase name within a window, first rule wins.
#[derive(Debug, Clone)]
pub struct RuleExtractor {
    lexicon: Lexicon,
}

impl Default for RuleExtractor {
    fn default() -> Self {
        Self::new(Lexicon::builtin())
    }
}

impl RuleExtractor {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    fn listed(list: &[String], word: &str) -> bool {
        list.iter().any(|w| w == word)
    }

    /// Phrase starting at `start`, skipping determiners, stopping at a stop word.
    fn phrase(&self, ws: &[Word<'_>], mut start: usize) -> Option<String> {
        while start < ws.len() && Self::listed(&self.lexicon.determiners, &ws[start].lower) {
            if ws[start].breaks_after {
                return None;
            }
            start += 1;
        }
        let mut taken = Vec::new();
        for w in ws.iter().skip(start) {
            if taken.len() == self.lexicon.max_phrase_words
                || Self::listed(&self.lexicon.phrase_stops, &w.lower)
            {
                break;
            }
            taken.push(w.text);
            if w.breaks_after {
                break;
            }
        }
        (!taken.is_empty()).then(|| taken.join(" "))
    }

    fn time_hint(&self, ws: &[Word<'_>]) -> Option<String> {
        for (i, w) in ws.iter().enumerate() {
            if is_iso_date(w.text) {
                return Some(w.text.to_string());
            }
            if Self::listed(&self.lexicon.months, &w.lower) {
                if let Some(day) = ws
                    .get(i + 1)
                    .filter(|d| d.text.len() <= 2 && d.text.chars().all(|c| c.is_ascii_digit()))
                {
                    return Some(format!("{} {}", w.text, day.text));
                }
            }
        }
        None
    }

    fn sentence_items(&self, sentence: &str) -> (Vec<ExtractedItem>, Vec<ExtractedEdgeHint>) {
        let ws = words(sentence);
        let lx = &self.lexicon;
        let time = self.time_hint(&ws);
        let mut items: Vec<ExtractedItem> = Vec::new();
        let item =
            |name: String, category: Category, confidence: f64, attribute: Option<String>| {
                ExtractedItem {
                    name,
                    category,
                    attribute,
                    confidence,
                    time_hint: time.clone(),
                }
            };

        for (i, w) in ws.iter().enumerate() {
            if Self::listed(&lx.preference_verbs, &w.lower) && !w.breaks_after {
                if let Some(p) = self.phrase(&ws, i + 1) {
                    let attr = format!("{} {}", w.lower, p.to_lowercase());
                    items.push(item(
                        p,
                        Category::Preference,
                        lx.confidence.preference,
                        Some(attr),
                    ));
                }
            }
            if let Some(next) = ws.get(i + 1) {
                let pair = format!("{} {}", w.lower, next.lower);
                if Self::listed(&lx.event_prefixes, &pair) && !next.breaks_after {
                    if let Some(p) = self.phrase(&ws, i + 2) {
                        items.push(item(p, Category::Event, lx.confidence.event, Some(pair)));
                    }
                }
            }
            if i > 0 && Self::listed(&lx.event_suffixes, &w.lower) {
                let prev = &ws[i - 1];
                let plain = !prev.breaks_after
                    && !Self::listed(&lx.determiners, &prev.lower)
                    && !Self::listed(&lx.phrase_stops, &prev.lower);
                if plain {
                    let name = format!("{} {}", prev.lower, w.lower);
                    items.push(item(name, Category::Event, lx.confidence.event, None));
                }
            }
        }

        let mut i = 1;
        while i < ws.len() {
            let w = &ws[i];
            if is_capitalized(w.text) && !Self::listed(&lx.stop_capitalized, w.text) {
                let cue = Self::listed(&lx.person_cues, &ws[i - 1].lower);
                let mut parts = vec![w.text];
                let mut j = i;
                while !ws[j].breaks_after
                    && j + 1 < ws.len()
                    && is_capitalized(ws[j + 1].text)
                    && !Self::listed(&lx.stop_capitalized, ws[j + 1].text)
                {
                    j += 1;
                    parts.push(ws[j].text);
                }
                let (cat, conf) = if cue {
                    (Category::Person, lx.confidence.person)
                } else {
                    (Category::Other, lx.confidence.other)
                };
                items.push(item(parts.join(" "), cat, conf, None));
                i = j + 1;
            } else {
                i += 1;
            }
        }

        let mut hints = Vec::new();
        for person in items.iter().filter(|x| x.category == Category::Person) {
            for other in &items {
                let (src, rel, tgt, w) = match other.category {
                    Category::Preference => (&person.name, "HAS_INTEREST", &other.name, 1.0),
                    Category::Event => (&other.name, "INVOLVES", &person.name, 0.8),
                    _ => continue,
                };
                if !src.eq_ignore_ascii_case(tgt) {
                    hints.push(ExtractedEdgeHint {
                        src_name: src.clone(),
                        relation: rel.to_string(),
                        tgt_name: tgt.clone(),
                        weight: w,
                    });
                }
            }
        }
        (items, hints)
    }
}

impl ConceptExtractor for RuleExtractor {
    fn extract(&self, turns: &[&str]) -> Result<Extraction, ExtractError> {
        let mut out = Extraction::default();
        let mut seen_items = HashSet::new();
        let mut seen_hints = HashSet::new();
        for turn in turns {
            for sentence in turn.split(['.', '!', '?', ';', '\n']) {
                let (items, hints) = self.sentence_items(sentence);
                for it in items {
                    if seen_items.insert(it.name.to_lowercase()) {
                        out.items.push(it);
                    }
                }
                for h in hints {
                    let key = (
                        h.src_name.to_lowercase(),
                        h.relation.clone(),
                        h.tgt_name.to_lowercase(),
                    );
                    if seen_hints.insert(key) {
                        out.edge_hints.push(h);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(turns: &[&str]) -> Vec<(String, Category)> {
        RuleExtractor::default()
            .extract(turns)
            .unwrap()
            .items
            .into_iter()
            .map(|i| (i.name, i.category))
            .collect()
    }

    #[test]
    fn lexicon_is_versioned() {
        assert_eq!(Lexicon::builtin().version, 1);
    }

    #[test]
    fn person_after_cue() {
        assert_eq!(
            names(&["I met Kendall at the airport"]),
            vec![("Kendall".to_string(), Category::Person)]
        );
    }

    #[test]
    fn preference_phrase() {
        assert_eq!(
            names(&["i like camping a lot"]),
            vec![("camping".to_string(), Category::Preference)]
        );
    }

    #[test]
    fn blank_window_yields_nothing() {
        let out = RuleExtractor::default().extract(&["", "   "]).unwrap();
        assert!(out.items.is_empty() && out.edge_hints.is_empty());
        assert!(RuleExtractor::default()
            .extract(&[])
            .unwrap()
            .items
            .is_empty());
    }

    #[test]
    fn events_dates_and_hints() {
        let out = RuleExtractor::default()
            .extract(&[
                "We went on a ski trip with Mark on 2023-05-12.",
                "Then we went to Zermatt",
            ])
            .unwrap();
        let got: Vec<_> = out
            .items
            .iter()
            .map(|i| (i.name.as_str(), i.category))
            .collect();
        assert_eq!(
            got,
            vec![
                ("ski trip", Category::Event),
                ("Mark", Category::Person),
                ("Zermatt", Category::Event),
            ]
        );
        assert_eq!(out.items[0].time_hint.as_deref(), Some("2023-05-12"));
        assert_eq!(out.items[2].time_hint, None);
        assert_eq!(out.edge_hints.len(), 1);
        assert_eq!(out.edge_hints[0].relation, "INVOLVES");
    }

    #[test]
    fn dedup_is_case_insensitive_and_sentence_start_is_skipped() {
        let got = names(&["Camping is fun. I love camping", "we saw Paris and paris"]);
        assert_eq!(
            got,
            vec![
                ("camping".to_string(), Category::Preference),
                ("Paris".to_string(), Category::Person),
            ]
        );
    }

    #[test]
    fn deterministic_per_window() {
        let turns = [
            "Alice: I met Bob Stone at the Louvre on May 3",
            "I enjoy painting",
        ];
        let a = RuleExtractor::default().extract(&turns).unwrap();
        let b = RuleExtractor::default().extract(&turns).unwrap();
        assert_eq!(a, b);
        assert!(a.items.iter().any(|i| i.name == "Bob Stone"));
        assert!(a.items.iter().all(|i| i.name != "Alice"));
    }
}
