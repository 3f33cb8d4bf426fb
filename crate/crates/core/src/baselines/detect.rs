use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::geometry::BoundingBox;
use crate::question::{first_noun, singular, Lexicon, Question};

/// Maps a question noun to the most similar detector label.
pub trait LabelMatcher {
    fn best_label(&self, noun: &str, labels: &BTreeSet<String>) -> Option<String>;
}

/// Exact match after singularising, plus a weighted synonym table; matches scoring below
/// `threshold` are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct SynonymMatcher {
    synonyms: BTreeMap<String, Vec<(String, f64)>>,
    pub threshold: f64,
}

const DEFAULT_SYNONYMS: &[(&str, &str, f64)] = &[
    ("puppy", "dog", 0.9),
    ("hound", "dog", 0.8),
    ("kitten", "cat", 0.9),
    ("kitty", "cat", 0.9),
    ("pony", "horse", 0.8),
    ("cattle", "cow", 0.8),
    ("calf", "cow", 0.7),
    ("automobile", "car", 0.9),
    ("vehicle", "car", 0.6),
    ("vehicle", "truck", 0.55),
    ("lorry", "truck", 0.9),
    ("ship", "boat", 0.8),
    ("sailboat", "boat", 0.8),
    ("animal", "dog", 0.4),
];

impl Default for SynonymMatcher {
    fn default() -> Self {
        let mut m = Self { synonyms: BTreeMap::new(), threshold: 0.5 };
        for &(word, label, score) in DEFAULT_SYNONYMS {
            m.insert(word, label, score);
        }
        m
    }
}

impl SynonymMatcher {
    pub fn insert(&mut self, word: &str, label: &str, score: f64) {
        self.synonyms.entry(word.to_string()).or_default().push((label.to_string(), score));
    }

    pub fn similarity(&self, noun: &str, label: &str) -> f64 {
        let noun = singular(noun);
        if noun == singular(label) {
            return 1.0;
        }
        self.synonyms
            .get(&noun)
            .into_iter()
            .flatten()
            .filter(|(l, _)| l == label)
            .map(|(_, s)| *s)
            .fold(0.0, f64::max)
    }
}

impl LabelMatcher for SynonymMatcher {
    fn best_label(&self, noun: &str, labels: &BTreeSet<String>) -> Option<String> {
        let mut best: Option<(&String, f64)> = None;
        for label in labels {
            let s = self.similarity(noun, label);
            if s >= self.threshold && best.is_none_or(|(_, b)| s > b) {
                best = Some((label, s));
            }
        }
        best.map(|(l, _)| l.clone())
    }
}

/// Number of detections carrying the label that best matches the question's first noun; 0 when
/// nothing matches.
pub fn detect_count(
    question: &Question,
    detections: &[(String, BoundingBox)],
    matcher: &dyn LabelMatcher,
    lex: &Lexicon,
) -> Result<usize> {
    let noun = first_noun(question, lex)?;
    let labels: BTreeSet<String> = detections.iter().map(|(l, _)| l.clone()).collect();
    Ok(match matcher.best_label(&noun, &labels) {
        Some(label) => detections.iter().filter(|(l, _)| *l == label).count(),
        None => 0,
    })
}
