//! Counting-question tooling: tokenisation, lexicon tagging, the simple/complex rule,
//! DETECT's subject noun, the positional filter, import filtering and absurd questions.

mod lexicon;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Rng;

pub use lexicon::{Lexicon, Tag, Tagger};
pub use vocab::Vocabulary;

/// Largest count accepted on import.
pub const MAX_ANSWER: i64 = 15;

/// Words that mark a positional-reasoning question.
pub const POSITIONAL_QUALIFIERS: [&str; 8] = ["left", "right", "top", "up", "bottom", "near", "on", "in"];

/// Lowercase word tokens; punctuation separates tokens and apostrophes are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace('\'', "")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub raw: String,
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

impl Question {
    pub fn parse(raw: &str, tagger: &dyn Tagger) -> Self {
        let tokens = tokenize(raw);
        let tags = tagger.tag_all(&tokens);
        Self {
            raw: raw.to_string(),
            tokens,
            tags,
        }
    }

    /// Index of the first token after a leading "how many".
    fn body_start(&self) -> usize {
        if self.tokens.len() >= 2 && self.tokens[0] == "how" && self.tokens[1] == "many" {
            2
        } else {
            0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionClass {
    Simple,
    Complex,
}

/// Remove every occurrence of each stop phrase (as a token run). Idempotent.
pub fn strip_stop_phrases(tokens: &[String], lex: &Lexicon) -> Vec<String> {
    let mut out = tokens.to_vec();
    loop {
        let mut changed = false;
        for phrase in lex.stop_phrases() {
            if phrase.is_empty() || phrase.len() > out.len() {
                continue;
            }
            if let Some(pos) = out.windows(phrase.len()).position(|w| w == phrase.as_slice()) {
                out.drain(pos..pos + phrase.len());
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Simple iff, after stop-phrase removal and the "how many" frame, the remainder has exactly
/// one noun and no adjectives or adverbs. An empty remainder is complex.
pub fn classify(q: &Question, lex: &Lexicon) -> QuestionClass {
    let stripped = strip_stop_phrases(&q.tokens, lex);
    let body: &[String] = if stripped.len() >= 2 && stripped[0] == "how" && stripped[1] == "many" {
        &stripped[2..]
    } else {
        &stripped
    };
    if body.is_empty() {
        return QuestionClass::Complex;
    }
    let mut counts: BTreeMap<Tag, usize> = BTreeMap::new();
    for tag in lex.tag_all(body) {
        *counts.entry(tag).or_default() += 1;
    }
    let count = |t: Tag| counts.get(&t).copied().unwrap_or(0);
    if count(Tag::Noun) == 1 && count(Tag::Adjective) == 0 && count(Tag::Adverb) == 0 {
        QuestionClass::Simple
    } else {
        QuestionClass::Complex
    }
}

pub fn classify_text(text: &str, lex: &Lexicon) -> QuestionClass {
    classify(&Question::parse(text, lex), lex)
}

/// Earliest noun after the "how many" prefix.
pub fn first_noun(q: &Question, lex: &Lexicon) -> Result<String> {
    let start = q.body_start();
    q.tokens[start..]
        .iter()
        .find(|t| lex.tag(t) == Tag::Noun)
        .cloned()
        .ok_or_else(|| Error::NoCountableNoun(q.raw.clone()))
}

/// True iff one of the positional qualifiers occurs as a whole word.
pub fn is_positional(text: &str) -> bool {
    tokenize(text)
        .iter()
        .any(|t| POSITIONAL_QUALIFIERS.contains(&t.as_str()))
}

/// Singular form used to compare question nouns with object labels.
pub fn singular(word: &str) -> String {
    const IRREGULAR: [(&str, &str); 5] = [
        ("people", "person"),
        ("men", "man"),
        ("women", "woman"),
        ("children", "child"),
        ("sheep", "sheep"),
    ];
    if let Some((_, s)) = IRREGULAR.iter().find(|(p, _)| *p == word) {
        return (*s).to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if !stem.is_empty() {
            return format!("{stem}y");
        }
    }
    for suffix in ["ches", "shes", "xes", "sses", "zes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.len() > 2 && word.ends_with('s') && !word.ends_with("ss") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordSource {
    Imported,
    Templated,
    Absurd,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub question: String,
    pub answer: i64,
    pub image_id: String,
    pub source: RecordSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_answers: Option<Vec<i64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    BadPrefix,
    OutOfRange,
    NoConsensus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImportDecision {
    Keep(QaRecord),
    Drop(DropReason),
}

/// Case-insensitive "how many" prefix with any whitespace between the words.
pub fn has_how_many_prefix(text: &str) -> bool {
    let mut words = text.split_whitespace().map(|w| {
        w.trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase()
    });
    matches!(
        (words.next().as_deref(), words.next().as_deref()),
        (Some("how"), Some("many"))
    )
}

/// Modal answer and its multiplicity; ties go to the smaller answer.
pub fn modal_answer(answers: &[i64]) -> Option<(i64, usize)> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &a in answers {
        *counts.entry(a).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(i64, usize)>, (a, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((a, c)),
        })
}

/// Keep counting questions with a whole-number answer in `[0, 15]`. When per-annotator answers
/// are present, at least `consensus_k` of them must agree and the agreed value becomes the
/// answer. `of_n` is the nominal panel size and only bounds how many answers are read.
pub fn import_filter(record: &QaRecord, consensus_k: usize, of_n: usize) -> ImportDecision {
    if !has_how_many_prefix(&record.question) {
        return ImportDecision::Drop(DropReason::BadPrefix);
    }
    let mut kept = record.clone();
    if let Some(answers) = &record.annotator_answers {
        let panel = &answers[..answers.len().min(of_n.max(1))];
        match modal_answer(panel) {
            Some((value, count)) if count >= consensus_k => kept.answer = value,
            _ => return ImportDecision::Drop(DropReason::NoConsensus),
        }
    }
    if !(0..=MAX_ANSWER).contains(&kept.answer) {
        return ImportDecision::Drop(DropReason::OutOfRange);
    }
    ImportDecision::Keep(kept)
}

/// Draw a pool question whose subject is absent from `present`, with its answer forced to 0.
pub fn make_absurd(
    present: &BTreeSet<String>,
    pool: &[QaRecord],
    lex: &Lexicon,
    rng: &mut Rng,
) -> Result<QaRecord> {
    if pool.is_empty() {
        return Err(Error::NoEligibleQuestion("empty question pool".into()));
    }
    let present: BTreeSet<String> = present.iter().map(|p| singular(&p.to_lowercase())).collect();
    let eligible: Vec<&QaRecord> = pool
        .iter()
        .filter(|r| match first_noun(&Question::parse(&r.question, lex), lex) {
            Ok(noun) => !present.contains(&singular(&noun)) && !present.contains(&noun),
            Err(_) => false,
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleQuestion(
            "every pool subject is present in the image".into(),
        ));
    }
    let mut chosen = eligible[rng.index(eligible.len())].clone();
    chosen.answer = 0;
    chosen.source = RecordSource::Absurd;
    chosen.annotator_answers = None;
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> Lexicon {
        Lexicon::default()
    }

    fn rec(q: &str, answer: i64) -> QaRecord {
        QaRecord {
            question: q.into(),
            answer,
            image_id: "img".into(),
            source: RecordSource::Imported,
            annotator_answers: None,
        }
    }

    #[test]
    fn classifies_quoted_questions() {
        let lex = lex();
        assert_eq!(classify_text("How many dogs?", &lex), QuestionClass::Simple);
        assert_eq!(classify_text("How many brown dogs?", &lex), QuestionClass::Complex);
        assert_eq!(
            classify_text("How many men are wearing red hats to the left of the tree?", &lex),
            QuestionClass::Complex
        );
    }

    #[test]
    fn stop_phrases_are_ignored() {
        let lex = lex();
        assert_eq!(classify_text("How many dogs in the photo?", &lex), QuestionClass::Simple);
        assert_eq!(classify_text("How many dogs are in the image?", &lex), QuestionClass::Simple);
        assert_eq!(classify_text("How many people are not wearing red shirts?", &lex), QuestionClass::Complex);
        assert_eq!(classify_text("How many in the photo?", &lex), QuestionClass::Complex);
    }

    #[test]
    fn first_noun_examples() {
        let lex = lex();
        let q = |t: &str| Question::parse(t, &lex);
        assert_eq!(first_noun(&q("How many dogs are eating?"), &lex).unwrap(), "dogs");
        assert_eq!(first_noun(&q("How many zebras are there?"), &lex).unwrap(), "zebras");
        assert!(matches!(first_noun(&q("How many?"), &lex), Err(Error::NoCountableNoun(_))));
    }

    #[test]
    fn positional_filter() {
        assert!(is_positional("How many people in the front row?"));
        assert!(!is_positional("How many dogs are there?"));
        assert!(!is_positional("How many onions?"));
        assert!(is_positional("How many cars are to the LEFT of the bus?"));
    }

    #[test]
    fn import_filter_examples() {
        assert_eq!(import_filter(&rec("How many dogs?", 3), 5, 10), ImportDecision::Keep(rec("How many dogs?", 3)));
        assert_eq!(
            import_filter(&rec("What color is the dog?", 1), 5, 10),
            ImportDecision::Drop(DropReason::BadPrefix)
        );
        assert_eq!(import_filter(&rec("How many dogs?", 16), 5, 10), ImportDecision::Drop(DropReason::OutOfRange));
        assert_eq!(import_filter(&rec("how   MANY cats?", 0), 5, 10), ImportDecision::Keep(rec("how   MANY cats?", 0)));

        let mut r = rec("How many dogs?", 2);
        r.annotator_answers = Some(vec![2, 2, 2, 2, 3, 3, 3, 3, 4, 4]);
        assert_eq!(import_filter(&r, 5, 10), ImportDecision::Drop(DropReason::NoConsensus));

        r.annotator_answers = Some(vec![4, 4, 4, 4, 4, 3, 3, 1, 2, 0]);
        match import_filter(&r, 5, 10) {
            ImportDecision::Keep(k) => assert_eq!(k.answer, 4),
            d => panic!("{d:?}"),
        }
        r.annotator_answers = Some(vec![20; 10]);
        assert_eq!(import_filter(&r, 5, 10), ImportDecision::Drop(DropReason::OutOfRange));
    }

    #[test]
    fn modal_answer_brute_force() {
        let answers = [2, 2, 2, 2, 3, 3, 3, 3, 4, 4];
        let best = (0..=5)
            .map(|v| answers.iter().filter(|&&a| a == v).count())
            .max()
            .unwrap();
        assert_eq!(best, 4);
        assert_eq!(modal_answer(&answers), Some((2, 4)));
        assert_eq!(modal_answer(&[]), None);
    }

    #[test]
    fn absurd_questions() {
        let lex = lex();
        let present: BTreeSet<String> = ["person", "car"].iter().map(|s| s.to_string()).collect();
        let pool = vec![rec("How many cars are there?", 2), rec("How many elephants are there?", 4)];
        let mut rng = crate::numeric::Rng::new(3);
        for _ in 0..20 {
            let a = make_absurd(&present, &pool, &lex, &mut rng).unwrap();
            assert_eq!(a.question, "How many elephants are there?");
            assert_eq!(a.answer, 0);
            assert_eq!(a.source, RecordSource::Absurd);
        }
        let everything: BTreeSet<String> = ["car", "elephant"].iter().map(|s| s.to_string()).collect();
        assert!(make_absurd(&everything, &pool, &lex, &mut rng).is_err());
        assert!(make_absurd(&present, &[], &lex, &mut rng).is_err());
    }

    #[test]
    fn singular_forms() {
        assert_eq!(singular("dogs"), "dog");
        assert_eq!(singular("people"), "person");
        assert_eq!(singular("benches"), "bench");
        assert_eq!(singular("ponies"), "pony");
        assert_eq!(singular("glass"), "glass");
    }

    proptest! {
        #[test]
        fn stripping_is_idempotent(words in proptest::collection::vec(
            prop_oneof![Just("in"), Just("the"), Just("photo"), Just("image"), Just("dogs"), Just("how"), Just("many"), Just("red")],
            0..12,
        )) {
            let lex = lex();
            let tokens: Vec<String> = words.iter().map(|s| s.to_string()).collect();
            let once = strip_stop_phrases(&tokens, &lex);
            prop_assert_eq!(strip_stop_phrases(&once, &lex), once.clone());
            let text = words.join(" ");
            prop_assert_eq!(classify_text(&text, &lex), classify_text(&text, &lex));
        }

        #[test]
        fn import_never_emits_out_of_range(
            answer in -5i64..30,
            panel in proptest::option::of(proptest::collection::vec(-3i64..25, 0..12)),
        ) {
            let mut r = rec("How many birds?", answer);
            r.annotator_answers = panel;
            if let ImportDecision::Keep(k) = import_filter(&r, 5, 10) {
                prop_assert!((0..=MAX_ANSWER).contains(&k.answer));
            }
        }
    }
}
