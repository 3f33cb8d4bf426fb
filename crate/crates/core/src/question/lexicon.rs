use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Noun,
    Adjective,
    Adverb,
    Verb,
    Other,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::Noun => "noun",
            Tag::Adjective => "adjective",
            Tag::Adverb => "adverb",
            Tag::Verb => "verb",
            Tag::Other => "other",
        })
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "noun" | "n" | "nn" | "nns" | "propn" => Ok(Tag::Noun),
            "adjective" | "adj" | "jj" => Ok(Tag::Adjective),
            "adverb" | "adv" | "rb" => Ok(Tag::Adverb),
            "verb" | "v" | "vb" | "aux" => Ok(Tag::Verb),
            "other" | "x" => Ok(Tag::Other),
            other => Err(Error::Parse(format!("unknown tag `{other}`"))),
        }
    }
}

/// Part-of-speech tagger over lowercase tokens.
pub trait Tagger {
    fn tag(&self, token: &str) -> Tag;

    fn tag_all(&self, tokens: &[String]) -> Vec<Tag> {
        tokens.iter().map(|t| self.tag(t)).collect()
    }
}

/// Word list plus suffix rules plus the stop phrases removed before classification.
///
/// Lookup order: exact word, plural of a known noun, suffix rules, then noun. Defaulting
/// unknown words to noun can only add nouns, which pushes borderline questions to complex.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    words: BTreeMap<String, Tag>,
    suffix_rules: Vec<(String, Tag)>,
    stop_phrases: Vec<Vec<String>>,
}

const NOUNS: &[&str] = &[
    "dog", "cat", "horse", "cow", "bird", "car", "truck", "boat", "kite", "ball", "grass", "water", "sky",
    "road", "person", "people", "man", "men", "woman", "women", "child", "children", "zebra", "giraffe",
    "elephant", "sheep", "tree", "hat", "shirt", "glasses", "table", "chair", "plate", "bus", "train",
    "picture", "image", "photo", "photograph", "scene", "row", "front", "back", "left", "right", "side",
    "middle", "top", "bottom", "center", "field", "street", "building", "window", "bench", "umbrella",
    "bike", "bicycle", "motorcycle", "animal", "animals", "food", "pizza", "sign", "wall", "floor",
];

const ADJECTIVES: &[&str] = &[
    "red", "blue", "green", "yellow", "white", "black", "brown", "orange", "pink", "purple", "gray", "grey",
    "wet", "dry", "small", "large", "big", "little", "tall", "short", "young", "old", "new", "striped",
    "spotted", "higher", "lower", "closer", "nearer", "other", "same", "different", "visible", "empty",
    "full", "open", "closed", "whole", "entire",
];

const ADVERBS: &[&str] = &[
    "not", "never", "also", "very", "too", "only", "up", "down", "together", "here", "away", "still",
    "just", "almost", "nearly", "currently", "n't",
];

const VERBS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did", "can", "could", "will",
    "would", "should", "have", "has", "had", "see", "seen", "shown", "wearing", "wear", "wears", "eating",
    "eat", "eats", "standing", "stand", "sitting", "sit", "laying", "lying", "holding", "hold", "flying",
    "fly", "swimming", "riding", "ride", "walking", "walk", "running", "parked", "playing", "looking",
    "pictured",
];

const OTHER: &[&str] = &[
    "how", "many", "much", "what", "which", "who", "where", "when", "why", "the", "a", "an", "this", "that",
    "these", "those", "there", "in", "on", "at", "of", "to", "near", "by", "with", "without", "from",
    "under", "over", "above", "below", "behind", "beside", "between", "than", "and", "or", "but", "you",
    "i", "we", "they", "it", "he", "she", "them", "their", "his", "her", "its", "any", "all", "some", "each",
    "every", "no", "for", "into", "onto", "around", "next", "s",
];

const DEFAULT_STOP_PHRASES: &[&str] = &[
    "in the photo",
    "in the image",
    "in the picture",
    "in the photograph",
    "in the scene",
    "in this photo",
    "in this image",
    "in this picture",
    "in this photograph",
    "in this scene",
];

impl Default for Lexicon {
    fn default() -> Self {
        let mut words = BTreeMap::new();
        for (list, tag) in [
            (NOUNS, Tag::Noun),
            (ADJECTIVES, Tag::Adjective),
            (ADVERBS, Tag::Adverb),
            (VERBS, Tag::Verb),
            (OTHER, Tag::Other),
        ] {
            for w in list {
                words.insert((*w).to_string(), tag);
            }
        }
        let suffix_rules = [
            ("ly", Tag::Adverb),
            ("ous", Tag::Adjective),
            ("ful", Tag::Adjective),
            ("ive", Tag::Adjective),
            ("able", Tag::Adjective),
            ("ible", Tag::Adjective),
            ("less", Tag::Adjective),
            ("ish", Tag::Adjective),
            ("ed", Tag::Adjective),
        ]
        .into_iter()
        .map(|(s, t)| (s.to_string(), t))
        .collect();
        Self {
            words,
            suffix_rules,
            stop_phrases: DEFAULT_STOP_PHRASES
                .iter()
                .map(|p| super::tokenize(p))
                .collect(),
        }
    }
}

impl Lexicon {
    pub fn empty() -> Self {
        Self {
            words: BTreeMap::new(),
            suffix_rules: Vec::new(),
            stop_phrases: Vec::new(),
        }
    }

    pub fn insert(&mut self, word: &str, tag: Tag) {
        self.words.insert(word.to_lowercase(), tag);
    }

    pub fn add_suffix_rule(&mut self, suffix: &str, tag: Tag) {
        self.suffix_rules.push((suffix.to_lowercase(), tag));
    }

    pub fn add_stop_phrase(&mut self, phrase: &str) {
        let toks = super::tokenize(phrase);
        if !toks.is_empty() && !self.stop_phrases.contains(&toks) {
            self.stop_phrases.push(toks);
        }
    }

    pub fn stop_phrases(&self) -> &[Vec<String>] {
        &self.stop_phrases
    }

    pub fn lookup(&self, word: &str) -> Option<Tag> {
        self.words.get(word).copied()
    }

    /// Merge `word<TAB>tag` lines; blank lines and `#` comments are skipped.
    pub fn load_words(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("lexicon line {}: expected word<TAB>tag", n + 1)))?;
            let tag: Tag = tag
                .parse()
                .map_err(|e| Error::Parse(format!("lexicon line {}: {e}", n + 1)))?;
            self.insert(word.trim(), tag);
        }
        Ok(())
    }

    /// Merge a stop-phrase list, one phrase per line.
    pub fn load_stop_phrases(&mut self, text: &str) {
        for line in text.lines() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                self.add_stop_phrase(line);
            }
        }
    }

    /// Serialise the word table in the `word<TAB>tag` file format.
    pub fn words_to_string(&self) -> String {
        self.words.iter().map(|(w, t)| format!("{w}\t{t}\n")).collect()
    }

    fn plural_stem_is_noun(&self, word: &str) -> bool {
        let candidates = [
            word.strip_suffix("ies").map(|s| format!("{s}y")),
            word.strip_suffix("es").map(str::to_string),
            word.strip_suffix('s').map(str::to_string),
        ];
        candidates
            .into_iter()
            .flatten()
            .any(|stem| !stem.is_empty() && self.lookup(&stem) == Some(Tag::Noun))
    }
}

impl Tagger for Lexicon {
    fn tag(&self, token: &str) -> Tag {
        if let Some(t) = self.lookup(token) {
            return t;
        }
        if token.chars().all(|c| c.is_ascii_digit()) {
            return Tag::Other;
        }
        if self.plural_stem_is_noun(token) {
            return Tag::Noun;
        }
        for (suffix, tag) in &self.suffix_rules {
            if token.len() > suffix.len() + 1 && token.ends_with(suffix.as_str()) {
                return *tag;
            }
        }
        Tag::Noun
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_words_and_rules() {
        let lex = Lexicon::default();
        assert_eq!(lex.tag("dog"), Tag::Noun);
        assert_eq!(lex.tag("dogs"), Tag::Noun);
        assert_eq!(lex.tag("brown"), Tag::Adjective);
        assert_eq!(lex.tag("quickly"), Tag::Adverb);
        assert_eq!(lex.tag("are"), Tag::Verb);
        assert_eq!(lex.tag("many"), Tag::Other);
        assert_eq!(lex.tag("wooden"), Tag::Noun);
        assert_eq!(lex.tag("painted"), Tag::Adjective);
        assert_eq!(lex.tag("flamingos"), Tag::Noun);
    }

    #[test]
    fn load_word_file() {
        let mut lex = Lexicon::empty();
        lex.load_words("# comment\nfluffy\tadjective\nquokka\tnoun\n\n").unwrap();
        assert_eq!(lex.lookup("fluffy"), Some(Tag::Adjective));
        assert_eq!(lex.lookup("quokka"), Some(Tag::Noun));
        assert!(lex.load_words("broken line").is_err());
        assert!(lex.load_words("x\tnot-a-tag").is_err());

        let mut back = Lexicon::empty();
        back.load_words(&lex.words_to_string()).unwrap();
        assert_eq!(back, lex);
    }

    #[test]
    fn default_stop_phrases_present() {
        let lex = Lexicon::default();
        let has = |p: &str| lex.stop_phrases().contains(&crate::question::tokenize(p));
        assert!(has("in the photo"));
        assert!(has("in the image"));
    }
}
