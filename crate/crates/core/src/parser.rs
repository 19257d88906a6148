//! Answer extraction and keyword scanning for agent responses.
//!
//! Heuristics for free-text answers, tried in order:
//! 1. the first sentence containing "will be" followed by a polarity phrase;
//! 2. a leading polarity word;
//! 3. hedged phrases anywhere ("neutral or slightly negative", "slightly positive").
//!
//! Explicit inability ("uncertain", "cannot determine", …) and anything
//! unmatched is a [`ParsedAnswer::Refusal`]. The structured dialect first
//! looks for a `New <kind>:` header and falls back to the free-text rules
//! when the header is absent.
//!
//! Bump [`PARSER_VERSION`] whenever any of this changes so that replays can
//! flag records parsed under a different version.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dynamics::InteractionKind;
use crate::gateway::PromptDialect;

pub const PARSER_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedAnswer {
    Positive,
    Negative,
    Neutral,
    NeutralOrPositive,
    NeutralOrNegative,
    Refusal,
}

impl ParsedAnswer {
    pub fn is_refusal(self) -> bool {
        self == ParsedAnswer::Refusal
    }
}

const QUALIFIERS: &[&str] = &[
    "a", "an", "slightly", "somewhat", "more", "mildly", "moderately", "very", "still", "mostly",
    "cautiously", "rather", "fairly", "largely", "generally", "predominantly", "strongly",
];

const INABILITY_WORDS: &[&str] = &["uncertain", "unknown", "undetermined", "unclear", "indeterminate", "impossible"];

const INABILITY_PHRASES: &[&str] = &[
    "uncertain",
    "cannot determine",
    "can't determine",
    "cannot be determined",
    "impossible to determine",
    "unable to determine",
];

const HEDGES: &[(&str, ParsedAnswer)] = &[
    ("neutral or slightly negative", ParsedAnswer::NeutralOrNegative),
    ("neutral or slightly positive", ParsedAnswer::NeutralOrPositive),
    ("neutral or negative", ParsedAnswer::NeutralOrNegative),
    ("neutral or positive", ParsedAnswer::NeutralOrPositive),
    ("slightly negative", ParsedAnswer::Negative),
    ("slightly positive", ParsedAnswer::Positive),
];

fn words(fragment: &str) -> impl Iterator<Item = &str> {
    fragment.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

fn polarity(word: &str) -> Option<ParsedAnswer> {
    match word {
        "positive" => Some(ParsedAnswer::Positive),
        "negative" => Some(ParsedAnswer::Negative),
        _ => None,
    }
}

/// Reads an answer from the start of a lowercase fragment.
fn classify_fragment(fragment: &str) -> Option<ParsedAnswer> {
    let mut it = words(fragment).peekable();
    let first = *it.peek()?;
    if INABILITY_WORDS.contains(&first) {
        return Some(ParsedAnswer::Refusal);
    }
    if first == "neutral" {
        it.next();
        if matches!(it.peek(), Some(&"or") | Some(&"to")) {
            it.next();
            let hedged = it.find(|w| !QUALIFIERS.contains(w)).and_then(polarity);
            return Some(match hedged {
                Some(ParsedAnswer::Positive) => ParsedAnswer::NeutralOrPositive,
                Some(ParsedAnswer::Negative) => ParsedAnswer::NeutralOrNegative,
                _ => ParsedAnswer::Neutral,
            });
        }
        return Some(ParsedAnswer::Neutral);
    }
    it.take(4).find(|w| !QUALIFIERS.contains(w)).and_then(polarity)
}

fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split(['.', '!', '?', '\n'])
}

fn from_statement(text: &str) -> Option<ParsedAnswer> {
    sentences(text).find_map(|s| s.find("will be").and_then(|p| classify_fragment(&s[p + "will be".len()..])))
}

fn from_leading_word(text: &str) -> Option<ParsedAnswer> {
    let first = words(text).next()?;
    if first == "neutral" || polarity(first).is_some() {
        classify_fragment(text)
    } else {
        None
    }
}

fn from_hedge(text: &str) -> Option<ParsedAnswer> {
    HEDGES
        .iter()
        .filter_map(|(phrase, answer)| text.find(phrase).map(|pos| (pos, *answer)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, answer)| answer)
}

fn free_text(text: &str) -> ParsedAnswer {
    if let Some(answer) = from_statement(text).or_else(|| from_leading_word(text)) {
        return answer;
    }
    if INABILITY_PHRASES.iter().any(|p| text.contains(p)) {
        return ParsedAnswer::Refusal;
    }
    from_hedge(text).unwrap_or(ParsedAnswer::Refusal)
}

/// Extracts the declared sign from a raw response. Total: never panics.
pub fn extract_sign(raw: &str, kind: InteractionKind, dialect: PromptDialect) -> ParsedAnswer {
    let text = raw.to_lowercase();
    if dialect == PromptDialect::Mistral {
        let header = format!("new {}:", kind.noun());
        if let Some(pos) = text.find(&header) {
            return classify_fragment(&text[pos + header.len()..]).unwrap_or(ParsedAnswer::Refusal);
        }
    }
    free_text(&text)
}

/// Ordered list of tracked keywords.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSpec {
    terms: Vec<String>,
}

pub const STRUCTURAL_BALANCE: &str = "structural balance";
pub const CLUSTERING_BALANCE: &str = "clustering balance";
pub const SOCIAL_BALANCE: &str = "social balance";
pub const COGNITIVE: &str = "cognitive";
pub const DISSONANCE: &str = "dissonance";
pub const COGNITIVE_DISSONANCE: &str = "cognitive dissonance";

impl Default for KeywordSpec {
    fn default() -> Self {
        KeywordSpec::new([
            STRUCTURAL_BALANCE,
            CLUSTERING_BALANCE,
            SOCIAL_BALANCE,
            COGNITIVE,
            DISSONANCE,
            COGNITIVE_DISSONANCE,
        ])
    }
}

impl KeywordSpec {
    pub fn new<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Self {
        KeywordSpec {
            terms: terms.into_iter().map(|t| t.as_ref().to_ascii_lowercase()).collect(),
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Occurrence counts per tracked term; terms with no occurrence are omitted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordHits(BTreeMap<String, u32>);

impl KeywordHits {
    pub fn contains(&self, term: &str) -> bool {
        self.count(term) > 0
    }

    pub fn count(&self, term: &str) -> u32 {
        self.0.get(term).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric())
}

fn occurrences(haystack: &str, needle: &str, word_bounded: bool) -> BTreeSet<usize> {
    let mut found = BTreeSet::new();
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let bounded = !is_word_char(haystack[..start].chars().next_back())
            && !is_word_char(haystack[end..].chars().next());
        if !word_bounded || bounded {
            found.insert(start);
            from = end;
        } else {
            from = start + needle.chars().next().map_or(1, char::len_utf8);
        }
    }
    found
}

/// Case-insensitive keyword counts. Single words must stand alone
/// ("cognitively" is not "cognitive"); phrases match exactly and also count
/// toward their constituent single-word terms.
pub fn scan_keywords(raw: &str, spec: &KeywordSpec) -> KeywordHits {
    // ASCII lowering keeps byte offsets aligned with the original text.
    let text = raw.to_ascii_lowercase();
    let mut spans: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for term in &spec.terms {
        let phrase = term.contains(' ');
        spans.entry(term).or_default().extend(occurrences(&text, term, !phrase));
    }
    for phrase in spec.terms.iter().filter(|t| t.contains(' ')) {
        let starts = spans[phrase.as_str()].clone();
        let mut offset = 0;
        for word in phrase.split(' ') {
            if let Some(set) = spans.get_mut(word) {
                set.extend(starts.iter().map(|s| s + offset));
            }
            offset += word.len() + 1;
        }
    }
    KeywordHits(
        spans
            .into_iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(t, s)| (t.to_string(), s.len() as u32))
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cooccurrence {
    pub with_cognitive: usize,
    pub cognitive_without_phrase: usize,
}

impl Cooccurrence {
    /// Fraction of "cognitive" responses that lack "cognitive dissonance"; `None` when no response mentions "cognitive".
    pub fn fraction(&self) -> Option<f64> {
        (self.with_cognitive > 0).then(|| self.cognitive_without_phrase as f64 / self.with_cognitive as f64)
    }
}

pub fn cooccurrence_report<'a>(hits: impl IntoIterator<Item = &'a KeywordHits>) -> Cooccurrence {
    let mut report = Cooccurrence {
        with_cognitive: 0,
        cognitive_without_phrase: 0,
    };
    for h in hits.into_iter().filter(|h| h.contains(COGNITIVE)) {
        report.with_cognitive += 1;
        if !h.contains(COGNITIVE_DISSONANCE) {
            report.cognitive_without_phrase += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use InteractionKind::*;
    use ParsedAnswer::*;

    fn llama(raw: &str) -> ParsedAnswer {
        extract_sign(raw, Appraisal, PromptDialect::Llama)
    }

    #[test]
    fn statement_sentence() {
        assert_eq!(llama("My new appraisal of Individual 0 will be negative.\n\nExplanation: because."), Negative);
        assert_eq!(
            llama("My new appraisal of Individual 2 will be **neutral or slightly negative**.\n\nHere's why"),
            NeutralOrNegative
        );
        assert_eq!(llama("My new opinion of Individual 2 will be: **slightly positive**\n\nExplanation"), Positive);
        assert_eq!(llama("My new relationship will be neutral or positive."), NeutralOrPositive);
        assert_eq!(llama("My new relationship will be neutral."), Neutral);
        assert_eq!(llama("It will be hard to say. My new appraisal will be positive."), Positive);
    }

    #[test]
    fn leading_word_and_hedges() {
        assert_eq!(llama("Positive.\n\nExplanation: ..."), Positive);
        assert_eq!(llama("**Negative**\nBecause ..."), Negative);
        assert_eq!(llama("I think it is neutral or slightly positive overall."), NeutralOrPositive);
        assert_eq!(llama("I lean slightly negative here."), Negative);
    }

    #[test]
    fn refusals() {
        assert_eq!(llama("the new relationship would be uncertain"), Refusal);
        assert_eq!(llama("It is impossible to determine the new appraisal, slightly positive or not."), Refusal);
        assert_eq!(llama("My new appraisal will be uncertain."), Refusal);
        assert_eq!(llama(""), Refusal);
        assert_eq!(llama("\u{0}\u{ffff}??..!!"), Refusal);
    }

    #[test]
    fn structured_dialect() {
        let raw = "\"New relationship: [positive].\" and then \"Justification for answer: ...\"";
        assert_eq!(extract_sign(raw, Relationship, PromptDialect::Mistral), Positive);
        let raw = "New opinion: negative.\nJustification for answer: they dislike me.";
        assert_eq!(extract_sign(raw, Opinion, PromptDialect::Mistral), Negative);
        let raw = "New appraisal: \"neutral\".";
        assert_eq!(extract_sign(raw, Appraisal, PromptDialect::Mistral), Neutral);
        let raw = "New appraisal: I can't say.";
        assert_eq!(extract_sign(raw, Appraisal, PromptDialect::Mistral), Refusal);
        // header for a different kind is ignored; free-text rules apply
        let raw = "My new opinion of Individual 1 will be positive.";
        assert_eq!(extract_sign(raw, Opinion, PromptDialect::Mistral), Positive);
    }

    #[test]
    fn keyword_boundaries() {
        let spec = KeywordSpec::default();
        let hits = scan_keywords("This creates a Cognitive Dissonance for me.", &spec);
        assert_eq!(hits.count(COGNITIVE), 1);
        assert_eq!(hits.count(DISSONANCE), 1);
        assert_eq!(hits.count(COGNITIVE_DISSONANCE), 1);

        let hits = scan_keywords("I am cognitively aware; it is a balanced view.", &spec);
        assert!(!hits.contains(COGNITIVE));

        let hits = scan_keywords("known as \"social balance theory\"", &spec);
        assert!(hits.contains(SOCIAL_BALANCE));

        let hits = scan_keywords("a cognitive bias called the \"halo effect\"", &spec);
        assert!(hits.contains(COGNITIVE));
        assert!(!hits.contains(DISSONANCE));
        assert!(!hits.contains(COGNITIVE_DISSONANCE));
    }

    #[test]
    fn phrase_counts_constituents() {
        let spec = KeywordSpec::default();
        // the phrase is matched as a substring, the lone word is not
        let hits = scan_keywords("cognitive dissonances", &spec);
        assert_eq!(hits.count(COGNITIVE_DISSONANCE), 1);
        assert_eq!(hits.count(DISSONANCE), 1);
        assert_eq!(hits.count(COGNITIVE), 1);
        let hits = scan_keywords("dissonance, cognitive dissonance and cognitive load", &spec);
        assert_eq!(hits.count(DISSONANCE), 2);
        assert_eq!(hits.count(COGNITIVE), 2);
        assert_eq!(hits.count(COGNITIVE_DISSONANCE), 1);
    }

    #[test]
    fn cooccurrence() {
        let spec = KeywordSpec::default();
        let phrase = scan_keywords("cognitive dissonance", &spec);
        let lone = scan_keywords("cognitive bias", &spec);
        let none = scan_keywords("nothing", &spec);
        assert_eq!(cooccurrence_report([&phrase, &phrase, &none]).fraction(), Some(0.0));
        let mut corpus = vec![phrase.clone(); 99];
        corpus.push(lone);
        assert_eq!(cooccurrence_report(&corpus).fraction(), Some(0.01));
        assert_eq!(cooccurrence_report([&none]).fraction(), None);
    }
}
