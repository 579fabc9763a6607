//! Rule-based report labeler: phrase dictionary matching with a
//! pre-mention negation window, sentence-scoped.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoraxError, Result};
use crate::labels::{Abnormality, LabelSet};

const DEFAULT_DICTIONARY: &str = include_str!("../data/phrases.json");

/// Phrase dictionary file contents. The first phrase listed for an
/// abnormality is its canonical phrase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseDictionary {
    pub negation_cues: Vec<String>,
    #[serde(default = "default_window")]
    pub negation_window: usize,
    pub phrases: BTreeMap<Abnormality, Vec<String>>,
}

fn default_window() -> usize {
    5
}

impl Default for PhraseDictionary {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_DICTIONARY).expect("bundled phrase dictionary is valid")
    }
}

impl PhraseDictionary {
    pub fn from_json(json: &str) -> Result<Self> {
        let dict: PhraseDictionary = serde_json::from_str(json)?;
        for (abn, phrases) in &dict.phrases {
            if phrases.is_empty() || phrases.iter().any(|p| tokenize(p).is_empty()) {
                return Err(CoraxError::Config(format!(
                    "phrase list for {abn} is empty or contains a blank phrase"
                )));
            }
        }
        if dict.negation_cues.iter().any(|c| tokenize(c).is_empty()) {
            return Err(CoraxError::Config("blank negation cue".into()));
        }
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn canonical_phrase(&self, abn: Abnormality) -> Option<&str> {
        self.phrases.get(&abn).and_then(|p| p.first()).map(String::as_str)
    }
}

/// A lowercase word token with its byte range in the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: Range<usize>,
}

/// Splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            tokens.push(Token {
                text: text[s..i].to_lowercase(),
                span: s..i,
            });
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: text[s..].to_lowercase(),
            span: s..text.len(),
        });
    }
    tokens
}

/// Byte spans of sentences, each terminated by (and including) a '.'.
/// Leading whitespace is excluded; trailing text without a period forms
/// a final sentence.
pub fn split_sentences(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_non_ws = 0;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            continue;
        }
        start.get_or_insert(i);
        last_non_ws = i + ch.len_utf8();
        if ch == '.' {
            spans.push(start.take().unwrap()..last_non_ws);
        }
    }
    if let Some(s) = start {
        spans.push(s..last_non_ws);
    }
    spans
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub case_id: String,
    pub text: String,
    pub sentences: Vec<Range<usize>>,
}

impl Report {
    pub fn new(case_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let sentences = split_sentences(&text);
        Report {
            case_id: case_id.into(),
            text,
            sentences,
        }
    }

    pub fn sentence_text(&self, idx: usize) -> &str {
        &self.text[self.sentences[idx].clone()]
    }
}

/// One dictionary hit inside a report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mention {
    pub abnormality: Abnormality,
    pub sentence: usize,
    /// Byte range in the full report text.
    pub span: Range<usize>,
    pub negated: bool,
}

#[derive(Clone, Debug)]
pub struct Labeler {
    dict: PhraseDictionary,
    phrases: Vec<(Abnormality, Vec<String>)>,
    cues: Vec<Vec<String>>,
}

impl Default for Labeler {
    fn default() -> Self {
        Labeler::new(PhraseDictionary::default())
    }
}

fn token_words(s: &str) -> Vec<String> {
    tokenize(s).into_iter().map(|t| t.text).collect()
}

fn find_seq(haystack: &[Token], needle: &[String]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| needle.iter().zip(&haystack[i..]).all(|(n, t)| *n == t.text))
        .collect()
}

impl Labeler {
    pub fn new(dict: PhraseDictionary) -> Self {
        let phrases = dict
            .phrases
            .iter()
            .flat_map(|(abn, list)| list.iter().map(move |p| (*abn, token_words(p))))
            .collect();
        let cues = dict.negation_cues.iter().map(|c| token_words(c)).collect();
        Labeler {
            dict,
            phrases,
            cues,
        }
    }

    pub fn dictionary(&self) -> &PhraseDictionary {
        &self.dict
    }

    /// Abnormalities this labeler can emit.
    pub fn vocabulary(&self) -> impl Iterator<Item = Abnormality> + '_ {
        self.dict.phrases.keys().copied()
    }

    /// True iff a negation cue ends within the `negation_window` tokens
    /// preceding the mention, inside the same sentence. `mention` is a byte
    /// range relative to `sentence`.
    pub fn detect_negation(&self, sentence: &str, mention: Range<usize>) -> bool {
        let tokens = tokenize(sentence);
        let Some(m) = tokens.iter().position(|t| t.span.end > mention.start) else {
            return false;
        };
        self.negated_at(&tokens, m)
    }

    fn negated_at(&self, tokens: &[Token], mention_tok: usize) -> bool {
        let window = self.dict.negation_window;
        self.cues.iter().any(|cue| {
            find_seq(&tokens[..mention_tok], cue).into_iter().any(|c| {
                let last = c + cue.len() - 1;
                mention_tok - last <= window
            })
        })
    }

    /// All dictionary hits, ordered by position then descending length.
    pub fn mentions(&self, report: &Report) -> Vec<Mention> {
        let mut out = Vec::new();
        for (si, sspan) in report.sentences.iter().enumerate() {
            let sentence = &report.text[sspan.clone()];
            let tokens = tokenize(sentence);
            for (abn, words) in &self.phrases {
                for start in find_seq(&tokens, words) {
                    let end = start + words.len() - 1;
                    out.push(Mention {
                        abnormality: *abn,
                        sentence: si,
                        span: sspan.start + tokens[start].span.start
                            ..sspan.start + tokens[end].span.end,
                        negated: self.negated_at(&tokens, start),
                    });
                }
            }
        }
        out.sort_by(|a, b| {
            a.span
                .start
                .cmp(&b.span.start)
                .then(b.span.end.cmp(&a.span.end))
                .then(a.abnormality.cmp(&b.abnormality))
        });
        out.dedup();
        out
    }

    pub fn extract_labels(&self, report: &Report) -> Result<LabelSet> {
        if report.text.trim().is_empty() {
            return Err(CoraxError::EmptyInput(format!(
                "report for case {} has no text",
                report.case_id
            )));
        }
        Ok(self
            .mentions(report)
            .into_iter()
            .filter(|m| !m.negated)
            .map(|m| m.abnormality)
            .collect())
    }

    /// Appends "<canonical phrase>." to the report.
    pub fn append_finding(&self, report: &Report, abn: Abnormality) -> Result<Report> {
        let canonical = self.dict.canonical_phrase(abn).ok_or_else(|| {
            CoraxError::Config(format!("{abn} is not in the phrase dictionary"))
        })?;
        if !report.text.trim().is_empty() && self.extract_labels(report)?.contains(abn) {
            return Err(CoraxError::NoOpViolation {
                abnormality: abn.to_string(),
            });
        }
        Ok(Report::new(
            report.case_id.clone(),
            join_sentence(&report.text, &format!("{canonical}.")),
        ))
    }
}

/// Appends a sentence, inserting a period and a space as needed.
pub(crate) fn join_sentence(text: &str, sentence: &str) -> String {
    let body = text.trim_end();
    if body.is_empty() {
        return sentence.to_string();
    }
    let mut out = body.to_string();
    if !out.ends_with('.') {
        out.push('.');
    }
    out.push(' ');
    out.push_str(sentence);
    out
}
