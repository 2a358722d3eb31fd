//! Whole-utterance translation backends.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::lexicon::{DeterminerForm, Lexicon, Number};
use crate::textproc::{tokenize, Language, TokenKind};

const BUNDLED_TABLE: &str = include_str!("../../data/translations.tsv");
const MAX_PHRASE: usize = 12;

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("translation request failed: {0}")]
    Request(String),
    #[error("translation service returned no text")]
    Empty,
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("phrase table line {line}: {reason}")]
    Table { line: usize, reason: String },
}

/// Translates a whole utterance into `target`. Implementations must be
/// deterministic for a fixed backend and input.
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, target: Language) -> Result<String, TranslateError>;
}

#[derive(Debug, Clone, Default)]
pub struct PhraseTable {
    en_to_es: HashMap<Vec<String>, Vec<String>>,
    es_to_en: HashMap<Vec<String>, Vec<String>>,
}

impl PhraseTable {
    /// Rows are `english<TAB>spanish`; the first row wins for a repeated key.
    pub fn parse(src: &str) -> Result<Self, TranslateError> {
        let mut table = PhraseTable::default();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (en, es) = line
                .split_once('\t')
                .ok_or_else(|| TranslateError::Table { line: i + 1, reason: "expected english<TAB>spanish".into() })?;
            let en = phrase_tokens(en);
            let es = phrase_tokens(es);
            if en.is_empty() || es.is_empty() || en.len() > MAX_PHRASE || es.len() > MAX_PHRASE {
                return Err(TranslateError::Table {
                    line: i + 1,
                    reason: format!("phrases must have 1..={MAX_PHRASE} tokens"),
                });
            }
            table.en_to_es.entry(en.clone()).or_insert_with(|| es.clone());
            table.es_to_en.entry(es).or_insert(en);
        }
        Ok(table)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TABLE).expect("bundled phrase table is valid")
    }

    fn direction(&self, target: Language) -> &HashMap<Vec<String>, Vec<String>> {
        match target {
            Language::Spanish => &self.en_to_es,
            Language::English => &self.es_to_en,
        }
    }

    /// Every word appearing on the given side of the table.
    pub fn words(&self, side: Language) -> impl Iterator<Item = &str> {
        let map = match side {
            Language::English => &self.en_to_es,
            Language::Spanish => &self.es_to_en,
        };
        map.keys().flatten().map(String::as_str)
    }
}

fn phrase_tokens(phrase: &str) -> Vec<String> {
    tokenize(phrase).into_iter().map(|t| t.lower).collect()
}

/// Offline translator: longest-match phrase table, then the noun dictionary,
/// then the token unchanged. Spanish output gets determiner agreement and
/// inverted question/exclamation marks.
#[derive(Debug, Clone)]
pub struct PhraseTableTranslator {
    table: PhraseTable,
    lexicon: Arc<Lexicon>,
}

#[derive(Debug, Clone)]
struct Piece {
    text: String,
    kind: TokenKind,
}

impl PhraseTableTranslator {
    pub fn new(table: PhraseTable, lexicon: Arc<Lexicon>) -> Self {
        PhraseTableTranslator { table, lexicon }
    }

    pub fn bundled(lexicon: Arc<Lexicon>) -> Self {
        Self::new(PhraseTable::bundled(), lexicon)
    }

    fn translate_pieces(&self, text: &str, target: Language) -> Vec<Piece> {
        let tokens = tokenize(text);
        let table = self.table.direction(target);
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = (1..=MAX_PHRASE.min(tokens.len() - i)).rev().find_map(|len| {
                let key: Vec<String> = tokens[i..i + len].iter().map(|t| t.lower.clone()).collect();
                table.get(&key).map(|v| (len, v))
            });
            if let Some((len, phrase)) = longest {
                out.extend(
                    phrase.iter().map(|w| Piece {
                        kind: tokenize(w).first().map_or(TokenKind::Word, |t| t.kind),
                        text: w.clone(),
                    }),
                );
                i += len;
                continue;
            }
            let tok = &tokens[i];
            i += 1;
            if tok.kind == TokenKind::Punctuation
                && target == Language::English
                && matches!(tok.surface.as_str(), "¿" | "¡")
            {
                continue;
            }
            let text = if tok.kind == TokenKind::Word {
                self.translate_noun(&tok.lower, target).unwrap_or_else(|| tok.surface.clone())
            } else {
                tok.surface.clone()
            };
            out.push(Piece { text, kind: tok.kind });
        }
        if target == Language::Spanish {
            self.fix_determiners(&mut out);
            add_inverted_marks(&mut out);
        }
        out
    }

    fn translate_noun(&self, word: &str, target: Language) -> Option<String> {
        match target {
            Language::English => self.lexicon.lookup_es(word).map(|e| e.english_lemma.clone()),
            Language::Spanish => self.lexicon.spanish_for_english(word).first().cloned(),
        }
    }

    fn fix_determiners(&self, pieces: &mut [Piece]) {
        let dets = self.lexicon.determiners();
        for j in 0..pieces.len().saturating_sub(1) {
            let lower = pieces[j].text.to_lowercase();
            let Some(form) = dets.form_of(&lower) else {
                continue;
            };
            let Some(noun) = self.lexicon.lookup_es(&pieces[j + 1].text.to_lowercase()) else {
                continue;
            };
            let number = if noun.number == Number::Plural { Number::Plural } else { form.number };
            let fixed = dets.form(DeterminerForm { gender: noun.spanish_gender, definite: form.definite, number });
            pieces[j].text = super::match_case(&pieces[j].text, fixed);
        }
    }
}

fn is_sentence_end(p: &Piece) -> bool {
    p.kind == TokenKind::Punctuation && matches!(p.text.as_str(), "." | "!" | "?")
}

fn add_inverted_marks(pieces: &mut Vec<Piece>) {
    let mut start = 0;
    let mut i = 0;
    while i < pieces.len() {
        if is_sentence_end(&pieces[i]) {
            let mark = match pieces[i].text.as_str() {
                "?" => Some("¿"),
                "!" => Some("¡"),
                _ => None,
            };
            if let Some(mark) = mark {
                let has_mark = pieces[start..i].iter().any(|p| p.text == mark);
                if !has_mark && start < i {
                    pieces.insert(start, Piece { text: mark.to_string(), kind: TokenKind::Punctuation });
                    i += 1;
                }
            }
            start = i + 1;
        }
        i += 1;
    }
}

fn render(pieces: &[Piece], target: Language) -> String {
    let mut out = String::new();
    let mut capitalize = true;
    let mut no_space = true;
    for p in pieces {
        let attach_left = p.kind == TokenKind::Punctuation
            && matches!(p.text.as_str(), "." | "," | "!" | "?" | ";" | ":" | ")" | "»" | "”");
        if !out.is_empty() && !attach_left && !no_space {
            out.push(' ');
        }
        let mut text = p.text.clone();
        if p.kind == TokenKind::Word {
            if target == Language::English && text == "i" {
                text = "I".into();
            }
            if capitalize {
                text = super::match_case("A", &text);
            }
            capitalize = false;
        }
        out.push_str(&text);
        no_space = p.kind == TokenKind::Punctuation && matches!(p.text.as_str(), "¿" | "¡" | "(" | "«" | "“");
        if is_sentence_end(p) {
            capitalize = true;
        }
    }
    out
}

impl Translator for PhraseTableTranslator {
    fn translate(&self, text: &str, target: Language) -> Result<String, TranslateError> {
        Ok(render(&self.translate_pieces(text, target), target))
    }
}

/// Adapter for a Google-style `translate/v2` REST endpoint.
#[derive(Debug, Clone)]
pub struct ExternalTranslator {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct V2Response {
    data: V2Data,
}

#[derive(Deserialize)]
struct V2Data {
    translations: Vec<V2Translation>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct V2Translation {
    translated_text: String,
}

impl ExternalTranslator {
    pub const DEFAULT_ENDPOINT: &'static str = "https://translation.googleapis.com/language/translate/v2";

    /// Reads the API key from `key_env`.
    pub fn from_env(endpoint: &str, key_env: &str, timeout: Duration) -> Result<Self, TranslateError> {
        let api_key = std::env::var(key_env).map_err(|_| TranslateError::MissingCredential(key_env.to_string()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TranslateError::Request(e.to_string()))?;
        Ok(ExternalTranslator { endpoint: endpoint.to_string(), api_key, client })
    }
}

impl Translator for ExternalTranslator {
    fn translate(&self, text: &str, target: Language) -> Result<String, TranslateError> {
        let body = serde_json::json!({ "q": text, "target": target.code(), "format": "text" });
        let resp: V2Response = self
            .client
            .post(&self.endpoint)
            .query(&[("key", self.api_key.as_str())])
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| TranslateError::Request(e.to_string()))?;
        resp.data
            .translations
            .into_iter()
            .next()
            .map(|t| t.translated_text)
            .filter(|t| !t.trim().is_empty())
            .ok_or(TranslateError::Empty)
    }
}
