//! Tokenization, token-level language identification, utterance labels and
//! simple noun-phrase extraction.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Gender, Lexicon, NounGender};

mod charmodel;
mod tokenize;

pub use charmodel::{Calibration, CharModel, DEFAULT_THRESHOLD};
pub use tokenize::tokenize;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("noun phrase with a Spanish noun is not a mixed NP")]
    NotMixed,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Malformed { file: String, line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    English,
    Spanish,
}

impl Language {
    pub fn other(self) -> Language {
        match self {
            Language::English => Language::Spanish,
            Language::Spanish => Language::English,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Language::English => "en",
            Language::Spanish => "es",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Punctuation,
    Number,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenLang {
    English,
    Spanish,
    Undecided,
}

impl TokenLang {
    pub fn language(self) -> Option<Language> {
        match self {
            TokenLang::English => Some(Language::English),
            TokenLang::Spanish => Some(Language::Spanish),
            TokenLang::Undecided => None,
        }
    }
}

impl From<Language> for TokenLang {
    fn from(l: Language) -> Self {
        match l {
            Language::English => TokenLang::English,
            Language::Spanish => TokenLang::Spanish,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lower: String,
    pub kind: TokenKind,
    pub lang: TokenLang,
    /// Byte range of `surface` in the source text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    English,
    Spanish,
    Mixed,
    None,
}

impl Label {
    pub fn language(self) -> Option<Language> {
        match self {
            Label::English => Some(Language::English),
            Label::Spanish => Some(Language::Spanish),
            Label::Mixed | Label::None => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::English => "english",
            Label::Spanish => "spanish",
            Label::Mixed => "mixed",
            Label::None => "none",
        }
    }
}

impl From<Language> for Label {
    fn from(l: Language) -> Self {
        match l {
            Language::English => Label::English,
            Language::Spanish => Label::Spanish,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Human,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub tokens: Vec<Token>,
    pub label: Label,
    /// Milliseconds since session start.
    pub timestamp_ms: u64,
    pub noun_phrases: Vec<NounPhraseSpan>,
}

impl Utterance {
    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.kind == TokenKind::Word).count()
    }

    /// Word and number tokens; punctuation and emoji are not counted.
    pub fn content_token_count(&self) -> usize {
        self.tokens.iter().filter(|t| matches!(t.kind, TokenKind::Word | TokenKind::Number)).count()
    }
}

/// Determiner immediately followed by a dictionary noun.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhraseSpan {
    pub det_index: usize,
    pub noun_index: usize,
    pub determiner: String,
    pub noun: String,
    pub det_gender: Gender,
    /// The noun itself when Spanish; its first Spanish equivalent when English.
    pub noun_spanish_lemma: Option<String>,
    pub noun_gender: NounGender,
    pub noun_lang: Language,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NpClass {
    CongruentMasc,
    CongruentFem,
    IncongruentMasc,
    IncongruentFem,
    Ambiguous,
}

impl NpClass {
    pub const ALL: [NpClass; 5] = [
        NpClass::CongruentMasc,
        NpClass::CongruentFem,
        NpClass::IncongruentMasc,
        NpClass::IncongruentFem,
        NpClass::Ambiguous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NpClass::CongruentMasc => "congruent_masc",
            NpClass::CongruentFem => "congruent_fem",
            NpClass::IncongruentMasc => "incongruent_masc",
            NpClass::IncongruentFem => "incongruent_fem",
            NpClass::Ambiguous => "ambiguous",
        }
    }
}

/// Classifies a Spanish-determiner + English-noun span. Incongruent classes
/// are named after the noun's gender.
pub fn classify_mixed_np(span: &NounPhraseSpan) -> Result<NpClass, TextError> {
    if span.noun_lang != Language::English {
        return Err(TextError::NotMixed);
    }
    Ok(match (span.noun_gender, span.det_gender) {
        (NounGender::Ambiguous, _) => NpClass::Ambiguous,
        (NounGender::Masculine, Gender::Masculine) => NpClass::CongruentMasc,
        (NounGender::Feminine, Gender::Feminine) => NpClass::CongruentFem,
        (NounGender::Masculine, Gender::Feminine) => NpClass::IncongruentMasc,
        (NounGender::Feminine, Gender::Masculine) => NpClass::IncongruentFem,
    })
}

pub fn label_utterance(tokens: &[Token]) -> Label {
    let mut english = false;
    let mut spanish = false;
    for tok in tokens {
        match tok.lang {
            TokenLang::English => english = true,
            TokenLang::Spanish => spanish = true,
            TokenLang::Undecided => {}
        }
    }
    match (english, spanish) {
        (true, true) => Label::Mixed,
        (true, false) => Label::English,
        (false, true) => Label::Spanish,
        (false, false) => Label::None,
    }
}

/// Adjacent determiner+noun spans. A span is dropped when an adjective from
/// `adjectives` directly follows the noun.
pub fn extract_simple_nps(tokens: &[Token], lex: &Lexicon, adjectives: &HashSet<String>) -> Vec<NounPhraseSpan> {
    let dets = lex.determiners();
    let mut spans = Vec::new();
    let mut i = 0;
    while i + 1 < tokens.len() {
        let det = &tokens[i];
        let noun = &tokens[i + 1];
        let Some(form) = (det.kind == TokenKind::Word).then(|| dets.form_of(&det.lower)).flatten() else {
            i += 1;
            continue;
        };
        if noun.kind != TokenKind::Word {
            i += 1;
            continue;
        }
        let resolved = if let Some(entry) = lex.lookup_es(&noun.lower) {
            Some((Some(entry.spanish_lemma.clone()), NounGender::from(entry.spanish_gender), Language::Spanish))
        } else {
            lex.lookup_en_gender(&noun.lower)
                .map(|gender| (lex.spanish_for_english(&noun.lower).first().cloned(), gender, Language::English))
        };
        let Some((noun_spanish_lemma, noun_gender, noun_lang)) = resolved else {
            i += 1;
            continue;
        };
        let complex =
            tokens.get(i + 2).is_some_and(|next| next.kind == TokenKind::Word && adjectives.contains(&next.lower));
        if !complex {
            spans.push(NounPhraseSpan {
                det_index: i,
                noun_index: i + 1,
                determiner: det.lower.clone(),
                noun: noun.lower.clone(),
                det_gender: form.gender,
                noun_spanish_lemma,
                noun_gender,
                noun_lang,
            });
        }
        i += 2;
    }
    spans
}

/// Wordlists and character model behind [`LanguageIdentifier`].
#[derive(Debug, Clone)]
pub struct LidResources {
    pub english_words: HashSet<String>,
    pub spanish_words: HashSet<String>,
    pub ambiguous: HashSet<String>,
    pub spanish_adjectives: HashSet<String>,
    pub model: CharModel,
}

const WORDS_EN: &str = include_str!("../data/words_en.txt");
const WORDS_ES: &str = include_str!("../data/words_es.txt");
const CLOSED_ES: &str = include_str!("../data/closed_es.txt");
const AMBIGUOUS: &str = include_str!("../data/ambiguous.txt");
const ADJECTIVES_ES: &str = include_str!("../data/adjectives_es.txt");
const TRIGRAMS_EN: &str = include_str!("../data/trigrams_en.tsv");
const TRIGRAMS_ES: &str = include_str!("../data/trigrams_es.tsv");
pub const HELDOUT_EN: &str = include_str!("../data/heldout_en.txt");
pub const HELDOUT_ES: &str = include_str!("../data/heldout_es.txt");

impl LidResources {
    pub fn bundled() -> Self {
        let mut spanish_words = word_set(WORDS_ES);
        spanish_words.extend(word_set(CLOSED_ES));
        LidResources {
            english_words: word_set(WORDS_EN),
            spanish_words,
            ambiguous: word_set(AMBIGUOUS),
            spanish_adjectives: word_set(ADJECTIVES_ES),
            model: CharModel::parse(TRIGRAMS_EN, TRIGRAMS_ES).expect("bundled trigram tables are valid"),
        }
    }

    /// Loads the same file set as [`LidResources::bundled`] from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TextError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| TextError::Io { path: path.display().to_string(), source })
        };
        let mut spanish_words = word_set(&read("words_es.txt")?);
        if dir.join("closed_es.txt").exists() {
            spanish_words.extend(word_set(&read("closed_es.txt")?));
        }
        Ok(LidResources {
            english_words: word_set(&read("words_en.txt")?),
            spanish_words,
            ambiguous: word_set(&read("ambiguous.txt")?),
            spanish_adjectives: word_set(&read("adjectives_es.txt")?),
            model: CharModel::parse(&read("trigrams_en.tsv")?, &read("trigrams_es.tsv")?)?,
        })
    }
}

pub fn word_set(src: &str) -> HashSet<String> {
    src.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_lowercase).collect()
}

/// Three-tier token classifier: ambiguity list, exact wordlists, then the
/// character trigram model.
#[derive(Debug, Clone)]
pub struct LanguageIdentifier {
    english: HashSet<String>,
    spanish: HashSet<String>,
    ambiguous: HashSet<String>,
    model: CharModel,
    threshold: f64,
}

impl LanguageIdentifier {
    /// Dictionary lemmas are merged into the wordlists so that every
    /// dictionary word resolves to its own language.
    pub fn new(resources: &LidResources, lex: &Lexicon) -> Self {
        let mut english = resources.english_words.clone();
        let mut spanish = resources.spanish_words.clone();
        let spanish_lemmas: HashSet<&str> = lex.nouns().map(|n| n.spanish_lemma.as_str()).collect();
        let english_lemmas: HashSet<&str> = lex
            .nouns()
            .map(|n| n.english_lemma.as_str())
            .chain(lex.english_entries().map(|e| e.english_lemma.as_str()))
            .collect();
        for es in &spanish_lemmas {
            if !english_lemmas.contains(es) {
                english.remove(*es);
            }
            spanish.insert(es.to_string());
        }
        for en in &english_lemmas {
            if !spanish_lemmas.contains(en) {
                spanish.remove(*en);
            }
            english.insert(en.to_string());
        }
        for det in lex.determiners().masculine_forms().chain(lex.determiners().feminine_forms()) {
            english.remove(det);
            spanish.insert(det.to_string());
        }
        LanguageIdentifier {
            english,
            spanish,
            ambiguous: resources.ambiguous.clone(),
            model: resources.model.clone(),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn model(&self) -> &CharModel {
        &self.model
    }

    pub fn is_ambiguous(&self, word: &str) -> bool {
        self.ambiguous.contains(&lookup_key(word))
    }

    /// Classifies one lowercase word.
    pub fn classify_word(&self, lower: &str) -> TokenLang {
        let key = lookup_key(lower);
        if self.ambiguous.contains(&key) {
            return TokenLang::Undecided;
        }
        match (self.english.contains(&key), self.spanish.contains(&key)) {
            (true, true) => TokenLang::Undecided,
            (true, false) => TokenLang::English,
            (false, true) => TokenLang::Spanish,
            (false, false) => self.model.classify(&key, self.threshold),
        }
    }

    pub fn classify_token(&self, tok: &Token) -> TokenLang {
        if tok.kind != TokenKind::Word {
            return TokenLang::Undecided;
        }
        self.classify_word(&tok.lower)
    }

    pub fn in_wordlist(&self, word: &str, lang: Language) -> bool {
        let key = lookup_key(word);
        match lang {
            Language::English => self.english.contains(&key),
            Language::Spanish => self.spanish.contains(&key),
        }
    }
}

fn lookup_key(word: &str) -> String {
    word.replace('\u{2019}', "'")
}

/// Everything needed to turn raw text into a labeled [`Utterance`].
#[derive(Debug, Clone)]
pub struct TextAnalyzer {
    lexicon: Arc<Lexicon>,
    lid: LanguageIdentifier,
    adjectives: HashSet<String>,
}

impl TextAnalyzer {
    pub fn new(lexicon: Arc<Lexicon>, resources: &LidResources) -> Self {
        let lid = LanguageIdentifier::new(resources, &lexicon);
        TextAnalyzer { lexicon, lid, adjectives: resources.spanish_adjectives.clone() }
    }

    pub fn bundled() -> Self {
        Self::new(Arc::new(Lexicon::bundled()), &LidResources::bundled())
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn lexicon_arc(&self) -> Arc<Lexicon> {
        Arc::clone(&self.lexicon)
    }

    pub fn identifier(&self) -> &LanguageIdentifier {
        &self.lid
    }

    pub fn adjectives(&self) -> &HashSet<String> {
        &self.adjectives
    }

    pub fn tokens(&self, text: &str) -> Vec<Token> {
        let mut tokens = tokenize(text);
        for tok in &mut tokens {
            tok.lang = self.lid.classify_token(tok);
        }
        tokens
    }

    pub fn label(&self, text: &str) -> Label {
        label_utterance(&self.tokens(text))
    }

    pub fn simple_nps(&self, tokens: &[Token]) -> Vec<NounPhraseSpan> {
        extract_simple_nps(tokens, &self.lexicon, &self.adjectives)
    }

    pub fn utterance(&self, speaker: Speaker, text: &str, timestamp_ms: u64) -> Utterance {
        let tokens = self.tokens(text);
        let label = label_utterance(&tokens);
        let noun_phrases = self.simple_nps(&tokens);
        Utterance { speaker, text: text.to_string(), tokens, label, timestamp_ms, noun_phrases }
    }
}

/// Per-language token counts over decided tokens.
pub fn decided_counts(tokens: &[Token]) -> HashMap<Language, usize> {
    let mut counts = HashMap::new();
    for lang in tokens.iter().filter_map(|t| t.lang.language()) {
        *counts.entry(lang).or_insert(0) += 1;
    }
    counts
}
