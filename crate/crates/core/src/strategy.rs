//! Code-switching strategies applied to every bot response before it is
//! shown to the participant.
//!
//! Alternational strategies translate a whole response through a
//! [`Translator`]; insertional strategies rewrite simple noun phrases in
//! place using the noun dictionary and the determiner table.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lexicon::Gender;
use crate::textproc::{Label, Language, Speaker, TextAnalyzer, Utterance};

pub mod check;
pub mod translate;

pub use translate::{ExternalTranslator, PhraseTable, PhraseTableTranslator, TranslateError, Translator};

pub const DEFAULT_K: u32 = 3;
pub const DEFAULT_SWITCH_PROBABILITY: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("unknown strategy '{0}'")]
    UnknownKind(String),
    #[error("short-context window k must be at least 1")]
    ZeroWindow,
    #[error("switch probability {0} is outside [0, 1]")]
    BadProbability(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    AltBaseline,
    AltAlignment,
    AltAdversarial,
    AltRandom,
    AltShortContext,
    InsBaseline,
    InsCongruent,
    InsFemIncongruent,
    InsMascIncongruent,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 9] = [
        StrategyKind::AltBaseline,
        StrategyKind::AltAlignment,
        StrategyKind::AltAdversarial,
        StrategyKind::AltRandom,
        StrategyKind::AltShortContext,
        StrategyKind::InsBaseline,
        StrategyKind::InsCongruent,
        StrategyKind::InsFemIncongruent,
        StrategyKind::InsMascIncongruent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::AltBaseline => "alt_baseline",
            StrategyKind::AltAlignment => "alt_alignment",
            StrategyKind::AltAdversarial => "alt_adversarial",
            StrategyKind::AltRandom => "alt_random",
            StrategyKind::AltShortContext => "alt_short_context",
            StrategyKind::InsBaseline => "ins_baseline",
            StrategyKind::InsCongruent => "ins_congruent",
            StrategyKind::InsFemIncongruent => "ins_fem_incongruent",
            StrategyKind::InsMascIncongruent => "ins_masc_incongruent",
        }
    }

    pub fn is_insertional(self) -> bool {
        matches!(
            self,
            StrategyKind::InsBaseline
                | StrategyKind::InsCongruent
                | StrategyKind::InsFemIncongruent
                | StrategyKind::InsMascIncongruent
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| StrategyError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_p")]
    pub switch_probability: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_k() -> u32 {
    DEFAULT_K
}

fn default_p() -> f64 {
    DEFAULT_SWITCH_PROBABILITY
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig { kind, k: DEFAULT_K, switch_probability: DEFAULT_SWITCH_PROBABILITY, rng_seed: 0 }
    }

    pub fn with_k(mut self, k: u32) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_switch_probability(mut self, p: f64) -> Self {
        self.switch_probability = p;
        self
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.k == 0 {
            return Err(StrategyError::ZeroWindow);
        }
        if !(0.0..=1.0).contains(&self.switch_probability) {
            return Err(StrategyError::BadProbability(self.switch_probability));
        }
        Ok(())
    }
}

/// Deterministic per-session stream derived from the session id and seed.
pub fn session_rng(session_id: &str, seed: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(session_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Everything said so far in a session, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogState {
    history: Vec<Utterance>,
}

impl DialogState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_history(history: Vec<Utterance>) -> Self {
        DialogState { history }
    }

    pub fn push(&mut self, utterance: Utterance) {
        self.history.push(utterance);
    }

    pub fn history(&self) -> &[Utterance] {
        &self.history
    }

    pub fn last_human_label(&self) -> Option<Label> {
        self.history.iter().rev().find(|u| u.speaker == Speaker::Human).map(|u| u.label)
    }

    pub fn bot_utterance_count(&self) -> usize {
        self.history.iter().filter(|u| u.speaker == Speaker::Bot).count()
    }

    /// Trailing run of same-language bot utterances. Mixed and none-labelled
    /// bot utterances are skipped without breaking the run.
    pub fn bot_unilingual_run(&self) -> Option<(Language, usize)> {
        let mut labels =
            self.history.iter().rev().filter(|u| u.speaker == Speaker::Bot).filter_map(|u| u.label.language());
        let lang = labels.next()?;
        Some((lang, 1 + labels.take_while(|&l| l == lang).count()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum Action {
    Unchanged,
    Translated { to: Language },
    Inserted { rewritten: usize },
}

/// Result of running one strategy on one candidate response.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub text: String,
    pub action: Action,
    /// Set when the translator failed and the candidate was kept.
    pub degraded: bool,
}

impl Applied {
    fn unchanged(candidate: &str) -> Self {
        Applied { text: candidate.to_string(), action: Action::Unchanged, degraded: false }
    }
}

pub struct StrategyContext<'a> {
    pub analyzer: &'a TextAnalyzer,
    pub translator: &'a dyn Translator,
}

pub fn apply_strategy<R: Rng + ?Sized>(
    cfg: &StrategyConfig,
    state: &DialogState,
    candidate: &str,
    ctx: &StrategyContext<'_>,
    rng: &mut R,
) -> Applied {
    match cfg.kind {
        StrategyKind::AltBaseline | StrategyKind::InsBaseline => Applied::unchanged(candidate),
        StrategyKind::AltAlignment => alt_alignment(state, candidate, ctx),
        StrategyKind::AltAdversarial => alt_adversarial(state, candidate, ctx),
        StrategyKind::AltRandom => alt_random(candidate, cfg.switch_probability, ctx, rng),
        StrategyKind::AltShortContext => alt_short_context(state, candidate, cfg.k, ctx),
        StrategyKind::InsCongruent | StrategyKind::InsFemIncongruent | StrategyKind::InsMascIncongruent => {
            let (text, rewritten) = ins_transform(cfg.kind, candidate, ctx.analyzer);
            let action = if rewritten == 0 { Action::Unchanged } else { Action::Inserted { rewritten } };
            Applied { text, action, degraded: false }
        }
    }
}

fn translate_to(candidate: &str, target: Language, ctx: &StrategyContext<'_>) -> Applied {
    match ctx.translator.translate(candidate, target) {
        Ok(text) => Applied { text, action: Action::Translated { to: target }, degraded: false },
        Err(err) => {
            log::warn!("degraded turn: translation to {} failed: {err}", target.code());
            Applied { text: candidate.to_string(), action: Action::Unchanged, degraded: true }
        }
    }
}

/// Respond in the language of the last unilingual human utterance.
pub fn alt_alignment(state: &DialogState, candidate: &str, ctx: &StrategyContext<'_>) -> Applied {
    let Some(target) = state.last_human_label().and_then(Label::language) else {
        return Applied::unchanged(candidate);
    };
    if ctx.analyzer.label(candidate) == Label::from(target) {
        return Applied::unchanged(candidate);
    }
    translate_to(candidate, target, ctx)
}

/// Respond in the other language than the last unilingual human utterance.
pub fn alt_adversarial(state: &DialogState, candidate: &str, ctx: &StrategyContext<'_>) -> Applied {
    let Some(human) = state.last_human_label().and_then(Label::language) else {
        return Applied::unchanged(candidate);
    };
    let target = human.other();
    if ctx.analyzer.label(candidate) == Label::from(target) {
        return Applied::unchanged(candidate);
    }
    translate_to(candidate, target, ctx)
}

/// Switch the candidate's own language with probability `p`. One coin is
/// drawn per call, whatever the candidate's label, so the stream position
/// depends only on the number of bot turns.
pub fn alt_random<R: Rng + ?Sized>(candidate: &str, p: f64, ctx: &StrategyContext<'_>, rng: &mut R) -> Applied {
    let switch = rng.random_bool(p);
    let Some(lang) = ctx.analyzer.label(candidate).language() else {
        return Applied::unchanged(candidate);
    };
    if !switch {
        return Applied::unchanged(candidate);
    }
    translate_to(candidate, lang.other(), ctx)
}

pub fn alt_short_context(state: &DialogState, candidate: &str, k: u32, ctx: &StrategyContext<'_>) -> Applied {
    let Some((run_lang, run)) = state.bot_unilingual_run() else {
        return Applied::unchanged(candidate);
    };
    if run < k as usize || ctx.analyzer.label(candidate) != Label::from(run_lang) {
        return Applied::unchanged(candidate);
    }
    translate_to(candidate, run_lang.other(), ctx)
}

/// Rewrites Spanish simple NPs for an insertional strategy and returns the
/// new text with the number of rewritten phrases. Other kinds are identity.
pub fn ins_transform(kind: StrategyKind, candidate: &str, analyzer: &TextAnalyzer) -> (String, usize) {
    let switch_gender_of = match kind {
        StrategyKind::InsCongruent => None,
        StrategyKind::InsFemIncongruent => Some(Gender::Feminine),
        StrategyKind::InsMascIncongruent => Some(Gender::Masculine),
        _ => return (candidate.to_string(), 0),
    };
    let lex = analyzer.lexicon();
    let tokens = analyzer.tokens(candidate);
    let mut edits: Vec<(usize, usize, String)> = Vec::new();
    let mut rewritten = 0;
    for span in analyzer.simple_nps(&tokens) {
        if span.noun_lang != Language::Spanish {
            continue;
        }
        let Some(entry) = lex.lookup_es(&span.noun) else {
            continue;
        };
        let noun_tok = &tokens[span.noun_index];
        let det_tok = &tokens[span.det_index];
        match switch_gender_of {
            None => {}
            Some(g) if entry.spanish_gender == g => {
                let det =
                    lex.map_determiner_gender(&det_tok.lower, g.opposite()).expect("span determiner is in the table");
                edits.push((det_tok.start, det_tok.end, match_case(&det_tok.surface, det)));
            }
            Some(_) => continue,
        }
        edits.push((noun_tok.start, noun_tok.end, match_case(&noun_tok.surface, &entry.english_lemma)));
        rewritten += 1;
    }
    edits.sort_by_key(|e| e.0);
    let mut out = String::with_capacity(candidate.len());
    let mut pos = 0;
    for (start, end, replacement) in edits {
        out.push_str(&candidate[pos..start]);
        out.push_str(&replacement);
        pos = end;
    }
    out.push_str(&candidate[pos..]);
    (out, rewritten)
}

/// Copies the capitalisation pattern of `template` onto `word`.
pub fn match_case(template: &str, word: &str) -> String {
    let letters: Vec<char> = template.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return word.to_uppercase();
    }
    match template.chars().next() {
        Some(c) if c.is_uppercase() => {
            let mut chars = word.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        }
        _ => word.to_string(),
    }
}

#[cfg(test)]
mod tests;
