//! The conversational bot: backends, prompt construction, welcome messages,
//! the navigator move protocol, and one full bot turn.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::game::{Cell, GameMap, Landmark, Role, Step};
use crate::lexicon::{Gender, Number};
use crate::strategy::{apply_strategy, Action, DialogState, StrategyConfig, StrategyContext};
use crate::textproc::{tokenize, Language, Speaker, TokenKind, Utterance};

mod participant;

pub use participant::{ParticipantStyle, SimulatedParticipant};

const INSTRUCTOR_TEMPLATE: &str = include_str!("../prompts/instructor.txt");
const NAVIGATOR_TEMPLATE: &str = include_str!("../prompts/navigator.txt");
const WELCOME_POOL: &str = include_str!("../prompts/welcome.txt");

/// Sent when the backend fails twice in a row.
pub const FALLBACK_LINE: &str = "Perdón, I had a problem. ¿Puedes repetir?";
pub const CLARIFICATION_ES: &str = "No entiendo, ¿hacia dónde voy?";
pub const CLARIFICATION_EN: &str = "I do not understand, where do I go?";
pub const GOAL_ES: &str = "¡Llegaste a la meta!";
pub const GOAL_EN: &str = "You reached the goal!";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("backend request failed: {0}")]
    Backend(String),
    #[error("backend returned an empty reply")]
    EmptyReply,
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageDirective {
    #[default]
    None,
    SpanishOnly,
}

impl LanguageDirective {
    /// Insertional conditions ask the backend for Spanish only.
    pub fn for_condition(cfg: &StrategyConfig) -> Self {
        if cfg.kind.is_insertional() {
            LanguageDirective::SpanishOnly
        } else {
            LanguageDirective::None
        }
    }

    fn text(self) -> &'static str {
        match self {
            LanguageDirective::None => "",
            LanguageDirective::SpanishOnly => "Communicate exclusively in Spanish.",
        }
    }
}

/// What a backend sees for one turn.
#[derive(Debug, Clone)]
pub struct BotRequest<'a> {
    /// The bot's role in this game.
    pub role: Role,
    pub directive: LanguageDirective,
    pub map: &'a GameMap,
    /// The current game's transcript.
    pub transcript: &'a [Utterance],
    pub latest_human: &'a str,
    /// The navigator's avatar.
    pub avatar: Cell,
    /// Earlier bot turns in this game, welcome message excluded.
    pub game_turn: usize,
    pub session_id: &'a str,
    /// Earlier bot turns in the session.
    pub session_turn: u64,
    pub prompt: String,
}

/// Stage one of a bot turn: produce a candidate reply, which may embed
/// «MOVE:…» directives.
pub trait AgentBackend: Send + Sync {
    fn generate(&self, request: &BotRequest<'_>) -> Result<String, AgentError>;
}

/// Role-specific prompt text with `{{placeholder}}` substitution. The
/// navigator template may not mention the target path.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    instructor: String,
    navigator: String,
}

impl PromptTemplate {
    pub fn new(instructor: String, navigator: String) -> Result<Self, AgentError> {
        if navigator.contains("{{target_path}}") {
            return Err(AgentError::Template("navigator template references {{target_path}}".into()));
        }
        if !instructor.contains("{{target_path}}") {
            return Err(AgentError::Template("instructor template lacks {{target_path}}".into()));
        }
        Ok(PromptTemplate { instructor, navigator })
    }

    pub fn bundled() -> Self {
        Self::new(INSTRUCTOR_TEMPLATE.into(), NAVIGATOR_TEMPLATE.into()).expect("bundled templates are valid")
    }

    pub fn load(instructor: &std::path::Path, navigator: &std::path::Path) -> Result<Self, AgentError> {
        let read = |p: &std::path::Path| {
            std::fs::read_to_string(p).map_err(|e| AgentError::Template(format!("{}: {e}", p.display())))
        };
        Self::new(read(instructor)?, read(navigator)?)
    }

    pub fn render(
        &self,
        role: Role,
        directive: LanguageDirective,
        map: &GameMap,
        transcript: &[Utterance],
        avatar: Cell,
    ) -> String {
        let landmarks: Vec<String> =
            map.landmarks.iter().map(|l| format!("- {} / {} at {}", l.english, l.spanish, l.cell)).collect();
        let history: Vec<String> = transcript
            .iter()
            .map(|u| {
                let who = match u.speaker {
                    Speaker::Human => "Partner",
                    Speaker::Bot => "You",
                };
                format!("{who}: {}", u.text)
            })
            .collect();
        let template = match role {
            Role::Instructor => &self.instructor,
            Role::Navigator => &self.navigator,
        };
        let mut out = template
            .lines()
            .filter(|l| !l.starts_with("# prompt-version"))
            .collect::<Vec<_>>()
            .join("\n")
            .replace("{{language_directive}}", directive.text())
            .replace("{{landmarks}}", &landmarks.join("\n"))
            .replace("{{history}}", &history.join("\n"))
            .replace("{{position}}", &avatar.to_string());
        if role == Role::Instructor {
            let path: Vec<String> = map.target_path.iter().map(Cell::to_string).collect();
            out = out.replace("{{target_path}}", &path.join(" "));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct WelcomeMessages {
    pool: Vec<String>,
}

impl WelcomeMessages {
    pub fn new(pool: Vec<String>) -> Option<Self> {
        (!pool.is_empty()).then_some(WelcomeMessages { pool })
    }

    pub fn bundled() -> Self {
        let pool = WELCOME_POOL.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect();
        Self::new(pool).expect("bundled welcome pool is nonempty")
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }

    /// Uniform draw from the pool.
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.pool[rng.random_range(0..self.pool.len())]
    }
}

const MOVE_OPEN: &str = "«MOVE:";
const MOVE_CLOSE: char = '»';

/// Strips well-formed «MOVE:dir» directives and returns them in order.
/// Malformed directives stay in the text verbatim.
pub fn parse_move_commands(raw: &str) -> (String, Vec<Step>) {
    let mut text = String::with_capacity(raw.len());
    let mut steps = Vec::new();
    let mut rest = raw;
    while let Some(pos) = rest.find(MOVE_OPEN) {
        text.push_str(&rest[..pos]);
        let after = &rest[pos + MOVE_OPEN.len()..];
        match after.find(MOVE_CLOSE).and_then(|end| after[..end].parse::<Step>().ok().map(|s| (end, s))) {
            Some((end, step)) => {
                steps.push(step);
                rest = &after[end + MOVE_CLOSE.len_utf8()..];
            }
            None => {
                text.push_str(MOVE_OPEN);
                rest = after;
            }
        }
    }
    text.push_str(rest);
    let clean = if steps.is_empty() { text } else { text.split_whitespace().collect::<Vec<_>>().join(" ") };
    (clean, steps)
}

pub fn render_moves(steps: &[Step]) -> String {
    steps.iter().map(|s| format!("{MOVE_OPEN}{s}{MOVE_CLOSE}")).collect()
}

const DIRECTION_WORDS: [(&str, Step); 20] = [
    ("down", Step::Down),
    ("abajo", Step::Down),
    ("baja", Step::Down),
    ("bajar", Step::Down),
    ("bajo", Step::Down),
    ("up", Step::Up),
    ("arriba", Step::Up),
    ("sube", Step::Up),
    ("subir", Step::Up),
    ("subo", Step::Up),
    ("left", Step::Left),
    ("izquierda", Step::Left),
    ("right", Step::Right),
    ("derecha", Step::Right),
    ("south", Step::Down),
    ("north", Step::Up),
    ("west", Step::Left),
    ("east", Step::Right),
    ("sur", Step::Down),
    ("norte", Step::Up),
];

const NUMBER_WORDS: [(&str, u32); 21] = [
    ("one", 1),
    ("una", 1),
    ("uno", 1),
    ("two", 2),
    ("dos", 2),
    ("three", 3),
    ("tres", 3),
    ("four", 4),
    ("cuatro", 4),
    ("five", 5),
    ("cinco", 5),
    ("six", 6),
    ("seis", 6),
    ("seven", 7),
    ("siete", 7),
    ("eight", 8),
    ("ocho", 8),
    ("nine", 9),
    ("nueve", 9),
    ("ten", 10),
    ("diez", 10),
];

/// Longest accepted count in one instruction.
pub const MAX_COUNT: u32 = 40;

/// First direction word and first count in a free-text instruction; the
/// count defaults to 1.
pub fn parse_direction(text: &str) -> Option<(Step, u32)> {
    let tokens = tokenize(text);
    let step = tokens.iter().find_map(|t| DIRECTION_WORDS.iter().find(|(w, _)| *w == t.lower).map(|&(_, s)| s))?;
    let count = tokens
        .iter()
        .find_map(|t| match t.kind {
            TokenKind::Number => t.lower.parse::<u32>().ok(),
            TokenKind::Word => NUMBER_WORDS.iter().find(|(w, _)| *w == t.lower).map(|&(_, n)| n),
            _ => None,
        })
        .unwrap_or(1);
    (1..=MAX_COUNT).contains(&count).then_some((step, count))
}

/// A straight run of the target path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub step: Step,
    pub count: u32,
    pub end: Cell,
}

/// The target path as maximal straight runs.
pub fn path_segments(path: &[Cell]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for w in path.windows(2) {
        let Some(step) = w[0].step_to(w[1]) else { continue };
        match out.last_mut() {
            Some(seg) if seg.step == step => {
                seg.count += 1;
                seg.end = w[1];
            }
            _ => out.push(Segment { step, count: 1, end: w[1] }),
        }
    }
    out
}

/// Landmark closest to `cell` within Manhattan distance 1, first in map
/// order on ties.
pub fn landmark_near(map: &GameMap, cell: Cell) -> Option<&Landmark> {
    map.landmarks.iter().filter(|l| l.cell.manhattan(cell) <= 1).min_by_key(|l| l.cell.manhattan(cell))
}

fn direction_word(step: Step, lang: Language) -> &'static str {
    match (lang, step) {
        (Language::Spanish, Step::Up) => "arriba",
        (Language::Spanish, Step::Down) => "abajo",
        (Language::Spanish, Step::Left) => "izquierda",
        (Language::Spanish, Step::Right) => "derecha",
        (Language::English, s) => s.as_str(),
    }
}

fn count_phrase(n: u32, lang: Language) -> String {
    const ES: [&str; 10] = ["una", "dos", "tres", "cuatro", "cinco", "seis", "siete", "ocho", "nueve", "diez"];
    const EN: [&str; 10] = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    let number = match lang {
        Language::Spanish => ES.get(n as usize - 1).map_or_else(|| n.to_string(), |w| w.to_string()),
        Language::English => EN.get(n as usize - 1).map_or_else(|| n.to_string(), |w| w.to_string()),
    };
    let unit = match (lang, n) {
        (Language::Spanish, 1) => "casilla",
        (Language::Spanish, _) => "casillas",
        (Language::English, 1) => "square",
        (Language::English, _) => "squares",
    };
    format!("{number} {unit}")
}

/// Definite article agreeing with a landmark noun.
pub fn landmark_article(l: &Landmark, lex: &crate::lexicon::Lexicon) -> &'static str {
    let plural = lex.lookup_es(&l.spanish).is_some_and(|e| e.number == Number::Plural);
    match (l.gender, plural) {
        (Gender::Masculine, false) => "el",
        (Gender::Feminine, false) => "la",
        (Gender::Masculine, true) => "los",
        (Gender::Feminine, true) => "las",
    }
}

/// One direction line: "Ve abajo dos casillas hasta el tenedor." or
/// "Go down two squares to the fork."
pub fn instruction_line(seg: &Segment, landmark: Option<(&Landmark, &'static str)>, lang: Language) -> String {
    let dir = direction_word(seg.step, lang);
    let count = count_phrase(seg.count, lang);
    match (lang, landmark) {
        (Language::Spanish, Some((l, det))) => format!("Ve {dir} {count} hasta {det} {}.", l.spanish),
        (Language::Spanish, None) => format!("Ve {dir} {count}."),
        (Language::English, Some((l, _))) => format!("Go {dir} {count} to the {}.", l.english),
        (Language::English, None) => format!("Go {dir} {count}."),
    }
}

pub fn navigator_line(step: Step, count: u32, lang: Language) -> String {
    let dir = direction_word(step, lang);
    let count = count_phrase(count, lang);
    match lang {
        Language::Spanish => format!("Voy {dir} {count}."),
        Language::English => format!("I go {dir} {count}."),
    }
}

/// Deterministic test double. Instructor mode walks the target path one
/// straight run per turn; navigator mode answers the restricted direction
/// grammar with MOVE directives.
#[derive(Debug, Clone)]
pub struct ScriptedBot {
    seed: u64,
    lexicon: std::sync::Arc<crate::lexicon::Lexicon>,
}

impl ScriptedBot {
    pub fn new(seed: u64, lexicon: std::sync::Arc<crate::lexicon::Lexicon>) -> Self {
        ScriptedBot { seed, lexicon }
    }

    /// Spanish or English for a given session turn, as a pure function of
    /// the seed and session id.
    pub fn language_for(&self, directive: LanguageDirective, session_id: &str, session_turn: u64) -> Language {
        if directive == LanguageDirective::SpanishOnly {
            return Language::Spanish;
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(session_id.as_bytes());
        h.update([0u8]);
        h.update(session_turn.to_le_bytes());
        if h.finalize()[0] & 1 == 0 {
            Language::Spanish
        } else {
            Language::English
        }
    }
}

impl AgentBackend for ScriptedBot {
    fn generate(&self, req: &BotRequest<'_>) -> Result<String, AgentError> {
        let lang = self.language_for(req.directive, req.session_id, req.session_turn);
        Ok(match req.role {
            Role::Instructor => {
                let segments = path_segments(&req.map.target_path);
                match segments.get(req.game_turn) {
                    Some(seg) => {
                        let landmark = landmark_near(req.map, seg.end).map(|l| (l, landmark_article(l, &self.lexicon)));
                        instruction_line(seg, landmark, lang)
                    }
                    None => match lang {
                        Language::Spanish => GOAL_ES.to_string(),
                        Language::English => GOAL_EN.to_string(),
                    },
                }
            }
            Role::Navigator => match parse_direction(req.latest_human) {
                Some((step, n)) => {
                    let moves = vec![step; n as usize];
                    format!("{} {}", navigator_line(step, n, lang), render_moves(&moves))
                }
                None => match lang {
                    Language::Spanish => CLARIFICATION_ES.to_string(),
                    Language::English => CLARIFICATION_EN.to_string(),
                },
            },
        })
    }
}

/// Adapter for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct ExternalChatBackend {
    endpoint: String,
    model: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl ExternalChatBackend {
    pub const DEFAULT_ENDPOINT: &'static str = "https://api.openai.com/v1/chat/completions";

    /// Reads the API key from `key_env`.
    pub fn from_env(endpoint: &str, model: &str, key_env: &str, timeout: Duration) -> Result<Self, AgentError> {
        let api_key = std::env::var(key_env).map_err(|_| AgentError::MissingCredential(key_env.to_string()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AgentError::Backend(e.to_string()))?;
        Ok(ExternalChatBackend { endpoint: endpoint.to_string(), model: model.to_string(), api_key, client })
    }
}

impl AgentBackend for ExternalChatBackend {
    fn generate(&self, req: &BotRequest<'_>) -> Result<String, AgentError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [
                { "role": "system", "content": req.prompt },
                { "role": "user", "content": req.latest_human },
            ],
        });
        let resp: ChatResponse = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| AgentError::Backend(e.to_string()))?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|t| !t.trim().is_empty())
            .ok_or(AgentError::EmptyReply)
    }
}

/// Everything a bot turn produced, for the event log and the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotTurn {
    /// Backend output, directives included.
    pub raw: String,
    /// Candidate after directive stripping, before the strategy.
    pub candidate: String,
    pub final_text: String,
    pub moves: Vec<Step>,
    pub action: Action,
    /// Set when the backend fell back or the translator failed.
    pub degraded: bool,
    /// Both backend attempts failed and `raw` is the fallback line.
    pub backend_failed: bool,
}

/// Inputs of a bot turn other than the backend and strategy.
pub struct TurnInput<'a> {
    pub role: Role,
    pub directive: LanguageDirective,
    pub map: &'a GameMap,
    pub transcript: &'a [Utterance],
    pub latest_human: &'a str,
    pub avatar: Cell,
    pub game_turn: usize,
    pub session_id: &'a str,
    pub session_turn: u64,
}

/// Stage one (backend, retried once, then the fallback line) followed by
/// stage two (the strategy) on the directive-free text.
pub fn bot_turn<R: Rng + ?Sized>(
    backend: &dyn AgentBackend,
    template: &PromptTemplate,
    input: &TurnInput<'_>,
    state: &DialogState,
    cfg: &StrategyConfig,
    ctx: &StrategyContext<'_>,
    rng: &mut R,
) -> BotTurn {
    let request = BotRequest {
        role: input.role,
        directive: input.directive,
        map: input.map,
        transcript: input.transcript,
        latest_human: input.latest_human,
        avatar: input.avatar,
        game_turn: input.game_turn,
        session_id: input.session_id,
        session_turn: input.session_turn,
        prompt: template.render(input.role, input.directive, input.map, input.transcript, input.avatar),
    };
    let generated = backend.generate(&request).or_else(|first| {
        log::warn!("backend failed, retrying: {first}");
        backend.generate(&request)
    });
    let (raw, backend_failed) = match generated {
        Ok(text) if !text.trim().is_empty() => (text, false),
        Ok(_) => {
            log::warn!("degraded turn: backend returned an empty reply");
            (FALLBACK_LINE.to_string(), true)
        }
        Err(err) => {
            log::warn!("degraded turn: backend failed twice: {err}");
            (FALLBACK_LINE.to_string(), true)
        }
    };
    let (candidate, mut moves) = parse_move_commands(&raw);
    if input.role == Role::Instructor {
        moves.clear();
    }
    let candidate = if candidate.trim().is_empty() { FALLBACK_LINE.to_string() } else { candidate };
    finish_turn(raw, candidate, moves, backend_failed, state, cfg, ctx, rng)
}

/// Stage two alone, for a candidate that did not come from a backend call
/// (the welcome message).
pub fn strategy_turn<R: Rng + ?Sized>(
    candidate: &str,
    state: &DialogState,
    cfg: &StrategyConfig,
    ctx: &StrategyContext<'_>,
    rng: &mut R,
) -> BotTurn {
    finish_turn(candidate.to_string(), candidate.to_string(), Vec::new(), false, state, cfg, ctx, rng)
}

#[allow(clippy::too_many_arguments)]
fn finish_turn<R: Rng + ?Sized>(
    raw: String,
    candidate: String,
    moves: Vec<Step>,
    backend_failed: bool,
    state: &DialogState,
    cfg: &StrategyConfig,
    ctx: &StrategyContext<'_>,
    rng: &mut R,
) -> BotTurn {
    let applied = apply_strategy(cfg, state, &candidate, ctx, rng);
    BotTurn {
        raw,
        candidate,
        final_text: applied.text,
        moves,
        action: applied.action,
        degraded: backend_failed || applied.degraded,
        backend_failed,
    }
}
