//! JSON messages exchanged with clients over the session socket.
//!
//! Every message is `{"type": …, "session_id": …, "seq": …, "payload": …}`.
//! Server messages are numbered 1, 2, … per session; client messages must
//! carry strictly increasing `seq` values.

use mapcs_core::game::{
    Cell, GameMap, Landmark, Questionnaire, QuestionnaireMode, Role, Session, Stage, Step, TIME_LIMIT_MS,
};
use mapcs_core::metrics::RouteScore;
use mapcs_core::strategy::StrategyKind;
use mapcs_core::textproc::{Label, Speaker, TokenLang, Utterance};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    Join(Join),
    SessionConfig(SessionConfig),
    ChatSend(ChatSend),
    ChatRecv(ChatRecv),
    Move(MovePayload),
    GameState(GameState),
    GameOver(GameOver),
    QuestionnaireSubmit(Questionnaire),
    Error(ErrorPayload),
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::Join(_) => "join",
            Body::SessionConfig(_) => "session_config",
            Body::ChatSend(_) => "chat_send",
            Body::ChatRecv(_) => "chat_recv",
            Body::Move(_) => "move",
            Body::GameState(_) => "game_state",
            Body::GameOver(_) => "game_over",
            Body::QuestionnaireSubmit(_) => "questionnaire_submit",
            Body::Error(_) => "error",
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Body::Error(ErrorPayload { message: message.into() })
    }
}

/// First client message on a socket. Server messages after `last_seq` are
/// resent before live traffic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Join {
    #[serde(default)]
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub condition: String,
    pub strategy: StrategyKind,
    /// The participant's role in each game.
    pub role_sequence: Vec<Role>,
    pub map_ids: Vec<String>,
    pub questionnaire_mode: QuestionnaireMode,
    pub time_limit_ms: u64,
}

impl SessionConfig {
    pub fn for_session(s: &Session) -> Self {
        SessionConfig {
            condition: s.condition_name.clone(),
            strategy: s.condition.kind,
            role_sequence: mapcs_core::game::ROLE_SEQUENCE.to_vec(),
            map_ids: s.map_ids.clone(),
            questionnaire_mode: s.questionnaire_mode,
            time_limit_ms: TIME_LIMIT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSend {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRecv {
    pub game_index: usize,
    /// Position in the game transcript.
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub label: Label,
    pub token_langs: Vec<TokenLang>,
    pub timestamp_ms: u64,
    /// Hex SHA-256 of the backend output the text was derived from; bot
    /// turns only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_sha256: Option<String>,
    #[serde(default)]
    pub degraded: bool,
}

impl ChatRecv {
    pub fn new(game_index: usize, index: usize, u: &Utterance, raw: Option<&str>, degraded: bool) -> Self {
        ChatRecv {
            game_index,
            index,
            speaker: u.speaker,
            text: u.text.clone(),
            label: u.label,
            token_langs: u.tokens.iter().map(|t| t.lang).collect(),
            timestamp_ms: u.timestamp_ms,
            raw_sha256: raw.map(sha256_hex),
            degraded,
        }
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovePayload {
    pub step: Step,
}

/// Map as shown to the participant. `target_path` is present only when the
/// participant is the instructor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapView {
    pub id: String,
    pub title: String,
    pub width: u32,
    pub height: u32,
    pub start: Cell,
    pub end: Cell,
    pub landmarks: Vec<Landmark>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_path: Option<Vec<Cell>>,
}

impl MapView {
    pub fn new(map: &GameMap, human_role: Role) -> Self {
        MapView {
            id: map.id.clone(),
            title: map.title.clone(),
            width: map.width,
            height: map.height,
            start: map.start,
            end: map.end,
            landmarks: map.landmarks.clone(),
            target_path: (human_role == Role::Instructor).then(|| map.target_path.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameView {
    pub game_index: usize,
    pub human_role: Role,
    pub map: MapView,
    pub avatar: Cell,
    pub trace: Vec<Cell>,
    pub started_at_ms: u64,
    pub deadline_ms: u64,
    pub active: bool,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub stage: Stage,
    /// Present during a game.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameView>,
}

impl GameState {
    pub fn for_session(s: &Session, map: Option<&GameMap>) -> Self {
        let game = match (s.stage, map) {
            (Stage::Game(i), Some(map)) => {
                let g = &s.games[i];
                Some(GameView {
                    game_index: i,
                    human_role: g.human_role,
                    map: MapView::new(map, g.human_role),
                    avatar: g.avatar(),
                    trace: g.cells(),
                    started_at_ms: g.started_at_ms,
                    deadline_ms: g.deadline_ms(),
                    active: g.is_active(),
                    completed: g.completed,
                })
            }
            _ => None,
        };
        GameState { stage: s.stage, game }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameOver {
    pub game_index: usize,
    pub completed: bool,
    pub duration_s: f64,
    pub route: RouteScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}
