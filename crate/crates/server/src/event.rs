//! The per-session event log. Each line of a session log file is one
//! [`Event`]; replaying the log rebuilds the session.

use mapcs_core::game::{Questionnaire, QuestionnaireMode, Step};
use mapcs_core::strategy::StrategyConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created(Created),
    Command(CommandEvent),
    /// Outcome of the bot turn triggered by the preceding chat command.
    BotReply(BotReplyRecord),
}

/// Session parameters; always the first event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub token: String,
    /// Wall-clock creation time, ms since the Unix epoch. Every other
    /// timestamp is relative to it.
    pub created_at_ms: u64,
    pub condition_name: String,
    pub condition: StrategyConfig,
    pub map_ids: Vec<String>,
    pub questionnaire_mode: QuestionnaireMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEvent {
    pub t_ms: u64,
    /// Client message number; 0 for server-originated commands.
    pub client_seq: u64,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Chat {
        text: String,
    },
    Move {
        step: Step,
    },
    Questionnaire {
        responses: Questionnaire,
    },
    /// Clock check; logged only when it closes a game.
    Tick,
    /// A client message that could not be parsed.
    Invalid {
        message: String,
    },
}

/// Recorded backend output plus what the strategy made of it, so replay can
/// re-run the strategy and check the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotReplyRecord {
    pub t_ms: u64,
    pub raw: String,
    /// False when both backend attempts failed and `raw` is the fallback.
    pub backend_ok: bool,
    pub final_text: String,
    pub moves: Vec<Step>,
    pub degraded: bool,
}
