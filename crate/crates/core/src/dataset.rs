//! JSON Lines dataset: a schema header, then per session a session record,
//! and per game a game record followed by its utterance records.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{
    QuestionnaireMode, QuestionnaireRecord, Role, Session, TracePoint, GAMES_PER_SESSION, ROLE_SEQUENCE, TIME_LIMIT_MS,
};
use crate::metrics::{GameScore, RouteScore, SessionInput};
use crate::strategy::StrategyConfig;
use crate::textproc::{Label, NounPhraseSpan, Speaker, Token, TokenKind, TokenLang, Utterance};

pub const SCHEMA_NAME: &str = "mapcs-dataset";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing schema header")]
    MissingHeader,
    #[error("unsupported schema {name} version {version}; expected {SCHEMA_NAME} version {SCHEMA_VERSION}")]
    Version { name: String, version: u32 },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: u32,
}

impl Default for Header {
    fn default() -> Self {
        Header { schema: SCHEMA_NAME.to_string(), version: SCHEMA_VERSION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub condition: String,
    pub strategy: StrategyConfig,
    pub map_ids: Vec<String>,
    pub questionnaire_mode: QuestionnaireMode,
    pub questionnaires: Vec<QuestionnaireRecord>,
    pub n_games: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSummaryRecord {
    pub session_id: String,
    pub condition: String,
    pub game_index: usize,
    pub map_id: String,
    pub human_role: Role,
    pub started_at_ms: u64,
    pub ended_at_ms: u64,
    pub duration_s: f64,
    pub completed: bool,
    pub route: RouteScore,
    pub trace: Vec<TracePoint>,
    pub n_utterances: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub text: String,
    pub kind: TokenKind,
    pub lang: TokenLang,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub session_id: String,
    pub condition: String,
    pub game_index: usize,
    pub human_role: Role,
    pub index: usize,
    pub speaker: Speaker,
    pub timestamp_ms: u64,
    pub text: String,
    /// Backend output for bot turns.
    pub raw_text: Option<String>,
    pub degraded: bool,
    pub tokens: Vec<TokenRecord>,
    pub label: Label,
    pub noun_phrases: Vec<NounPhraseSpan>,
}

impl UtteranceRecord {
    /// Rebuilds the utterance, recovering token offsets from the text.
    pub fn to_utterance(&self) -> Result<Utterance, String> {
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(self.tokens.len());
        for t in &self.tokens {
            let start = self.text[pos..]
                .find(&t.text)
                .map(|i| pos + i)
                .ok_or_else(|| format!("token {:?} not found in text", t.text))?;
            let end = start + t.text.len();
            tokens.push(Token {
                surface: t.text.clone(),
                lower: t.text.to_lowercase(),
                kind: t.kind,
                lang: t.lang,
                start,
                end,
            });
            pos = end;
        }
        Ok(Utterance {
            speaker: self.speaker,
            text: self.text.clone(),
            tokens,
            label: self.label,
            timestamp_ms: self.timestamp_ms,
            noun_phrases: self.noun_phrases.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Header(Header),
    Session(SessionRecord),
    Game(GameSummaryRecord),
    Utterance(UtteranceRecord),
}

/// Records for one finished session, in export order. `None` when the
/// session has not reached the export stage.
pub fn session_records(session: &Session) -> Option<Vec<Record>> {
    if !session.is_finished() {
        return None;
    }
    let mut out = vec![Record::Session(SessionRecord {
        session_id: session.session_id.clone(),
        condition: session.condition_name.clone(),
        strategy: session.condition.clone(),
        map_ids: session.map_ids.clone(),
        questionnaire_mode: session.questionnaire_mode,
        questionnaires: session.questionnaires.clone(),
        n_games: session.games.len(),
    })];
    for (gi, g) in session.games.iter().enumerate() {
        out.push(Record::Game(GameSummaryRecord {
            session_id: session.session_id.clone(),
            condition: session.condition_name.clone(),
            game_index: gi,
            map_id: g.map_id.clone(),
            human_role: g.human_role,
            started_at_ms: g.started_at_ms,
            ended_at_ms: g.ended_at_ms?,
            duration_s: g.duration_s()?,
            completed: g.completed,
            route: g.route?,
            trace: g.avatar_trace.clone(),
            n_utterances: g.transcript.len(),
        }));
        for (ui, u) in g.transcript.iter().enumerate() {
            let meta = g.turn_meta.get(ui).cloned().unwrap_or_default();
            out.push(Record::Utterance(UtteranceRecord {
                session_id: session.session_id.clone(),
                condition: session.condition_name.clone(),
                game_index: gi,
                human_role: g.human_role,
                index: ui,
                speaker: u.speaker,
                timestamp_ms: u.timestamp_ms,
                text: u.text.clone(),
                raw_text: meta.raw_text,
                degraded: meta.degraded,
                tokens: u
                    .tokens
                    .iter()
                    .map(|t| TokenRecord { text: t.surface.clone(), kind: t.kind, lang: t.lang })
                    .collect(),
                label: u.label,
                noun_phrases: u.noun_phrases.clone(),
            }));
        }
    }
    Some(out)
}

fn line(record: &Record) -> String {
    let mut s = serde_json::to_string(record).expect("records serialize");
    s.push('\n');
    s
}

/// Serializes finished sessions sorted by id; unfinished ones are skipped
/// with a warning.
pub fn write_dataset<'a>(sessions: impl IntoIterator<Item = &'a Session>) -> String {
    let mut sorted: Vec<&Session> = sessions.into_iter().collect();
    sorted.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let mut out = line(&Record::Header(Header::default()));
    for s in sorted {
        match session_records(s) {
            Some(records) => records.iter().for_each(|r| out.push_str(&line(r))),
            None => log::warn!("skipping unfinished session {}", s.session_id),
        }
    }
    out
}

/// A parsed dataset, records in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub sessions: Vec<SessionRecord>,
    pub games: Vec<GameSummaryRecord>,
    pub utterances: Vec<UtteranceRecord>,
}

impl Dataset {
    pub fn parse(src: &str) -> Result<Self, DatasetError> {
        let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(DatasetError::MissingHeader)?;
        let header: Record = serde_json::from_str(first).map_err(|_| DatasetError::MissingHeader)?;
        let Record::Header(header) = header else {
            return Err(DatasetError::MissingHeader);
        };
        if header.schema != SCHEMA_NAME || header.version != SCHEMA_VERSION {
            return Err(DatasetError::Version { name: header.schema, version: header.version });
        }
        let mut ds = Dataset::default();
        for (i, l) in lines {
            let record: Record =
                serde_json::from_str(l).map_err(|e| DatasetError::Parse { line: i + 1, message: e.to_string() })?;
            match record {
                Record::Header(_) => {
                    return Err(DatasetError::Invalid { line: i + 1, message: "repeated header".into() })
                }
                Record::Session(s) => ds.sessions.push(s),
                Record::Game(g) => ds.games.push(g),
                Record::Utterance(u) => ds.utterances.push(u),
            }
        }
        Ok(ds)
    }

    /// Report inputs, one per session record.
    pub fn report_inputs(&self) -> Result<Vec<SessionInput>, DatasetError> {
        let mut out = Vec::with_capacity(self.sessions.len());
        for s in &self.sessions {
            let mut dialogs = vec![Vec::new(); s.n_games];
            for u in self.utterances.iter().filter(|u| u.session_id == s.session_id) {
                let utt = u.to_utterance().map_err(|message| DatasetError::Invalid { line: 0, message })?;
                dialogs
                    .get_mut(u.game_index)
                    .ok_or_else(|| DatasetError::Invalid {
                        line: 0,
                        message: format!("utterance for missing game {}", u.game_index),
                    })?
                    .push(utt);
            }
            let games = self
                .games
                .iter()
                .filter(|g| g.session_id == s.session_id)
                .map(|g| GameScore {
                    map_id: g.map_id.clone(),
                    duration_s: g.duration_s,
                    completed: g.completed,
                    route: g.route,
                })
                .collect();
            out.push(SessionInput {
                condition_name: s.condition.clone(),
                condition: s.strategy.clone(),
                dialogs,
                games,
                questionnaires: s.questionnaires.iter().map(|q| q.responses.clone()).collect(),
            });
        }
        Ok(out)
    }
}

/// Counts found by [`validate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetSummary {
    pub sessions: usize,
    pub games: usize,
    pub utterances: usize,
}

/// Checks header, record order, cross references and the session
/// structure (four games, fixed role sequence, distinct maps, time limit,
/// connected traces).
pub fn validate_dataset(src: &str) -> Result<DatasetSummary, DatasetError> {
    let _ = Dataset::parse(src)?;
    let invalid = |line: usize, message: String| DatasetError::Invalid { line, message };
    let mut summary = DatasetSummary::default();
    let mut seen_sessions = HashSet::new();
    let mut current: Option<SessionRecord> = None;
    let mut game: Option<(GameSummaryRecord, usize)> = None;
    let mut games_in_session = 0;
    let close_session = |current: &Option<SessionRecord>, games: usize, line: usize| -> Result<(), DatasetError> {
        if let Some(s) = current {
            if games != s.n_games {
                return Err(invalid(
                    line,
                    format!("session {} has {games} game records, declared {}", s.session_id, s.n_games),
                ));
            }
        }
        Ok(())
    };
    let close_game = |game: &Option<(GameSummaryRecord, usize)>, line: usize| -> Result<(), DatasetError> {
        if let Some((g, n)) = game {
            if *n != g.n_utterances {
                return Err(invalid(
                    line,
                    format!("game {} has {n} utterances, declared {}", g.game_index, g.n_utterances),
                ));
            }
        }
        Ok(())
    };
    let numbered: Vec<(usize, &str)> = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).skip(1).collect();
    for &(i, l) in &numbered {
        let line = i + 1;
        let record: Record = serde_json::from_str(l).expect("parsed above");
        match record {
            Record::Header(_) => unreachable!("rejected by parse"),
            Record::Session(s) => {
                close_game(&game, line)?;
                close_session(&current, games_in_session, line)?;
                game = None;
                if !seen_sessions.insert(s.session_id.clone()) {
                    return Err(invalid(line, format!("duplicate session {}", s.session_id)));
                }
                if s.n_games != GAMES_PER_SESSION || s.map_ids.len() != GAMES_PER_SESSION {
                    return Err(invalid(line, "a session has exactly four games".into()));
                }
                let distinct: HashSet<&String> = s.map_ids.iter().collect();
                if distinct.len() != GAMES_PER_SESSION {
                    return Err(invalid(line, "maps repeat within a session".into()));
                }
                for q in &s.questionnaires {
                    q.responses.validate().map_err(|e| invalid(line, e.to_string()))?;
                }
                summary.sessions += 1;
                games_in_session = 0;
                current = Some(s);
            }
            Record::Game(g) => {
                close_game(&game, line)?;
                let s = current.as_ref().ok_or_else(|| invalid(line, "game before any session".into()))?;
                if g.session_id != s.session_id || g.condition != s.condition {
                    return Err(invalid(line, "game does not belong to the current session".into()));
                }
                if g.game_index != games_in_session {
                    return Err(invalid(line, format!("expected game {games_in_session}, got {}", g.game_index)));
                }
                if g.human_role != ROLE_SEQUENCE[g.game_index] || g.map_id != s.map_ids[g.game_index] {
                    return Err(invalid(line, "role or map out of sequence".into()));
                }
                if g.duration_s > (TIME_LIMIT_MS / 1000) as f64
                    || (g.completed && g.duration_s >= (TIME_LIMIT_MS / 1000) as f64)
                {
                    return Err(invalid(line, format!("duration {} breaks the time limit", g.duration_s)));
                }
                if g.trace.is_empty() || g.trace.windows(2).any(|w| !w[0].cell.is_adjacent(w[1].cell)) {
                    return Err(invalid(line, "trace is empty or not 4-connected".into()));
                }
                if g.trace.windows(2).any(|w| w[0].t_ms > w[1].t_ms) || g.ended_at_ms < g.started_at_ms {
                    return Err(invalid(line, "timestamps go backwards".into()));
                }
                summary.games += 1;
                games_in_session += 1;
                game = Some((g, 0));
            }
            Record::Utterance(u) => {
                let (g, n) = game.as_mut().ok_or_else(|| invalid(line, "utterance before any game".into()))?;
                if u.session_id != g.session_id || u.game_index != g.game_index || u.index != *n {
                    return Err(invalid(line, "utterance out of order".into()));
                }
                if u.speaker == Speaker::Bot && u.raw_text.is_none() {
                    return Err(invalid(line, "bot utterance without raw text".into()));
                }
                let utt = u.to_utterance().map_err(|m| invalid(line, m))?;
                if crate::textproc::label_utterance(&utt.tokens) != u.label {
                    return Err(invalid(line, "label disagrees with token tags".into()));
                }
                *n += 1;
                summary.utterances += 1;
            }
        }
    }
    let end = numbered.last().map_or(1, |&(i, _)| i + 1);
    close_game(&game, end)?;
    close_session(&current, games_in_session, end)?;
    Ok(summary)
}

/// Session count per condition.
pub fn conditions(ds: &Dataset) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in &ds.sessions {
        *out.entry(s.condition.clone()).or_insert(0) += 1;
    }
    out
}
