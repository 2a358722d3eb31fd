//! Deterministic session state machine. Given the same events it produces
//! the same session and the same outgoing messages, which is what makes the
//! event log replayable.

use std::sync::Arc;

use mapcs_core::agent::{
    bot_turn, strategy_turn, AgentBackend, AgentError, BotRequest, LanguageDirective, PromptTemplate, ScriptedBot,
    TurnInput, WelcomeMessages,
};
use mapcs_core::game::{GameError, MapSet, MoveOutcome, Role, Session, Stage, TurnMeta};
use mapcs_core::lexicon::Lexicon;
use mapcs_core::strategy::{session_rng, DialogState, PhraseTableTranslator, StrategyContext, Translator};
use mapcs_core::textproc::{Speaker, TextAnalyzer, Utterance};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::event::{BotReplyRecord, Command, CommandEvent, Created, Event};
use crate::wire::{Body, ChatRecv, GameOver, GameState, SessionConfig, WireMessage};

/// Shared, read-only collaborators of every session.
pub struct Services {
    pub analyzer: Arc<TextAnalyzer>,
    pub translator: Arc<dyn Translator>,
    pub backend: Arc<dyn AgentBackend>,
    pub template: PromptTemplate,
    pub welcome: WelcomeMessages,
    pub maps: MapSet,
}

impl Services {
    /// Bundled data, phrase-table translator and the scripted bot.
    pub fn scripted(bot_seed: u64) -> Self {
        let analyzer = Arc::new(TextAnalyzer::bundled());
        let lexicon: Arc<Lexicon> = analyzer.lexicon_arc();
        Services {
            translator: Arc::new(PhraseTableTranslator::bundled(lexicon.clone())),
            backend: Arc::new(ScriptedBot::new(bot_seed, lexicon.clone())),
            template: PromptTemplate::bundled(),
            welcome: WelcomeMessages::bundled(),
            maps: MapSet::bundled(&lexicon),
            analyzer,
        }
    }

    fn context(&self) -> StrategyContext<'_> {
        StrategyContext { analyzer: &self.analyzer, translator: self.translator.as_ref() }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid condition: {0}")]
    Condition(String),
}

/// Result of one command.
#[derive(Debug, Default)]
pub struct Handled {
    pub messages: Vec<WireMessage>,
    pub bot: Option<BotReplyRecord>,
}

pub struct Engine {
    created: Created,
    session: Session,
    dialog: DialogState,
    rng: ChaCha8Rng,
    /// Backend turns in the current game.
    game_turn: usize,
    last_client_seq: u64,
    last_t_ms: u64,
    out_seq: u64,
}

impl Engine {
    /// Initializes game 1 and emits the configuration, the first game state
    /// and the strategy-processed welcome message.
    pub fn start(created: Created, svc: &Services) -> Result<(Self, Vec<WireMessage>), EngineError> {
        created.condition.validate().map_err(|e| EngineError::Condition(e.to_string()))?;
        let session = Session::new(
            created.session_id.clone(),
            created.condition_name.clone(),
            created.condition.clone(),
            created.map_ids.clone(),
            &svc.maps,
            created.questionnaire_mode,
            0,
        )?;
        let rng = session_rng(&created.session_id, created.condition.rng_seed);
        let mut engine = Engine {
            created,
            session,
            dialog: DialogState::new(),
            rng,
            game_turn: 0,
            last_client_seq: 0,
            last_t_ms: 0,
            out_seq: 0,
        };
        let mut out = Vec::new();
        engine.emit(&mut out, Body::SessionConfig(SessionConfig::for_session(&engine.session)));
        engine.emit_state(&mut out, svc);
        let welcome = svc.welcome.pick(&mut engine.rng).to_string();
        let turn = strategy_turn(&welcome, &engine.dialog, &engine.session.condition, &svc.context(), &mut engine.rng);
        let u = svc.analyzer.utterance(Speaker::Bot, &turn.final_text, 0);
        engine.push(&mut out, u, Some(turn.raw), turn.degraded);
        Ok((engine, out))
    }

    pub fn created(&self) -> &Created {
        &self.created
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn last_t_ms(&self) -> u64 {
        self.last_t_ms
    }

    pub fn last_seq(&self) -> u64 {
        self.out_seq
    }

    /// Whether a tick at `t_ms` would close the current game.
    pub fn timeout_due(&self, t_ms: u64) -> bool {
        self.session.current_game().is_some_and(|g| g.is_active() && t_ms >= g.deadline_ms())
    }

    /// Applies one command. A chat command in a game triggers a bot turn on
    /// `backend`; `reply_at` maps the command time to the reply time.
    pub fn handle(
        &mut self,
        ev: &CommandEvent,
        svc: &Services,
        backend: &dyn AgentBackend,
        reply_at: &mut dyn FnMut(u64) -> u64,
    ) -> Handled {
        let mut out = Vec::new();
        let t = ev.t_ms.max(self.last_t_ms);
        self.last_t_ms = t;
        if ev.client_seq != 0 {
            if ev.client_seq <= self.last_client_seq {
                self.emit(
                    &mut out,
                    Body::error(format!("stale seq {} (last {})", ev.client_seq, self.last_client_seq)),
                );
                return Handled { messages: out, bot: None };
            }
            self.last_client_seq = ev.client_seq;
        }
        self.check_timeout(&mut out, svc, t);
        let mut bot = None;
        match &ev.command {
            Command::Tick => {}
            Command::Invalid { message } => self.emit(&mut out, Body::error(format!("invalid message: {message}"))),
            Command::Chat { text } => match self.chat_error(text) {
                Some(err) => self.emit(&mut out, Body::error(err)),
                None => bot = Some(self.chat(&mut out, svc, backend, reply_at, text, t)),
            },
            Command::Move { step } => self.human_move(&mut out, svc, *step, t),
            Command::Questionnaire { responses } => {
                match self.session.submit_questionnaire(responses.clone(), &svc.maps, t) {
                    Ok(_) => {
                        self.game_turn = 0;
                        self.emit_state(&mut out, svc);
                    }
                    Err(e) => self.emit(&mut out, Body::error(e.to_string())),
                }
            }
        }
        Handled { messages: out, bot }
    }

    fn chat_error(&self, text: &str) -> Option<String> {
        if text.trim().is_empty() {
            return Some("empty message".into());
        }
        match self.session.current_game() {
            Some(g) if g.is_active() => None,
            _ => Some(format!("no active game (stage: {})", self.session.stage)),
        }
    }

    fn chat(
        &mut self,
        out: &mut Vec<WireMessage>,
        svc: &Services,
        backend: &dyn AgentBackend,
        reply_at: &mut dyn FnMut(u64) -> u64,
        text: &str,
        t: u64,
    ) -> BotReplyRecord {
        let human = svc.analyzer.utterance(Speaker::Human, text, t);
        self.push(out, human, None, false);
        let Stage::Game(gi) = self.session.stage else { unreachable!("chat_error checked the stage") };
        let map = svc.maps.get(&self.session.map_ids[gi]).expect("session maps exist");
        let game = &self.session.games[gi];
        let input = TurnInput {
            role: game.human_role.other(),
            directive: LanguageDirective::for_condition(&self.session.condition),
            map,
            transcript: &game.transcript,
            latest_human: text,
            avatar: game.avatar(),
            game_turn: self.game_turn,
            session_id: &self.session.session_id,
            session_turn: self.dialog.bot_utterance_count() as u64,
        };
        let turn = bot_turn(
            backend,
            &svc.template,
            &input,
            &self.dialog,
            &self.session.condition,
            &svc.context(),
            &mut self.rng,
        );
        self.game_turn += 1;
        let t_bot = reply_at(t).max(t);
        self.last_t_ms = t_bot;
        let u = svc.analyzer.utterance(Speaker::Bot, &turn.final_text, t_bot);
        self.push(out, u, Some(turn.raw.clone()), turn.degraded);
        if !turn.moves.is_empty() {
            let game = &mut self.session.games[gi];
            for step in &turn.moves {
                match game.move_avatar(map, *step, t_bot) {
                    Ok(MoveOutcome::Completed(_)) | Err(_) => break,
                    Ok(_) => {}
                }
            }
            self.emit_state(out, svc);
            self.after_close(out, svc, t_bot);
        }
        BotReplyRecord {
            t_ms: t_bot,
            raw: turn.raw,
            backend_ok: !turn.backend_failed,
            final_text: turn.final_text,
            moves: turn.moves,
            degraded: turn.degraded,
        }
    }

    fn human_move(&mut self, out: &mut Vec<WireMessage>, svc: &Services, step: mapcs_core::game::Step, t: u64) {
        let Some(map) = self.session.current_map(&svc.maps) else {
            self.emit(out, Body::error(format!("no active game (stage: {})", self.session.stage)));
            return;
        };
        let game = self.session.current_game_mut().expect("stage is a game");
        if game.human_role != Role::Navigator {
            self.emit(out, Body::error("the participant is the instructor in this game"));
            return;
        }
        match game.move_avatar(map, step, t) {
            Ok(MoveOutcome::Blocked) => {
                self.emit(out, Body::error(format!("move {} leaves the map", step.as_str())));
                self.emit_state(out, svc);
            }
            Ok(_) => {
                self.emit_state(out, svc);
                self.after_close(out, svc, t);
            }
            Err(e) => self.emit(out, Body::error(e.to_string())),
        }
    }

    fn check_timeout(&mut self, out: &mut Vec<WireMessage>, svc: &Services, t: u64) {
        let Some(map) = self.session.current_map(&svc.maps) else {
            return;
        };
        let game = self.session.current_game_mut().expect("stage is a game");
        if game.check_timeout(map, t) {
            self.after_close(out, svc, t);
        }
    }

    /// Reports a game that just closed and moves the session on.
    fn after_close(&mut self, out: &mut Vec<WireMessage>, svc: &Services, t: u64) {
        let Stage::Game(i) = self.session.stage else { return };
        let g = &self.session.games[i];
        if g.is_active() {
            return;
        }
        let over = GameOver {
            game_index: i,
            completed: g.completed,
            duration_s: g.duration_s().expect("closed game has a duration"),
            route: g.route.expect("closed game has a route score"),
        };
        self.emit(out, Body::GameOver(over));
        self.session.advance(&svc.maps, t).expect("closed game can advance");
        // The dialog history spans the session; only the per-game turn
        // counter resets.
        self.game_turn = 0;
        self.emit_state(out, svc);
    }

    fn push(&mut self, out: &mut Vec<WireMessage>, u: Utterance, raw: Option<String>, degraded: bool) {
        let gi = match self.session.stage {
            Stage::Game(i) => i,
            _ => self.session.games.len() - 1,
        };
        let game = &mut self.session.games[gi];
        let recv = ChatRecv::new(gi, game.transcript.len(), &u, raw.as_deref(), degraded);
        game.push_utterance(u.clone(), TurnMeta { raw_text: raw, degraded });
        self.dialog.push(u);
        self.emit(out, Body::ChatRecv(recv));
    }

    fn emit_state(&mut self, out: &mut Vec<WireMessage>, svc: &Services) {
        let state = GameState::for_session(&self.session, self.session.current_map(&svc.maps));
        self.emit(out, Body::GameState(state));
    }

    fn emit(&mut self, out: &mut Vec<WireMessage>, body: Body) {
        self.out_seq += 1;
        out.push(WireMessage { session_id: self.session.session_id.clone(), seq: self.out_seq, body });
    }
}

/// Backend that returns a recorded reply, used for replay.
pub struct RecordedBackend<'a> {
    pub record: &'a BotReplyRecord,
}

impl AgentBackend for RecordedBackend<'_> {
    fn generate(&self, _req: &BotRequest<'_>) -> Result<String, AgentError> {
        if self.record.backend_ok {
            Ok(self.record.raw.clone())
        } else {
            Err(AgentError::Backend("recorded failure".into()))
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("event log is empty or does not start with a created event")]
    MissingCreated,
    #[error("event {index}: {source}")]
    Engine { index: usize, source: EngineError },
    #[error("event {index}: chat produced a bot turn but the log has no reply")]
    MissingReply { index: usize },
    #[error("event {index}: unexpected bot reply")]
    UnexpectedReply { index: usize },
    #[error("event {index}: replayed bot reply differs: logged {logged:?}, replayed {replayed:?}")]
    Mismatch { index: usize, logged: Box<BotReplyRecord>, replayed: Box<BotReplyRecord> },
}

pub struct Replayed {
    pub engine: Engine,
    /// Every server message the session emitted, in order.
    pub messages: Vec<WireMessage>,
}

/// Rebuilds a session from its log, re-running the strategy on every
/// recorded backend reply and checking the outcome.
pub fn replay(events: &[Event], svc: &Services) -> Result<Replayed, ReplayError> {
    let Some(Event::Created(created)) = events.first() else {
        return Err(ReplayError::MissingCreated);
    };
    let (mut engine, mut messages) =
        Engine::start(created.clone(), svc).map_err(|source| ReplayError::Engine { index: 0, source })?;
    let mut i = 1;
    while i < events.len() {
        match &events[i] {
            Event::Created(_) => return Err(ReplayError::UnexpectedReply { index: i }),
            Event::BotReply(_) => return Err(ReplayError::UnexpectedReply { index: i }),
            Event::Command(cmd) => {
                let recorded = match events.get(i + 1) {
                    Some(Event::BotReply(r)) => Some(r),
                    _ => None,
                };
                let handled = match recorded {
                    Some(r) => {
                        let backend = RecordedBackend { record: r };
                        engine.handle(cmd, svc, &backend, &mut |_| r.t_ms)
                    }
                    None => engine.handle(cmd, svc, &NoBackend, &mut |t| t),
                };
                messages.extend(handled.messages);
                match (recorded, handled.bot) {
                    (Some(logged), Some(replayed)) => {
                        if *logged != replayed {
                            return Err(ReplayError::Mismatch {
                                index: i + 1,
                                logged: Box::new(logged.clone()),
                                replayed: Box::new(replayed),
                            });
                        }
                        i += 2;
                    }
                    (None, Some(_)) => return Err(ReplayError::MissingReply { index: i }),
                    (Some(_), None) => return Err(ReplayError::UnexpectedReply { index: i + 1 }),
                    (None, None) => i += 1,
                }
            }
        }
    }
    Ok(Replayed { engine, messages })
}

struct NoBackend;

impl AgentBackend for NoBackend {
    fn generate(&self, _req: &BotRequest<'_>) -> Result<String, AgentError> {
        Err(AgentError::Backend("no recorded reply".into()))
    }
}
