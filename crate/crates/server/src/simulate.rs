//! Headless sessions: a [`SimulatedParticipant`] plays against the bot
//! through the same manager, engine and store the network service uses.
//! Time is virtual, so a full four-game session runs in milliseconds.

use std::sync::Arc;

use mapcs_core::agent::{ParticipantStyle, SimulatedParticipant};
use mapcs_core::game::{Role, Stage, Step, TIME_LIMIT_MS};
use mapcs_core::textproc::Speaker;

use crate::condition::ConditionSet;
use crate::engine::Services;
use crate::event::Command;
use crate::manager::{CreateRequest, ManagerConfig, ManagerError, ManualClock, SessionManager};
use crate::store::Store;
use crate::wire::{Body, WireMessage};

/// Virtual time for one avatar step.
pub const STEP_MS: u64 = 1_000;
/// Virtual time between a chat message and the bot reply.
pub const BOT_LATENCY_MS: u64 = 2_000;
/// Bot messages in a row without a usable direction before the participant
/// gives up and lets the clock run out.
const MAX_IDLE_TURNS: usize = 3;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub conditions: ConditionSet,
    pub sessions_per_condition: usize,
    pub seed: u64,
    pub style: ParticipantStyle,
    pub questionnaire_mode: mapcs_core::game::QuestionnaireMode,
}

impl SimulationConfig {
    pub fn new(conditions: ConditionSet, sessions_per_condition: usize, seed: u64) -> Self {
        SimulationConfig {
            conditions,
            sessions_per_condition,
            seed,
            style: ParticipantStyle::default(),
            questionnaire_mode: Default::default(),
        }
    }
}

pub struct Simulation {
    pub manager: SessionManager,
    pub session_ids: Vec<String>,
}

impl Simulation {
    pub fn export(&self) -> String {
        self.manager.export(None)
    }
}

/// Runs every configured condition `sessions_per_condition` times, in
/// condition order, optionally logging to `store`.
pub fn run(cfg: &SimulationConfig, store: Option<Store>) -> Result<Simulation, ManagerError> {
    let svc = Arc::new(Services::scripted(cfg.seed));
    run_with(cfg, svc, store)
}

pub fn run_with(cfg: &SimulationConfig, svc: Arc<Services>, store: Option<Store>) -> Result<Simulation, ManagerError> {
    let clock = Arc::new(ManualClock::new(0));
    let manager = SessionManager::new(
        svc,
        ManagerConfig {
            conditions: cfg.conditions.clone(),
            seed: cfg.seed,
            questionnaire_mode: cfg.questionnaire_mode,
            bot_latency_ms: BOT_LATENCY_MS,
        },
        clock.clone(),
        store,
    )?;
    let mut session_ids = Vec::new();
    for condition in cfg.conditions.iter() {
        for _ in 0..cfg.sessions_per_condition {
            clock.set(0);
            let created = manager.create_session(&CreateRequest::named(&condition.name))?;
            let lexicon = manager.services().analyzer.lexicon_arc();
            let participant = SimulatedParticipant::new(&created.session_id, cfg.seed, cfg.style, lexicon);
            Driver { manager: &manager, clock: &clock, id: &created.session_id, participant, client_seq: 0, t: 0 }
                .run()?;
            session_ids.push(created.session_id);
        }
    }
    Ok(Simulation { manager, session_ids })
}

struct Driver<'a> {
    manager: &'a SessionManager,
    clock: &'a ManualClock,
    id: &'a str,
    participant: SimulatedParticipant,
    client_seq: u64,
    /// Virtual ms since session creation.
    t: u64,
}

impl Driver<'_> {
    fn send(&mut self, command: Command) -> Result<Vec<WireMessage>, ManagerError> {
        self.clock.set(self.t);
        self.client_seq += 1;
        self.manager.command(self.id, self.client_seq, command)
    }

    fn chat(&mut self, text: String) -> Result<Option<String>, ManagerError> {
        let out = self.send(Command::Chat { text })?;
        self.t += BOT_LATENCY_MS;
        Ok(out.into_iter().rev().find_map(|m| match m.body {
            Body::ChatRecv(c) if c.speaker == Speaker::Bot => Some(c.text),
            _ => None,
        }))
    }

    /// Lets the clock run out on the current game.
    fn time_out(&mut self, deadline: u64) -> Result<(), ManagerError> {
        self.t = self.t.max(deadline);
        self.clock.set(self.t);
        self.manager.tick(self.id)?;
        Ok(())
    }

    fn stage(&self) -> Result<Stage, ManagerError> {
        Ok(self.manager.session(self.id)?.stage)
    }

    fn run(mut self) -> Result<(), ManagerError> {
        loop {
            match self.stage()? {
                Stage::Export => return Ok(()),
                Stage::Questionnaire(_) => {
                    self.t += self.participant.typing_delay_ms();
                    let responses = self.participant.questionnaire();
                    self.send(Command::Questionnaire { responses })?;
                }
                Stage::Game(i) => self.game(i)?,
            }
        }
    }

    fn game(&mut self, i: usize) -> Result<(), ManagerError> {
        let session = self.manager.session(self.id)?;
        let game = &session.games[i];
        let deadline = game.started_at_ms + TIME_LIMIT_MS;
        let map = self.manager.services().maps.get(&game.map_id).expect("session maps exist").clone();
        let still_playing = |d: &Self| -> Result<bool, ManagerError> { Ok(d.stage()? == Stage::Game(i)) };
        match game.human_role {
            Role::Instructor => {
                let mut segment = 0;
                loop {
                    self.t += self.participant.typing_delay_ms();
                    if self.t >= deadline {
                        return self.time_out(deadline);
                    }
                    let Some(ins) = self.participant.instruction(&map, segment) else {
                        return self.time_out(deadline);
                    };
                    let before = self.manager.session(self.id)?.games[i].avatar_trace.len();
                    self.chat(ins.text)?;
                    if !still_playing(self)? {
                        return Ok(());
                    }
                    let moved = self.manager.session(self.id)?.games[i].avatar_trace.len() > before;
                    if ins.advances && moved {
                        segment += 1;
                    }
                }
            }
            Role::Navigator => {
                let mut text = self.participant.opening();
                let mut idle = 0;
                loop {
                    self.t += self.participant.typing_delay_ms();
                    if self.t >= deadline {
                        return self.time_out(deadline);
                    }
                    let reply = self.chat(text)?;
                    if !still_playing(self)? {
                        return Ok(());
                    }
                    let steps: Vec<Step> = reply.as_deref().map(|r| self.participant.follow(r)).unwrap_or_default();
                    idle = if steps.is_empty() { idle + 1 } else { 0 };
                    if idle >= MAX_IDLE_TURNS {
                        return self.time_out(deadline);
                    }
                    for step in steps {
                        self.t += STEP_MS;
                        if self.t >= deadline {
                            return self.time_out(deadline);
                        }
                        self.send(Command::Move { step })?;
                        if !still_playing(self)? {
                            return Ok(());
                        }
                    }
                    let avatar = self.manager.session(self.id)?.games[i].avatar();
                    text = self.participant.acknowledgement(&map, avatar);
                }
            }
        }
    }
}
