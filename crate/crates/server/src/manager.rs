//! Owns all live sessions. Each session sits behind its own lock, so its
//! commands run strictly one at a time while distinct sessions proceed
//! independently.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use mapcs_core::dataset::write_dataset;
use mapcs_core::game::{QuestionnaireMode, Session, GAMES_PER_SESSION};
use mapcs_core::strategy::{session_rng, StrategyConfig};
use parking_lot::{Mutex, RwLock};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::condition::{Condition, ConditionError, ConditionSet};
use crate::engine::{replay, Engine, EngineError, ReplayError, Services};
use crate::event::{Command, CommandEvent, Created, Event};
use crate::store::{IndexEntry, Store, StoreError};
use crate::wire::WireMessage;

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock moved by hand, for simulations and tests.
#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(ms: u64) -> Self {
        ManualClock(AtomicU64::new(ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("bad session token")]
    Unauthorized,
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("replaying session {id}: {source}")]
    Replay { id: String, source: ReplayError },
}

#[derive(Debug, Clone)]
pub struct ManagerConfig {
    pub conditions: ConditionSet,
    pub seed: u64,
    pub questionnaire_mode: QuestionnaireMode,
    /// Added to the clock when stamping bot replies.
    pub bot_latency_ms: u64,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            conditions: ConditionSet::default(),
            seed: 0,
            questionnaire_mode: QuestionnaireMode::Once,
            bot_latency_ms: 0,
        }
    }
}

/// Body of a session creation request. `condition` is a configured name or
/// `auto` (the default); `strategy` supplies an inline configuration named
/// by `condition` or by its kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub condition: Option<String>,
    #[serde(default)]
    pub strategy: Option<StrategyConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub questionnaire_mode: Option<QuestionnaireMode>,
}

impl CreateRequest {
    pub fn named(condition: &str) -> Self {
        CreateRequest { condition: Some(condition.to_string()), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub token: String,
    pub condition: String,
    pub strategy: StrategyConfig,
}

struct Handle {
    engine: Engine,
    events: Vec<Event>,
    messages: Vec<WireMessage>,
    tx: broadcast::Sender<WireMessage>,
}

impl Handle {
    fn new(engine: Engine, events: Vec<Event>, messages: Vec<WireMessage>) -> Self {
        let (tx, _) = broadcast::channel(1024);
        Handle { engine, events, messages, tx }
    }

    fn publish(&mut self, messages: &[WireMessage]) {
        for m in messages {
            let _ = self.tx.send(m.clone());
        }
        self.messages.extend_from_slice(messages);
    }
}

pub struct SessionManager {
    svc: Arc<Services>,
    cfg: ManagerConfig,
    clock: Arc<dyn Clock>,
    store: Option<Store>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Handle>>>>,
    created: Mutex<u64>,
    auto_assigned: AtomicU64,
}

impl SessionManager {
    /// Builds a manager, replaying every session recorded in `store`.
    pub fn new(
        svc: Arc<Services>,
        cfg: ManagerConfig,
        clock: Arc<dyn Clock>,
        store: Option<Store>,
    ) -> Result<Self, ManagerError> {
        let mut sessions = BTreeMap::new();
        let mut auto = 0;
        if let Some(store) = &store {
            for entry in store.index()? {
                let events = store.load(&entry.session_id)?;
                let r = replay(&events, &svc)
                    .map_err(|source| ManagerError::Replay { id: entry.session_id.clone(), source })?;
                if cfg.conditions.get(&entry.condition).is_ok() {
                    auto += 1;
                }
                sessions.insert(entry.session_id, Arc::new(Mutex::new(Handle::new(r.engine, events, r.messages))));
            }
        }
        let created = sessions.len() as u64;
        Ok(SessionManager {
            svc,
            cfg,
            clock,
            store,
            sessions: RwLock::new(sessions),
            created: Mutex::new(created),
            auto_assigned: AtomicU64::new(auto),
        })
    }

    /// In-memory manager on the scripted stack.
    pub fn in_memory(svc: Arc<Services>, cfg: ManagerConfig, clock: Arc<dyn Clock>) -> Self {
        Self::new(svc, cfg, clock, None).expect("no store to replay")
    }

    pub fn services(&self) -> &Services {
        &self.svc
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<Handle>>, ManagerError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ManagerError::UnknownSession(id.to_string()))
    }

    fn resolve(&self, req: &CreateRequest) -> Result<Condition, ManagerError> {
        let name = req.condition.as_deref().unwrap_or("auto");
        match (&req.strategy, name) {
            (Some(_), "auto") if req.condition.is_some() => {
                Err(ManagerError::BadRequest("an inline strategy needs a name, not auto".into()))
            }
            (Some(cfg), _) => {
                cfg.validate().map_err(|e| ManagerError::BadRequest(e.to_string()))?;
                let name = req.condition.clone().unwrap_or_else(|| cfg.kind.name().to_string());
                Ok(Condition::new(name, cfg.clone()))
            }
            (None, "auto") => {
                let n = self.auto_assigned.fetch_add(1, Ordering::SeqCst);
                Ok(self.cfg.conditions.round_robin(n).clone())
            }
            (None, name) => Ok(self.cfg.conditions.get(name)?.clone()),
        }
    }

    /// Starts a session: condition assignment, four maps in seeded order,
    /// the role sequence and the welcome message.
    pub fn create_session(&self, req: &CreateRequest) -> Result<CreateResponse, ManagerError> {
        let mut condition = self.resolve(req)?;
        let mut created_count = self.created.lock();
        let n = *created_count;
        let session_id = derive_id(self.cfg.seed, n);
        let seed = match (req.seed, condition.config.rng_seed) {
            (Some(s), _) => s,
            (None, 0) => derive_seed(self.cfg.seed, n),
            (None, s) => s,
        };
        condition.config.rng_seed = seed;
        let mut map_ids = self.svc.maps.ids();
        if map_ids.len() < GAMES_PER_SESSION {
            return Err(ManagerError::BadRequest(format!(
                "{} maps configured, {GAMES_PER_SESSION} needed",
                map_ids.len()
            )));
        }
        map_ids.shuffle(&mut session_rng(&format!("{session_id}/maps"), seed));
        map_ids.truncate(GAMES_PER_SESSION);
        let created = Created {
            session_id: session_id.clone(),
            token: uuid::Uuid::new_v4().simple().to_string(),
            created_at_ms: self.clock.now_ms(),
            condition_name: condition.name.clone(),
            condition: condition.config.clone(),
            map_ids,
            questionnaire_mode: req.questionnaire_mode.unwrap_or(self.cfg.questionnaire_mode),
        };
        let (engine, messages) = Engine::start(created.clone(), &self.svc)?;
        let events = vec![Event::Created(created.clone())];
        if let Some(store) = &self.store {
            store.append(&session_id, &events)?;
            store.register(&IndexEntry {
                session_id: session_id.clone(),
                condition: condition.name.clone(),
                created_at_ms: created.created_at_ms,
            })?;
        }
        let handle = Handle::new(engine, events, messages);
        self.sessions.write().insert(session_id.clone(), Arc::new(Mutex::new(handle)));
        *created_count += 1;
        log::info!("session {session_id} created with condition {}", condition.name);
        Ok(CreateResponse { session_id, token: created.token, condition: condition.name, strategy: condition.config })
    }

    pub fn authorize(&self, id: &str, token: &str) -> Result<(), ManagerError> {
        let h = self.handle(id)?;
        let ok = h.lock().engine.created().token == token;
        if ok {
            Ok(())
        } else {
            Err(ManagerError::Unauthorized)
        }
    }

    /// Logs and applies one command, returning the messages it produced.
    /// They are also broadcast to subscribers.
    pub fn command(&self, id: &str, client_seq: u64, command: Command) -> Result<Vec<WireMessage>, ManagerError> {
        let h = self.handle(id)?;
        let mut h = h.lock();
        let base = h.engine.created().created_at_ms;
        let ev = CommandEvent {
            t_ms: self.clock.now_ms().saturating_sub(base).max(h.engine.last_t_ms()),
            client_seq,
            command,
        };
        if matches!(ev.command, Command::Tick) && !h.engine.timeout_due(ev.t_ms) {
            return Ok(Vec::new());
        }
        let mut logged = vec![Event::Command(ev.clone())];
        if let Some(store) = &self.store {
            store.append(id, &logged)?;
        }
        let clock = self.clock.clone();
        let latency = self.cfg.bot_latency_ms;
        let svc = self.svc.clone();
        let handled = h
            .engine
            .handle(&ev, &svc, svc.backend.as_ref(), &mut |t| (clock.now_ms().saturating_sub(base) + latency).max(t));
        if let Some(bot) = handled.bot {
            let reply = Event::BotReply(bot);
            if let Some(store) = &self.store {
                store.append(id, std::slice::from_ref(&reply))?;
            }
            logged.push(reply);
        }
        h.events.extend(logged);
        h.publish(&handled.messages);
        Ok(handled.messages)
    }

    /// Closes the session's current game if its time is up.
    pub fn tick(&self, id: &str) -> Result<Vec<WireMessage>, ManagerError> {
        self.command(id, 0, Command::Tick)
    }

    pub fn tick_all(&self) -> Vec<WireMessage> {
        let ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        let mut out = Vec::new();
        for id in ids {
            match self.tick(&id) {
                Ok(m) => out.extend(m),
                Err(e) => log::error!("tick for {id} failed: {e}"),
            }
        }
        out
    }

    /// Messages after `last_seq` plus a receiver for later ones, taken
    /// atomically.
    pub fn subscribe(
        &self,
        id: &str,
        last_seq: u64,
    ) -> Result<(Vec<WireMessage>, broadcast::Receiver<WireMessage>), ManagerError> {
        let h = self.handle(id)?;
        let h = h.lock();
        let backlog = h.messages.iter().filter(|m| m.seq > last_seq).cloned().collect();
        Ok((backlog, h.tx.subscribe()))
    }

    pub fn messages_since(&self, id: &str, last_seq: u64) -> Result<Vec<WireMessage>, ManagerError> {
        Ok(self.subscribe(id, last_seq)?.0)
    }

    pub fn session(&self, id: &str) -> Result<Session, ManagerError> {
        Ok(self.handle(id)?.lock().engine.session().clone())
    }

    pub fn events(&self, id: &str) -> Result<Vec<Event>, ManagerError> {
        Ok(self.handle(id)?.lock().events.clone())
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().keys().cloned().collect()
    }

    /// Dataset of finished sessions, optionally restricted to one
    /// condition.
    pub fn export(&self, condition: Option<&str>) -> String {
        let sessions: Vec<Session> = self
            .session_ids()
            .iter()
            .filter_map(|id| self.session(id).ok())
            .filter(|s| condition.is_none_or(|c| s.condition_name == c))
            .collect();
        write_dataset(&sessions)
    }
}

fn digest(seed: u64, n: u64, tag: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag);
    h.update(seed.to_le_bytes());
    h.update(n.to_le_bytes());
    h.finalize().into()
}

fn derive_id(seed: u64, n: u64) -> String {
    hex::encode(&digest(seed, n, b"session")[..8])
}

fn derive_seed(seed: u64, n: u64) -> u64 {
    u64::from_le_bytes(digest(seed, n, b"seed")[..8].try_into().expect("8 bytes"))
}
