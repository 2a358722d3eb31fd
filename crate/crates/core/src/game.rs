//! Map Task game model: maps, avatar movement, clock and session structure.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Gender, Lexicon};
use crate::metrics::{dtw_route_distance, RouteScore};
use crate::strategy::StrategyConfig;
use crate::textproc::Utterance;

/// Seven minutes per game.
pub const TIME_LIMIT_MS: u64 = 420_000;
pub const GAMES_PER_SESSION: usize = 4;
/// Human role in each of the four games.
pub const ROLE_SEQUENCE: [Role; GAMES_PER_SESSION] =
    [Role::Instructor, Role::Navigator, Role::Instructor, Role::Navigator];

const BUNDLED_MAPS: [(&str, &str); 4] = [
    ("bosque.toml", include_str!("../maps/bosque.toml")),
    ("puerto.toml", include_str!("../maps/puerto.toml")),
    ("granja.toml", include_str!("../maps/granja.toml")),
    ("pueblo.toml", include_str!("../maps/pueblo.toml")),
];

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("{file}: {reason}")]
    InvalidMap { file: String, reason: String },
    #[error("game is closed")]
    GameClosed,
    #[error("game {0} is still active")]
    GameActive(usize),
    #[error("action not allowed in stage {0}")]
    WrongStage(String),
    #[error("session needs {GAMES_PER_SESSION} distinct maps, got {0:?}")]
    BadMapSelection(Vec<String>),
    #[error("unknown map {0}")]
    UnknownMap(String),
    #[error("questionnaire item {item} = {value} is outside 0..=100")]
    BadResponse { item: String, value: u32 },
    #[error("unknown step {0:?}")]
    UnknownStep(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Grid cell; y grows downward. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u64 {
        u64::from(self.x.abs_diff(other.x)) + u64::from(self.y.abs_diff(other.y))
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }

    /// Neighbour in direction `step`, or `None` when it would leave a
    /// `width`×`height` grid.
    pub fn step(self, step: Step, width: u32, height: u32) -> Option<Cell> {
        let (x, y) = match step {
            Step::Up => (Some(self.x), self.y.checked_sub(1)),
            Step::Down => (Some(self.x), Some(self.y + 1)),
            Step::Left => (self.x.checked_sub(1), Some(self.y)),
            Step::Right => (Some(self.x + 1), Some(self.y)),
        };
        match (x, y) {
            (Some(x), Some(y)) if x < width && y < height => Some(Cell { x, y }),
            _ => None,
        }
    }

    /// The step that leads from `self` to an adjacent `to`.
    pub fn step_to(self, to: Cell) -> Option<Step> {
        Step::ALL.into_iter().find(|&s| self.step(s, u32::MAX, u32::MAX) == Some(to))
    }
}

impl From<[u32; 2]> for Cell {
    fn from([x, y]: [u32; 2]) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for [u32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Up,
    Down,
    Left,
    Right,
}

impl Step {
    pub const ALL: [Step; 4] = [Step::Up, Step::Down, Step::Left, Step::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Up => "up",
            Step::Down => "down",
            Step::Left => "left",
            Step::Right => "right",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Step::ALL.into_iter().find(|step| step.as_str() == s).ok_or_else(|| GameError::UnknownStep(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Instructor,
    Navigator,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Instructor => Role::Navigator,
            Role::Navigator => Role::Instructor,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Instructor => "instructor",
            Role::Navigator => "navigator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmark {
    pub spanish: String,
    pub english: String,
    pub gender: Gender,
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameMap {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub width: u32,
    pub height: u32,
    pub start: Cell,
    pub end: Cell,
    pub target_path: Vec<Cell>,
    #[serde(default)]
    pub landmarks: Vec<Landmark>,
}

impl GameMap {
    /// Parses and validates a map document against `lex`.
    pub fn parse(src: &str, file: &str, lex: &Lexicon) -> Result<Self, GameError> {
        let map: GameMap = toml::from_str(src)
            .map_err(|e| GameError::InvalidMap { file: file.to_string(), reason: e.message().to_string() })?;
        map.validate(lex).map_err(|reason| GameError::InvalidMap { file: file.to_string(), reason })?;
        Ok(map)
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn validate(&self, lex: &Lexicon) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("grid must be nonempty".into());
        }
        if self.start.y != 0 {
            return Err(format!("start {} is not on the top row", self.start));
        }
        match (self.target_path.first(), self.target_path.last()) {
            (Some(&first), Some(&last)) if first == self.start && last == self.end => {}
            _ => return Err("target_path must run from start to end".into()),
        }
        if let Some(c) = self.target_path.iter().find(|&&c| !self.contains(c)) {
            return Err(format!("path cell {c} is outside the grid"));
        }
        if let Some(w) = self.target_path.windows(2).find(|w| !w[0].is_adjacent(w[1])) {
            return Err(format!("path step {} -> {} is not 4-connected", w[0], w[1]));
        }
        let mut seen = HashSet::new();
        for lm in &self.landmarks {
            if !self.contains(lm.cell) {
                return Err(format!("landmark {} at {} is outside the grid", lm.spanish, lm.cell));
            }
            if !seen.insert(lm.cell) {
                return Err(format!("two landmarks share cell {}", lm.cell));
            }
            let entry =
                lex.lookup_es(&lm.spanish).ok_or_else(|| format!("landmark {} is not in the lexicon", lm.spanish))?;
            if entry.spanish_gender != lm.gender {
                return Err(format!("landmark {} gender disagrees with the lexicon", lm.spanish));
            }
            if entry.english_lemma != lm.english {
                return Err(format!(
                    "landmark {} translates to {}, not {}",
                    lm.spanish, entry.english_lemma, lm.english
                ));
            }
        }
        Ok(())
    }

    pub fn landmark_at(&self, c: Cell) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.cell == c)
    }
}

/// The four bundled maps, or maps loaded from a directory of `.toml` files.
#[derive(Debug, Clone)]
pub struct MapSet {
    maps: Vec<GameMap>,
}

impl MapSet {
    pub fn bundled(lex: &Lexicon) -> Self {
        let maps = BUNDLED_MAPS
            .iter()
            .map(|(file, src)| GameMap::parse(src, file, lex).expect("bundled map is valid"))
            .collect();
        MapSet { maps }
    }

    pub fn new(maps: Vec<GameMap>) -> Result<Self, GameError> {
        let ids: Vec<String> = maps.iter().map(|m| m.id.clone()).collect();
        let unique: HashSet<&String> = ids.iter().collect();
        if unique.len() != ids.len() {
            return Err(GameError::BadMapSelection(ids));
        }
        Ok(MapSet { maps })
    }

    /// Loads every `.toml` file in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path, lex: &Lexicon) -> Result<Self, GameError> {
        let io = |e: std::io::Error| GameError::Io { path: dir.display().to_string(), message: e.to_string() };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let mut maps = Vec::new();
        for path in paths {
            let src = std::fs::read_to_string(&path).map_err(io)?;
            maps.push(GameMap::parse(&src, &path.display().to_string(), lex)?);
        }
        Self::new(maps)
    }

    pub fn get(&self, id: &str) -> Option<&GameMap> {
        self.maps.iter().find(|m| m.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.maps.iter().map(|m| m.id.clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &GameMap> {
        self.maps.iter()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracePoint {
    pub cell: Cell,
    pub t_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveOutcome {
    Moved(Cell),
    /// The step would leave the grid; the trace is unchanged.
    Blocked,
    /// The avatar reached the end cell and the clock stopped.
    Completed(Cell),
}

/// Audit data kept beside each transcript entry.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TurnMeta {
    /// Backend output before directive stripping and the strategy; bot
    /// turns only.
    pub raw_text: Option<String>,
    pub degraded: bool,
}

/// One game. Timestamps are milliseconds since session start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub map_id: String,
    pub human_role: Role,
    pub transcript: Vec<Utterance>,
    /// Parallel to `transcript`.
    pub turn_meta: Vec<TurnMeta>,
    pub avatar_trace: Vec<TracePoint>,
    pub started_at_ms: u64,
    pub ended_at_ms: Option<u64>,
    pub completed: bool,
    pub route: Option<RouteScore>,
}

impl GameRecord {
    pub fn new(map: &GameMap, human_role: Role, started_at_ms: u64) -> Self {
        GameRecord {
            map_id: map.id.clone(),
            human_role,
            transcript: Vec::new(),
            turn_meta: Vec::new(),
            avatar_trace: vec![TracePoint { cell: map.start, t_ms: started_at_ms }],
            started_at_ms,
            ended_at_ms: None,
            completed: false,
            route: None,
        }
    }

    pub fn push_utterance(&mut self, utterance: Utterance, meta: TurnMeta) {
        self.transcript.push(utterance);
        self.turn_meta.push(meta);
    }

    pub fn is_active(&self) -> bool {
        self.ended_at_ms.is_none()
    }

    pub fn avatar(&self) -> Cell {
        self.avatar_trace.last().expect("trace starts with the start cell").cell
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.avatar_trace.iter().map(|p| p.cell).collect()
    }

    /// Seconds from start to close, capped at the time limit; `None` while
    /// the game is active.
    pub fn duration_s(&self) -> Option<f64> {
        self.ended_at_ms.map(|end| (end - self.started_at_ms).min(TIME_LIMIT_MS) as f64 / 1000.0)
    }

    pub fn deadline_ms(&self) -> u64 {
        self.started_at_ms + TIME_LIMIT_MS
    }

    fn close(&mut self, map: &GameMap, at_ms: u64, completed: bool) {
        self.ended_at_ms = Some(at_ms);
        self.completed = completed;
        self.route =
            Some(dtw_route_distance(&self.cells(), &map.target_path).expect("trace and target path are nonempty"));
    }

    /// Moves the navigator's avatar one cell. A move at or past the deadline
    /// closes the game as timed out and fails.
    pub fn move_avatar(&mut self, map: &GameMap, step: Step, now_ms: u64) -> Result<MoveOutcome, GameError> {
        if !self.is_active() || self.check_timeout(map, now_ms) {
            return Err(GameError::GameClosed);
        }
        let Some(next) = self.avatar().step(step, map.width, map.height) else {
            return Ok(MoveOutcome::Blocked);
        };
        self.avatar_trace.push(TracePoint { cell: next, t_ms: now_ms });
        if next == map.end {
            self.close(map, now_ms, true);
            return Ok(MoveOutcome::Completed(next));
        }
        Ok(MoveOutcome::Moved(next))
    }

    /// Closes the game as incomplete once the limit has elapsed. Returns
    /// whether this call closed it.
    pub fn check_timeout(&mut self, map: &GameMap, now_ms: u64) -> bool {
        if self.is_active() && now_ms.saturating_sub(self.started_at_ms) >= TIME_LIMIT_MS {
            self.close(map, self.deadline_ms(), false);
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionnaireMode {
    /// One questionnaire after the fourth game.
    #[default]
    Once,
    /// A questionnaire after every game.
    PerGame,
}

impl FromStr for QuestionnaireMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "once" => Ok(QuestionnaireMode::Once),
            "per_game" | "per-game" => Ok(QuestionnaireMode::PerGame),
            _ => Err(format!("unknown questionnaire mode {s:?}")),
        }
    }
}

/// Self-report items on a 0..=100 scale plus free-form language background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub task_enjoy: u32,
    pub task_success: u32,
    pub difficult_comm: u32,
    pub difficult_ins: u32,
    #[serde(default)]
    pub language_background: BTreeMap<String, String>,
}

impl Questionnaire {
    pub fn validate(&self) -> Result<(), GameError> {
        for (item, value) in [
            ("task_enjoy", self.task_enjoy),
            ("task_success", self.task_success),
            ("difficult_comm", self.difficult_comm),
            ("difficult_ins", self.difficult_ins),
        ] {
            if value > 100 {
                return Err(GameError::BadResponse { item: item.to_string(), value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "stage", content = "game")]
pub enum Stage {
    Game(usize),
    /// Questionnaire following the given game.
    Questionnaire(usize),
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Game(i) => write!(f, "game {}", i + 1),
            Stage::Questionnaire(i) => write!(f, "questionnaire after game {}", i + 1),
            Stage::Export => f.write_str("export"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRecord {
    pub after_game: usize,
    pub responses: Questionnaire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub condition_name: String,
    pub condition: StrategyConfig,
    pub map_ids: Vec<String>,
    pub questionnaire_mode: QuestionnaireMode,
    pub games: Vec<GameRecord>,
    pub stage: Stage,
    pub questionnaires: Vec<QuestionnaireRecord>,
}

impl Session {
    /// Starts game 1 at `now_ms` on the first of four distinct maps.
    pub fn new(
        session_id: String,
        condition_name: String,
        condition: StrategyConfig,
        map_ids: Vec<String>,
        maps: &MapSet,
        questionnaire_mode: QuestionnaireMode,
        now_ms: u64,
    ) -> Result<Self, GameError> {
        let distinct: HashSet<&String> = map_ids.iter().collect();
        if map_ids.len() != GAMES_PER_SESSION || distinct.len() != GAMES_PER_SESSION {
            return Err(GameError::BadMapSelection(map_ids));
        }
        if let Some(missing) = map_ids.iter().find(|id| maps.get(id).is_none()) {
            return Err(GameError::UnknownMap(missing.clone()));
        }
        let first = maps.get(&map_ids[0]).expect("checked above");
        Ok(Session {
            session_id,
            condition_name,
            condition,
            games: vec![GameRecord::new(first, ROLE_SEQUENCE[0], now_ms)],
            map_ids,
            questionnaire_mode,
            stage: Stage::Game(0),
            questionnaires: Vec::new(),
        })
    }

    pub fn current_game(&self) -> Option<&GameRecord> {
        match self.stage {
            Stage::Game(i) => self.games.get(i),
            _ => None,
        }
    }

    pub fn current_game_mut(&mut self) -> Option<&mut GameRecord> {
        match self.stage {
            Stage::Game(i) => self.games.get_mut(i),
            _ => None,
        }
    }

    pub fn current_map<'m>(&self, maps: &'m MapSet) -> Option<&'m GameMap> {
        match self.stage {
            Stage::Game(i) => maps.get(&self.map_ids[i]),
            _ => None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.stage == Stage::Export
    }

    /// Moves past a closed game: to its questionnaire (per-game mode, or
    /// after the last game) or straight to the next game.
    pub fn advance(&mut self, maps: &MapSet, now_ms: u64) -> Result<Stage, GameError> {
        let Stage::Game(i) = self.stage else {
            return Err(GameError::WrongStage(self.stage.to_string()));
        };
        if self.games[i].is_active() {
            return Err(GameError::GameActive(i));
        }
        let last = i + 1 == GAMES_PER_SESSION;
        self.stage = if last || self.questionnaire_mode == QuestionnaireMode::PerGame {
            Stage::Questionnaire(i)
        } else {
            self.start_game(i + 1, maps, now_ms)?
        };
        Ok(self.stage)
    }

    pub fn submit_questionnaire(
        &mut self,
        responses: Questionnaire,
        maps: &MapSet,
        now_ms: u64,
    ) -> Result<Stage, GameError> {
        let Stage::Questionnaire(i) = self.stage else {
            return Err(GameError::WrongStage(self.stage.to_string()));
        };
        responses.validate()?;
        self.questionnaires.push(QuestionnaireRecord { after_game: i, responses });
        self.stage = if i + 1 == GAMES_PER_SESSION { Stage::Export } else { self.start_game(i + 1, maps, now_ms)? };
        Ok(self.stage)
    }

    fn start_game(&mut self, i: usize, maps: &MapSet, now_ms: u64) -> Result<Stage, GameError> {
        let map = maps.get(&self.map_ids[i]).ok_or_else(|| GameError::UnknownMap(self.map_ids[i].clone()))?;
        self.games.push(GameRecord::new(map, ROLE_SEQUENCE[i], now_ms));
        Ok(Stage::Game(i))
    }
}
