//! Route similarity, dialog composition, code-switching and entrainment
//! measures, and the per-condition report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Cell, GameRecord, Session};
use crate::strategy::StrategyConfig;
use crate::textproc::{classify_mixed_np, decided_counts, Label, Language, NpClass, Speaker, Utterance};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot score an empty path")]
    EmptyPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteScore {
    pub raw_dtw_cost: u64,
    /// Raw cost divided by the number of cells in the target path.
    pub normalized: f64,
}

fn manhattan(a: Cell, b: Cell) -> u64 {
    a.manhattan(b)
}

/// Boundary-aligned DTW with Manhattan cell cost.
pub fn dtw_raw(a: &[Cell], b: &[Cell]) -> Result<u64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    let m = b.len();
    let mut prev = vec![u64::MAX; m];
    let mut cur = vec![0u64; m];
    for (i, &ai) in a.iter().enumerate() {
        for j in 0..m {
            let d = manhattan(ai, b[j]);
            let best = if i == 0 && j == 0 {
                0
            } else {
                let up = prev[j];
                let left = if j > 0 { cur[j - 1] } else { u64::MAX };
                let diag = if j > 0 { prev[j - 1] } else { u64::MAX };
                up.min(left).min(diag)
            };
            cur[j] = best + d;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

pub fn dtw_route_distance(trace: &[Cell], target: &[Cell]) -> Result<RouteScore, MetricsError> {
    let raw = dtw_raw(trace, target)?;
    Ok(RouteScore { raw_dtw_cost: raw, normalized: raw as f64 / target.len() as f64 })
}

/// Minimum cost over every monotone alignment from (0,0) to the last pair,
/// found by walking each alignment explicitly. Exponential; for testing.
pub fn dtw_oracle(a: &[Cell], b: &[Cell]) -> Result<u64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    fn walk(a: &[Cell], b: &[Cell], i: usize, j: usize, acc: u64, best: &mut u64) {
        let acc = acc + manhattan(a[i], b[j]);
        let (last_i, last_j) = (i + 1 == a.len(), j + 1 == b.len());
        if last_i && last_j {
            *best = (*best).min(acc);
            return;
        }
        if !last_i {
            walk(a, b, i + 1, j, acc, best);
        }
        if !last_j {
            walk(a, b, i, j + 1, acc, best);
        }
        if !last_i && !last_j {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = u64::MAX;
    walk(a, b, 0, 0, 0, &mut best);
    Ok(best)
}

/// Every self-avoiding 4-connected path on a `width` x `height` grid with
/// 1 to `max_len` cells. Single cells count as paths.
pub fn simple_paths(width: u32, height: u32, max_len: usize) -> Vec<Vec<Cell>> {
    fn extend(path: &mut Vec<Cell>, width: u32, height: u32, max_len: usize, out: &mut Vec<Vec<Cell>>) {
        out.push(path.clone());
        if path.len() == max_len {
            return;
        }
        let last = *path.last().expect("non-empty path");
        for step in crate::game::Step::ALL {
            if let Some(next) = last.step(step, width, height) {
                if !path.contains(&next) {
                    path.push(next);
                    extend(path, width, height, max_len, out);
                    path.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    if max_len == 0 {
        return out;
    }
    for y in 0..height {
        for x in 0..width {
            extend(&mut vec![Cell::new(x, y)], width, height, max_len, &mut out);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepMismatch {
    pub a: Vec<Cell>,
    pub b: Vec<Cell>,
    pub fast: u64,
    pub oracle: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SweepResult {
    pub paths: usize,
    /// Ordered pairs checked.
    pub pairs: u64,
    pub mismatches: Vec<SweepMismatch>,
    /// Paths whose distance to themselves is not 0.
    pub nonzero_identity: usize,
}

impl SweepResult {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.nonzero_identity == 0
    }
}

/// Compares `dtw_route_distance` with `dtw_oracle` on every ordered pair of
/// `paths`. The oracle runs once per unordered pair; the fast path is checked
/// in both orders against it.
pub fn dtw_sweep(paths: &[Vec<Cell>]) -> SweepResult {
    let mut r = SweepResult { paths: paths.len(), ..SweepResult::default() };
    let fast = |a: &[Cell], b: &[Cell]| dtw_route_distance(a, b).map(|s| s.raw_dtw_cost).unwrap_or(u64::MAX);
    for (i, a) in paths.iter().enumerate() {
        if fast(a, a) != 0 {
            r.nonzero_identity += 1;
        }
        for b in &paths[i..] {
            let oracle = dtw_oracle(a, b).unwrap_or(u64::MAX);
            for (x, y) in [(a, b), (b, a)] {
                let f = fast(x, y);
                if f != oracle {
                    r.mismatches.push(SweepMismatch { a: x.clone(), b: y.clone(), fast: f, oracle });
                }
            }
            r.pairs += if std::ptr::eq(a, b) { 1 } else { 2 };
        }
    }
    r
}

/// A count-based rate; 0 when nothing is eligible. Kept as counts so rates
/// pool exactly across dialogs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn value(self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }
}

impl std::ops::Add for Ratio {
    type Output = Ratio;

    fn add(self, other: Ratio) -> Ratio {
        Ratio { numerator: self.numerator + other.numerator, denominator: self.denominator + other.denominator }
    }
}

/// How a mixed or none utterance between two unilingual ones is treated when
/// counting inter-sentential switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    /// It breaks adjacency: neither neighbouring pair is eligible.
    #[default]
    Strict,
    /// It is skipped and its unilingual neighbours are compared.
    SkipNonUnilingual,
}

impl std::str::FromStr for Adjacency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Adjacency::Strict),
            "skip" | "skip_non_unilingual" => Ok(Adjacency::SkipNonUnilingual),
            _ => Err(format!("unknown adjacency rule {s:?}")),
        }
    }
}

/// Language changes between consecutive unilingual utterances of `speaker`.
pub fn intersentential_cs_rate(transcript: &[Utterance], speaker: Speaker, adjacency: Adjacency) -> Ratio {
    let labels: Vec<Option<Language>> = transcript
        .iter()
        .filter(|u| u.speaker == speaker)
        .map(|u| u.label.language())
        .filter(|l| adjacency == Adjacency::Strict || l.is_some())
        .collect();
    let mut ratio = Ratio::default();
    for w in labels.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            ratio.denominator += 1;
            ratio.numerator += u64::from(a != b);
        }
    }
    ratio
}

/// Human utterances whose label matches the latest preceding bot label.
/// Mixed matches anything; a none label on either side is ineligible.
pub fn entrainment_rate(transcript: &[Utterance]) -> Ratio {
    let mut last_bot: Option<Label> = None;
    let mut ratio = Ratio::default();
    for u in transcript {
        match u.speaker {
            Speaker::Bot => last_bot = Some(u.label),
            Speaker::Human => {
                let Some(bot) = last_bot else { continue };
                if bot == Label::None || u.label == Label::None {
                    continue;
                }
                ratio.denominator += 1;
                let matched = bot == u.label || bot == Label::Mixed || u.label == Label::Mixed;
                ratio.numerator += u64::from(matched);
            }
        }
    }
    ratio
}

/// Majority language of the decided tokens; `None` on a tie.
pub fn matrix_language(utterance: &Utterance) -> Option<Language> {
    let counts = decided_counts(&utterance.tokens);
    let es = counts.get(&Language::Spanish).copied().unwrap_or(0);
    let en = counts.get(&Language::English).copied().unwrap_or(0);
    match es.cmp(&en) {
        std::cmp::Ordering::Greater => Some(Language::Spanish),
        std::cmp::Ordering::Less => Some(Language::English),
        std::cmp::Ordering::Equal => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NpCounts {
    pub congruent_masc: u64,
    pub congruent_fem: u64,
    pub incongruent_masc: u64,
    pub incongruent_fem: u64,
    /// Counted apart and left out of the four-way table.
    pub ambiguous: u64,
}

impl NpCounts {
    pub fn get(&self, class: NpClass) -> u64 {
        match class {
            NpClass::CongruentMasc => self.congruent_masc,
            NpClass::CongruentFem => self.congruent_fem,
            NpClass::IncongruentMasc => self.incongruent_masc,
            NpClass::IncongruentFem => self.incongruent_fem,
            NpClass::Ambiguous => self.ambiguous,
        }
    }

    fn slot(&mut self, class: NpClass) -> &mut u64 {
        match class {
            NpClass::CongruentMasc => &mut self.congruent_masc,
            NpClass::CongruentFem => &mut self.congruent_fem,
            NpClass::IncongruentMasc => &mut self.incongruent_masc,
            NpClass::IncongruentFem => &mut self.incongruent_fem,
            NpClass::Ambiguous => &mut self.ambiguous,
        }
    }

    pub fn add_class(&mut self, class: NpClass) {
        *self.slot(class) += 1;
    }

    pub fn merge(&mut self, other: &NpCounts) {
        for class in NpClass::ALL {
            *self.slot(class) += other.get(class);
        }
    }

    /// Sum of the four gender classes, ambiguous excluded.
    pub fn total(&self) -> u64 {
        self.congruent_masc + self.congruent_fem + self.incongruent_masc + self.incongruent_fem
    }
}

/// Mixed NPs in utterances with Spanish matrix language. `speaker = None`
/// counts both speakers.
pub fn tabulate_np_switches<'a>(
    utterances: impl IntoIterator<Item = &'a Utterance>,
    speaker: Option<Speaker>,
) -> NpCounts {
    let mut counts = NpCounts::default();
    for u in utterances {
        if speaker.is_some_and(|s| s != u.speaker) || matrix_language(u) != Some(Language::Spanish) {
            continue;
        }
        for span in &u.noun_phrases {
            if let Ok(class) = classify_mixed_np(span) {
                counts.add_class(class);
            }
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub english: u64,
    pub spanish: u64,
    pub mixed: u64,
    pub none: u64,
}

impl LabelCounts {
    fn add(&mut self, label: Label) {
        match label {
            Label::English => self.english += 1,
            Label::Spanish => self.spanish += 1,
            Label::Mixed => self.mixed += 1,
            Label::None => self.none += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.english + self.spanish + self.mixed + self.none
    }
}

/// Composition and code-switching measures over the human side of a set of
/// dialogs (one dialog per game).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogStats {
    pub n_dialogs: u64,
    pub n_utterances: u64,
    pub n_tokens: u64,
    pub mean_utterances_per_dialog: f64,
    pub mean_tokens_per_utterance: f64,
    pub labels: LabelCounts,
    pub pct_english: f64,
    pub pct_spanish: f64,
    pub pct_mixed: f64,
    pub pct_none: f64,
    pub intersentential_cs: Ratio,
    pub entrainment: Ratio,
    pub np_counts: NpCounts,
}

fn frac(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn dialog_stats<'a>(dialogs: impl IntoIterator<Item = &'a [Utterance]>, adjacency: Adjacency) -> DialogStats {
    let mut n_dialogs = 0;
    let mut n_tokens = 0;
    let mut labels = LabelCounts::default();
    let mut intersentential = Ratio::default();
    let mut entrainment = Ratio::default();
    let mut np_counts = NpCounts::default();
    for dialog in dialogs {
        n_dialogs += 1;
        for u in dialog.iter().filter(|u| u.speaker == Speaker::Human) {
            labels.add(u.label);
            n_tokens += u.content_token_count() as u64;
        }
        intersentential = intersentential + intersentential_cs_rate(dialog, Speaker::Human, adjacency);
        entrainment = entrainment + entrainment_rate(dialog);
        np_counts.merge(&tabulate_np_switches(dialog, Some(Speaker::Human)));
    }
    let n = labels.total();
    DialogStats {
        n_dialogs,
        n_utterances: n,
        n_tokens,
        mean_utterances_per_dialog: frac(n, n_dialogs),
        mean_tokens_per_utterance: frac(n_tokens, n),
        labels,
        pct_english: frac(labels.english, n),
        pct_spanish: frac(labels.spanish, n),
        pct_mixed: frac(labels.mixed, n),
        pct_none: frac(labels.none, n),
        intersentential_cs: intersentential,
        entrainment,
        np_counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameScore {
    pub map_id: String,
    pub duration_s: f64,
    pub completed: bool,
    pub route: RouteScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub stats: DialogStats,
    pub games: Vec<GameScore>,
}

fn game_score(g: &GameRecord) -> Option<GameScore> {
    Some(GameScore { map_id: g.map_id.clone(), duration_s: g.duration_s()?, completed: g.completed, route: g.route? })
}

/// Measures for one session; games still in progress have no score.
pub fn session_report(session: &Session, adjacency: Adjacency) -> SessionReport {
    SessionReport {
        stats: dialog_stats(session.games.iter().map(|g| g.transcript.as_slice()), adjacency),
        games: session.games.iter().filter_map(game_score).collect(),
    }
}

/// Self-report means; `None` when no responses were collected.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuestionnaireMeans {
    pub n_responses: u64,
    pub task_enjoy: Option<f64>,
    pub task_success: Option<f64>,
    pub difficult_comm: Option<f64>,
    pub difficult_ins: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    pub n_games: u64,
    pub n_completed: u64,
    pub pct_complete: f64,
    pub mean_game_time_s: f64,
    pub mean_route_distance: f64,
    pub questionnaire: QuestionnaireMeans,
}

/// Everything the report needs about one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionInput {
    pub condition_name: String,
    pub condition: StrategyConfig,
    /// Transcripts in game order.
    pub dialogs: Vec<Vec<Utterance>>,
    pub games: Vec<GameScore>,
    pub questionnaires: Vec<crate::game::Questionnaire>,
}

impl SessionInput {
    pub fn from_session(session: &Session) -> Self {
        SessionInput {
            condition_name: session.condition_name.clone(),
            condition: session.condition.clone(),
            dialogs: session.games.iter().map(|g| g.transcript.clone()).collect(),
            games: session.games.iter().filter_map(game_score).collect(),
            questionnaires: session.questionnaires.iter().map(|q| q.responses.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub n_sessions: u64,
    pub dialog: DialogStats,
    pub task: TaskStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub adjacency: Adjacency,
    pub conditions: Vec<ConditionReport>,
    pub overall: ConditionReport,
}

fn condition_report(name: &str, sessions: &[&SessionInput], adjacency: Adjacency) -> ConditionReport {
    let dialog = dialog_stats(sessions.iter().flat_map(|s| s.dialogs.iter().map(Vec::as_slice)), adjacency);
    let games: Vec<&GameScore> = sessions.iter().flat_map(|s| s.games.iter()).collect();
    let n_games = games.len() as u64;
    let n_completed = games.iter().filter(|g| g.completed).count() as u64;
    let mean = |f: &dyn Fn(&GameScore) -> f64| {
        if games.is_empty() {
            0.0
        } else {
            games.iter().map(|g| f(g)).sum::<f64>() / games.len() as f64
        }
    };
    let responses: Vec<_> = sessions.iter().flat_map(|s| s.questionnaires.iter()).collect();
    let q_mean = |f: &dyn Fn(&crate::game::Questionnaire) -> u32| {
        (!responses.is_empty()).then(|| responses.iter().map(|q| f64::from(f(q))).sum::<f64>() / responses.len() as f64)
    };
    ConditionReport {
        condition: name.to_string(),
        n_sessions: sessions.len() as u64,
        dialog,
        task: TaskStats {
            n_games,
            n_completed,
            pct_complete: frac(n_completed, n_games),
            mean_game_time_s: mean(&|g| g.duration_s),
            mean_route_distance: mean(&|g| g.route.normalized),
            questionnaire: QuestionnaireMeans {
                n_responses: responses.len() as u64,
                task_enjoy: q_mean(&|q| q.task_enjoy),
                task_success: q_mean(&|q| q.task_success),
                difficult_comm: q_mean(&|q| q.difficult_comm),
                difficult_ins: q_mean(&|q| q.difficult_ins),
            },
        },
    }
}

/// Pools sessions by condition name. Columns are ordered by strategy kind,
/// then name.
pub fn build_report(sessions: &[SessionInput], adjacency: Adjacency) -> Report {
    let mut groups: BTreeMap<(crate::strategy::StrategyKind, &str), Vec<&SessionInput>> = BTreeMap::new();
    for s in sessions {
        groups.entry((s.condition.kind, s.condition_name.as_str())).or_default().push(s);
    }
    let conditions = groups.iter().map(|((_, name), members)| condition_report(name, members, adjacency)).collect();
    let all: Vec<&SessionInput> = sessions.iter().collect();
    Report { adjacency, conditions, overall: condition_report("all", &all, adjacency) }
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

fn np_cell(counts: &NpCounts, class: NpClass) -> String {
    let n = counts.get(class);
    if class == NpClass::Ambiguous || counts.total() == 0 {
        n.to_string()
    } else {
        format!("{n} ({:.2})", n as f64 / counts.total() as f64)
    }
}

impl Report {
    /// Metric rows by condition columns, with a pooled last column.
    pub fn to_table(&self) -> String {
        let cols: Vec<&ConditionReport> = self.conditions.iter().chain(std::iter::once(&self.overall)).collect();
        type Row = (&'static str, &'static str, Box<dyn Fn(&ConditionReport) -> String>);
        let rows: Vec<Row> = vec![
            ("Dialog Metrics", "# Dialogs", Box::new(|c| c.dialog.n_dialogs.to_string())),
            ("", "Mean # Utts/Dialog", Box::new(|c| format!("{:.1}", c.dialog.mean_utterances_per_dialog))),
            ("", "Mean # Tokens/Utt", Box::new(|c| format!("{:.1}", c.dialog.mean_tokens_per_utterance))),
            ("", "% Eng", Box::new(|c| pct(c.dialog.pct_english))),
            ("", "% Spa", Box::new(|c| pct(c.dialog.pct_spanish))),
            ("", "% Mixed", Box::new(|c| pct(c.dialog.pct_mixed))),
            ("", "% None", Box::new(|c| pct(c.dialog.pct_none))),
            ("", "% IS", Box::new(|c| pct(c.dialog.intersentential_cs.value()))),
            ("", "% IS Entrainment", Box::new(|c| pct(c.dialog.entrainment.value()))),
            ("Task Success Metrics", "% Games Complete", Box::new(|c| pct(c.task.pct_complete))),
            ("", "Game Time (sec.)", Box::new(|c| format!("{:.1}", c.task.mean_game_time_s))),
            ("", "Route Distance", Box::new(|c| format!("{:.2}", c.task.mean_route_distance))),
            ("", "Task Enjoy (0-100)", Box::new(|c| opt(c.task.questionnaire.task_enjoy))),
            ("", "Task Success (0-100)", Box::new(|c| opt(c.task.questionnaire.task_success))),
            ("", "Diff. Comm. (0-100)", Box::new(|c| opt(c.task.questionnaire.difficult_comm))),
            ("", "Diff. Ins. (0-100)", Box::new(|c| opt(c.task.questionnaire.difficult_ins))),
            ("NP Switches", "# Fem. Cong. NPs", Box::new(|c| np_cell(&c.dialog.np_counts, NpClass::CongruentFem))),
            ("", "# Fem. Incong. NPs", Box::new(|c| np_cell(&c.dialog.np_counts, NpClass::IncongruentFem))),
            ("", "# Masc. Cong. NPs", Box::new(|c| np_cell(&c.dialog.np_counts, NpClass::CongruentMasc))),
            ("", "# Masc. Incong. NPs", Box::new(|c| np_cell(&c.dialog.np_counts, NpClass::IncongruentMasc))),
            ("", "Total # Mixed NPs", Box::new(|c| c.dialog.np_counts.total().to_string())),
            ("", "# Ambiguous NPs (excluded)", Box::new(|c| np_cell(&c.dialog.np_counts, NpClass::Ambiguous))),
        ];
        let mut grid: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
        let mut header = vec![String::new(), String::new()];
        header.extend(cols.iter().map(|c| c.condition.clone()));
        grid.push(header);
        for (group, name, f) in &rows {
            let mut line = vec![group.to_string(), name.to_string()];
            line.extend(cols.iter().map(|c| f(c)));
            grid.push(line);
        }
        let widths: Vec<usize> =
            (0..grid[0].len()).map(|i| grid.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &grid {
            let mut line = String::new();
            for (i, cell) in row.iter().enumerate() {
                let pad = widths[i] - cell.chars().count();
                if i < 2 {
                    line.push_str(cell);
                    line.push_str(&" ".repeat(pad));
                } else {
                    line.push_str(&" ".repeat(pad));
                    line.push_str(cell);
                }
                if i + 1 < row.len() {
                    line.push_str("  ");
                }
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
