//! Loaders for the hand-annotated fixtures in the workspace `fixtures/`
//! directory. Shared by path with the acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;

use mapcs_core::game::Questionnaire;
use mapcs_core::metrics::{GameScore, RouteScore, SessionInput};
use mapcs_core::strategy::{StrategyConfig, StrategyKind};
use mapcs_core::textproc::{Label, Speaker, TextAnalyzer};
use serde::Deserialize;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    let path = fixture_path(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn tsv_rows(name: &str) -> Vec<(String, String)> {
    read_fixture(name)
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap_or_else(|| panic!("{name}: no tab in {l:?}"));
            (a.to_string(), b.to_string())
        })
        .collect()
}

/// `(expected label, text)` rows of the LID fixture.
pub fn lid_rows() -> Vec<(Label, String)> {
    tsv_rows("lid_200.tsv")
        .into_iter()
        .map(|(label, text)| {
            let label = match label.as_str() {
                "english" => Label::English,
                "spanish" => Label::Spanish,
                "mixed" => Label::Mixed,
                "none" => Label::None,
                other => panic!("bad label {other}"),
            };
            (label, text)
        })
        .collect()
}

/// `(text, expected classes)` rows of the NP fixture; `spanish` marks a
/// determiner with a Spanish noun.
pub fn np_rows() -> Vec<(String, Vec<String>)> {
    tsv_rows("np_50.tsv")
        .into_iter()
        .map(|(text, classes)| {
            let classes = if classes == "-" { Vec::new() } else { classes.split(',').map(str::to_string).collect() };
            (text, classes)
        })
        .collect()
}

/// Classes of every simple NP in `text`, in the NP fixture's notation.
pub fn np_classes(a: &TextAnalyzer, text: &str) -> Vec<String> {
    a.simple_nps(&a.tokens(text))
        .iter()
        .map(|span| match mapcs_core::textproc::classify_mixed_np(span) {
            Ok(class) => class.as_str().to_string(),
            Err(_) => "spanish".to_string(),
        })
        .collect()
}

#[derive(Deserialize)]
struct FixtureFile {
    sessions: Vec<FixtureSession>,
}

#[derive(Deserialize)]
struct FixtureSession {
    condition: StrategyKind,
    games: Vec<FixtureGame>,
    questionnaires: Vec<[u32; 4]>,
}

#[derive(Deserialize)]
struct FixtureGame {
    completed: bool,
    duration_s: f64,
    route: f64,
    transcript: Vec<(Speaker, String)>,
}

/// The two sessions of the metrics fixture, labeled by `a`.
pub fn metrics_sessions(a: &TextAnalyzer) -> Vec<SessionInput> {
    let file: FixtureFile = serde_json::from_str(&read_fixture("metrics_2sessions.json")).unwrap();
    file.sessions
        .into_iter()
        .map(|s| SessionInput {
            condition_name: s.condition.name().to_string(),
            condition: StrategyConfig::new(s.condition),
            dialogs: s
                .games
                .iter()
                .map(|g| {
                    g.transcript
                        .iter()
                        .enumerate()
                        .map(|(i, (speaker, text))| a.utterance(*speaker, text, i as u64 * 1000))
                        .collect()
                })
                .collect(),
            games: s
                .games
                .iter()
                .enumerate()
                .map(|(i, g)| GameScore {
                    map_id: format!("map{i}"),
                    duration_s: g.duration_s,
                    completed: g.completed,
                    route: RouteScore { raw_dtw_cost: 0, normalized: g.route },
                })
                .collect(),
            questionnaires: s
                .questionnaires
                .iter()
                .map(|q| Questionnaire {
                    task_enjoy: q[0],
                    task_success: q[1],
                    difficult_comm: q[2],
                    difficult_ins: q[3],
                    language_background: Default::default(),
                })
                .collect(),
        })
        .collect()
}

pub const METRICS_GOLDEN: &str = "metrics_2sessions_report.txt";
