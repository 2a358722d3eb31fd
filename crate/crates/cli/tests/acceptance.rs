//! Acceptance suite: one PASS/FAIL line per criterion, each with its
//! runtime bound. Exits nonzero when any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mapcs_cli::{simulate as cli_simulate, SimulateArgs};
use mapcs_core::agent::ParticipantStyle;
use mapcs_core::dataset::{validate_dataset, write_dataset, Dataset};
use mapcs_core::game::{Role, Session, ROLE_SEQUENCE, TIME_LIMIT_MS};
use mapcs_core::metrics::{
    build_report, dtw_route_distance, dtw_sweep, entrainment_rate, intersentential_cs_rate, simple_paths,
    tabulate_np_switches, Adjacency, NpCounts, Ratio,
};
use mapcs_core::strategy::check::check_dialog;
use mapcs_core::strategy::{
    alt_random, ins_transform, session_rng, Action, PhraseTableTranslator, StrategyContext, StrategyKind,
};
use mapcs_core::textproc::{Label, Speaker, TextAnalyzer, Utterance};
use mapcs_server::simulate::{run, run_with, SimulationConfig};
use mapcs_server::store::Store;
use mapcs_server::{replay, ConditionSet, ManagerConfig, Services, SessionManager, SystemClock};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 8] = [
        ("1 insertional golden transforms", Duration::from_secs(1), insertional_golden),
        ("2 DTW oracle equivalence", Duration::from_secs(60), dtw_oracle_sweep),
        ("3 strategy invariants over simulation", Duration::from_secs(120), strategy_invariants),
        ("4 random strategy statistics", Duration::from_secs(30), random_statistics),
        ("5 LID labeling fixture", Duration::from_secs(30), lid_fixture),
        ("6 metrics fixtures", Duration::from_secs(30), metrics_fixtures),
        ("7 determinism and replay", Duration::from_secs(120), determinism_and_replay),
        ("8 end-to-end headless session", Duration::from_secs(60), headless_session),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, bound, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > bound => Err(format!("{detail}; took {elapsed:.2?}, bound {bound:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail}; {elapsed:.2?} < {bound:?})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn insertional_golden() -> Result<String, String> {
    let a = TextAnalyzer::bundled();
    let cases = [
        (StrategyKind::InsCongruent, "el tenedor", "el fork"),
        (StrategyKind::InsCongruent, "la cuchara", "la spoon"),
        (StrategyKind::InsFemIncongruent, "la cuchara", "el spoon"),
        (StrategyKind::InsFemIncongruent, "el tenedor", "el tenedor"),
        (StrategyKind::InsMascIncongruent, "el tenedor", "la fork"),
        (StrategyKind::InsMascIncongruent, "la cuchara", "la cuchara"),
        (StrategyKind::InsCongruent, "Pasa el tenedor y la cuchara.", "Pasa el fork y la spoon."),
        (StrategyKind::InsFemIncongruent, "Pasa el tenedor y la cuchara.", "Pasa el tenedor y el spoon."),
        (StrategyKind::InsMascIncongruent, "Pasa el tenedor y la cuchara.", "Pasa la fork y la cuchara."),
    ];
    for (kind, input, want) in cases {
        let (got, _) = ins_transform(kind, input, &a);
        ensure!(got == want, "{}: {input:?} gave {got:?}, want {want:?}", kind.name());
    }
    Ok(format!("{} byte-exact cases", cases.len()))
}

fn dtw_oracle_sweep() -> Result<String, String> {
    let paths = simple_paths(4, 4, 6);
    let r = dtw_sweep(&paths);
    ensure!(r.mismatches.is_empty(), "{} mismatches, first {:?}", r.mismatches.len(), r.mismatches[0]);
    ensure!(r.nonzero_identity == 0, "{} paths score nonzero against themselves", r.nonzero_identity);
    let same = paths.iter().all(|p| dtw_route_distance(p, p).map(|s| s.raw_dtw_cost) == Ok(0));
    ensure!(same, "identical paths must score 0");
    Ok(format!("{} simple paths, {} ordered pairs", r.paths, r.pairs))
}

fn bot_turns(s: &Session) -> Vec<Utterance> {
    s.games.iter().flat_map(|g| g.transcript.iter().filter(|u| u.speaker == Speaker::Bot).cloned()).collect()
}

fn strategy_invariants() -> Result<String, String> {
    let sim = run(&SimulationConfig::new(ConditionSet::default(), 10, 2024), None).map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    for kind in [
        StrategyKind::InsMascIncongruent,
        StrategyKind::InsFemIncongruent,
        StrategyKind::AltShortContext,
        StrategyKind::AltAlignment,
        StrategyKind::AltAdversarial,
    ] {
        let sessions: Vec<Session> = sim
            .session_ids
            .iter()
            .map(|id| sim.manager.session(id).unwrap())
            .filter(|s| s.condition.kind == kind)
            .collect();
        ensure!(sessions.len() == 10, "{}: {} sessions", kind.name(), sessions.len());
        let mut eligible = 0;
        for s in &sessions {
            ensure!(kind != StrategyKind::AltShortContext || s.condition.k == 3, "short context must use k=3");
            let dialog: Vec<Utterance> = s.games.iter().flat_map(|g| g.transcript.iter().cloned()).collect();
            let r = check_dialog(&s.condition, &dialog);
            ensure!(r.violations.is_empty(), "{} {}: {:?}", kind.name(), s.session_id, r.violations[0]);
            eligible += r.eligible;
            let np = tabulate_np_switches(&bot_turns(s), Some(Speaker::Bot));
            match kind {
                StrategyKind::InsMascIncongruent => {
                    ensure!(np.incongruent_fem == 0, "incongruent_fem NP in bot output")
                }
                StrategyKind::InsFemIncongruent => {
                    ensure!(np.incongruent_masc == 0, "incongruent_masc NP in bot output")
                }
                _ => {}
            }
        }
        ensure!(eligible > 0, "{}: no eligible bot turns", kind.name());
        details.push(format!("{} {eligible}/{eligible}", kind.name()));
    }
    Ok(format!("10 sessions each; eligible bot turns satisfied: {}", details.join(", ")))
}

fn random_statistics() -> Result<String, String> {
    let a = TextAnalyzer::bundled();
    let translator = PhraseTableTranslator::bundled(a.lexicon_arc());
    let ctx = StrategyContext { analyzer: &a, translator: &translator };
    let unilingual = [
        "Go down two squares.",
        "Turn right at the tree.",
        "I go left.",
        "Ve abajo dos casillas.",
        "Gira a la derecha en el árbol.",
        "Voy abajo dos casillas.",
    ];
    let mixed = ["Voy down dos casillas, ok?", "Gira right en el árbol.", "Pasa la spoon."];
    for m in mixed {
        ensure!(a.label(m) == Label::Mixed, "{m:?} is not mixed");
    }
    let mut rng = session_rng("acceptance/random", 4);
    let (mut switched, mut mixed_seen) = (0u32, 0u32);
    for i in 0..10_000 {
        let candidate = unilingual[i % unilingual.len()];
        let out = alt_random(candidate, 0.5, &ctx, &mut rng);
        ensure!(!out.degraded, "translation failed for {candidate:?}");
        if let Action::Translated { .. } = out.action {
            ensure!(out.text != candidate, "switch left {candidate:?} unchanged");
            switched += 1;
        }
        if i % 5 == 0 {
            let m = mixed[i % mixed.len()];
            let out = alt_random(m, 0.5, &ctx, &mut rng);
            ensure!(out.text == m && out.action == Action::Unchanged, "mixed candidate {m:?} altered");
            mixed_seen += 1;
        }
    }
    let fraction = f64::from(switched) / 10_000.0;
    ensure!((0.48..=0.52).contains(&fraction), "switch fraction {fraction}");
    Ok(format!("switch fraction {fraction:.4} over 10000 unilingual candidates; {mixed_seen} mixed kept"))
}

fn lid_fixture() -> Result<String, String> {
    let a = TextAnalyzer::bundled();
    let rows = support::lid_rows();
    ensure!(rows.len() == 200, "fixture has {} rows", rows.len());
    let wrong: Vec<&String> = rows.iter().filter(|(want, t)| a.label(t) != *want).map(|(_, t)| t).collect();
    ensure!(wrong.is_empty(), "{} disagreements, first {:?}", wrong.len(), wrong[0]);
    ensure!(a.label("ok") == Label::None && a.label("no") == Label::None, "ok/no must label none");
    let np = support::np_rows();
    for (text, want) in &np {
        ensure!(&support::np_classes(&a, text) == want, "NP fixture row {text:?}");
    }
    Ok(format!("200/200 labels agree; {} NP rows agree", np.len()))
}

fn ratio(numerator: u64, denominator: u64) -> Ratio {
    Ratio { numerator, denominator }
}

fn metrics_fixtures() -> Result<String, String> {
    let a = TextAnalyzer::bundled();
    let sessions = support::metrics_sessions(&a);
    let pooled = |i: usize, f: &dyn Fn(&[Utterance]) -> Ratio| {
        sessions[i].dialogs.iter().map(|d| f(d)).fold(Ratio::default(), |acc, r| acc + r)
    };
    let is = |d: &[Utterance]| intersentential_cs_rate(d, Speaker::Human, Adjacency::Strict);
    ensure!(pooled(0, &is) == ratio(1, 1) && pooled(1, &is) == ratio(2, 3), "inter-sentential CS");
    let ent = |d: &[Utterance]| entrainment_rate(d);
    ensure!(pooled(0, &ent) == ratio(4, 8) && pooled(1, &ent) == ratio(5, 6), "entrainment");
    let np = tabulate_np_switches(sessions[0].dialogs.iter().flatten(), Some(Speaker::Human));
    let want = NpCounts { congruent_masc: 2, congruent_fem: 1, incongruent_masc: 2, incongruent_fem: 1, ambiguous: 0 };
    ensure!(np == want, "NP tabulation {np:?}");
    let report = build_report(&sessions, Adjacency::Strict);
    ensure!(report.conditions[0].task.pct_complete == 0.75, "% games complete");
    ensure!(report.overall.dialog.entrainment == ratio(9, 14), "pooled entrainment");
    let golden = support::read_fixture(support::METRICS_GOLDEN);
    ensure!(report.to_table() == golden, "report differs from {}", support::METRICS_GOLDEN);
    Ok("IS 1/1 and 2/3, entrainment 4/8 and 5/6, 75% complete, NP table, golden report".into())
}

fn simulate_bytes(args: SimulateArgs) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    cli_simulate(&args, &mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn determinism_and_replay() -> Result<String, String> {
    let golden_args = || SimulateArgs {
        conditions: "alt_alignment ins_masc_incongruent".into(),
        sessions: 1,
        seed: 3,
        out: None,
        data_dir: None,
        questionnaire_mode: Default::default(),
        check: false,
    };
    let golden = support::read_fixture("golden_export.jsonl");
    ensure!(simulate_bytes(golden_args())? == golden.as_bytes(), "export differs from golden_export.jsonl");

    let cfg = SimulationConfig::new(ConditionSet::default(), 2, 77);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let sim = run(&cfg, Some(store)).map_err(|e| e.to_string())?;
    let export = sim.export();
    ensure!(run(&cfg, None).map_err(|e| e.to_string())?.export() == export, "re-run export differs");

    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let svc = Services::scripted(0);
    let mut replayed = Vec::new();
    for id in &sim.session_ids {
        let events = store.load(id).map_err(|e| e.to_string())?;
        let r = replay(&events, &svc).map_err(|e| format!("{id}: {e}"))?;
        let live = sim.manager.session(id).map_err(|e| e.to_string())?;
        let same = serde_json::to_string(r.engine.session()).unwrap() == serde_json::to_string(&live).unwrap();
        ensure!(same, "{id}: replayed session differs");
        ensure!(r.messages == sim.manager.messages_since(id, 0).unwrap(), "{id}: outbox differs");
        replayed.push(r.engine.session().clone());
    }
    ensure!(write_dataset(&replayed) == export, "export rebuilt from logs differs");

    let restarted = SessionManager::new(
        Arc::new(Services::scripted(77)),
        ManagerConfig { conditions: cfg.conditions.clone(), seed: 77, ..Default::default() },
        Arc::new(SystemClock),
        Some(Store::open(dir.path()).map_err(|e| e.to_string())?),
    )
    .map_err(|e| e.to_string())?;
    ensure!(restarted.export(None) == export, "export after restart differs");

    let report = |src: &str| {
        let inputs = Dataset::parse(src).and_then(|d| d.report_inputs()).unwrap();
        let r = build_report(&inputs, Adjacency::Strict);
        (r.to_table(), r.to_json())
    };
    ensure!(report(&export) == report(&write_dataset(&replayed)), "reports differ");
    Ok(format!("golden export; {} sessions replayed, re-exported and reported identically", replayed.len()))
}

fn headless_session() -> Result<String, String> {
    let svc = Arc::new(Services::scripted(8));
    let check = |sim: &mapcs_server::simulate::Simulation| -> Result<Vec<f64>, String> {
        ensure!(sim.session_ids.len() == 1, "one session expected");
        let s = sim.manager.session(&sim.session_ids[0]).map_err(|e| e.to_string())?;
        ensure!(s.is_finished(), "session did not finish");
        let roles: Vec<Role> = s.games.iter().map(|g| g.human_role).collect();
        ensure!(roles == ROLE_SEQUENCE, "roles {roles:?}");
        let mut maps = s.map_ids.clone();
        maps.sort();
        maps.dedup();
        ensure!(maps.len() == 4, "maps {:?}", s.map_ids);
        let mut durations = Vec::new();
        for g in &s.games {
            let d = g.duration_s().ok_or("game left open")?;
            let cap = TIME_LIMIT_MS as f64 / 1000.0;
            ensure!(d.total_cmp(&cap).is_le(), "game ran {d} s");
            ensure!(g.completed || d == 420.0, "unfinished game closed before the cap");
            durations.push(d);
        }
        let summary = validate_dataset(&sim.export()).map_err(|e| e.to_string())?;
        ensure!(summary.sessions == 1 && summary.games == 4, "dataset summary {summary:?}");
        Ok(durations)
    };
    let cfg = SimulationConfig::new(ConditionSet::parse_list("alt_alignment").unwrap(), 1, 8);
    let normal = check(&run_with(&cfg, svc.clone(), None).map_err(|e| e.to_string())?)?;

    // A participant who never gives directions runs both instructor games into the cap.
    let mut silent = cfg.clone();
    silent.style =
        ParticipantStyle { spanish: 0.0, english: 0.0, mixed: 0.0, none: 1.0, ..ParticipantStyle::default() };
    let capped = check(&run_with(&silent, svc, None).map_err(|e| e.to_string())?)?;
    ensure!(capped[0] == 420.0 && capped[2] == 420.0, "instructor games not capped: {capped:?}");
    Ok(format!("roles I,N,I,N on 4 maps; game times {normal:?} s; capped run {capped:?} s; schema-valid export"))
}
