use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GOLDEN_ARGS: [&str; 7] =
    ["simulate", "--conditions", "alt_alignment ins_masc_incongruent", "--sessions", "1", "--seed", "3"];

fn mapcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapcs")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = fixture(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert!(golden == actual, "{} differs from the fresh output", path.display());
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn determiner_table_dump() {
    let o = mapcs(&["determiners"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        stdout(&o),
        "masculine\tfeminine\tdefinite\tnumber\n\
         el\tla\ttrue\tsingular\n\
         un\tuna\tfalse\tsingular\n\
         los\tlas\ttrue\tplural\n\
         unos\tunas\tfalse\tplural\n"
    );
}

#[test]
fn validate_exit_codes() {
    let o = mapcs(&["validate"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("maps: ok"));

    let dir = tempfile::tempdir().unwrap();
    let bad_map = "id = \"x\"\nwidth = 3\nheight = 3\nstart = [0, 0]\nend = [2, 2]\n\
                   target_path = [[0, 0], [2, 2]]\nlandmarks = []\n";
    std::fs::write(dir.path().join("x.toml"), bad_map).unwrap();
    let o = mapcs(&["validate", "--maps", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("not 4-connected"), "{}", stdout(&o));

    let nouns = dir.path().join("n.tsv");
    let genders = dir.path().join("g.tsv");
    std::fs::write(&nouns, "tenedor\tfork\tmasculine\ncuchara\tspoon\tfeminine\n").unwrap();
    std::fs::write(&genders, "fork\tmasculine\n").unwrap();
    let o = mapcs(&["validate", "--nouns", s(&nouns), "--genders", s(&genders), "--maps", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("no gender entry for spoon"), "{}", stdout(&o));

    let o = mapcs(&["validate", "--dataset", "/nonexistent/data.jsonl"]);
    assert_eq!(code(&o), 2);

    let old = dir.path().join("old.jsonl");
    std::fs::write(&old, "{\"record\":\"header\",\"schema\":\"mapcs-dataset\",\"version\":0}\n").unwrap();
    let o = mapcs(&["validate", "--dataset", s(&old)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("version 0"), "{}", stdout(&o));
}

#[test]
fn simulate_is_reproducible_and_matches_the_golden_export() {
    let a = mapcs(&GOLDEN_ARGS);
    assert_eq!(code(&a), 0);
    let b = mapcs(&GOLDEN_ARGS);
    assert_eq!(a.stdout, b.stdout);
    check_golden("golden_export.jsonl", &stdout(&a));

    let empty = mapcs(&["simulate", "--sessions", "0"]);
    assert_eq!(code(&empty), 0);
    assert_eq!(stdout(&empty).lines().count(), 1);

    let bad = mapcs(&["simulate", "--conditions", "nope", "--sessions", "1"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn simulate_check_reports_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.jsonl");
    let o = mapcs(&[
        "simulate",
        "--conditions",
        "k3=alt_short_context,k=3 alt_adversarial ins_fem_incongruent",
        "--sessions",
        "2",
        "--seed",
        "5",
        "--check",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("check k3:"), "{err}");
    assert!(err.lines().all(|l| l.ends_with(" 0 violations")), "{err}");
    assert!(std::fs::metadata(&out).unwrap().len() > 0);
}

#[test]
fn report_on_the_golden_export() {
    let golden = fixture("golden_export.jsonl");
    let o = mapcs(&["report", s(&golden)]);
    assert_eq!(code(&o), 0);
    check_golden("golden_export_report.txt", &stdout(&o));
    let again = mapcs(&["report", s(&golden)]);
    assert_eq!(o.stdout, again.stdout);

    let json = mapcs(&["report", s(&golden), "--format", "json", "--adjacency", "skip"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["adjacency"], "skip_non_unilingual");
    assert_eq!(v["conditions"].as_array().unwrap().len(), 2);

    assert_eq!(code(&mapcs(&["report", "/nonexistent.jsonl"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let wrong = dir.path().join("w.jsonl");
    std::fs::write(&wrong, "{\"record\":\"header\",\"schema\":\"other\",\"version\":1}\n").unwrap();
    let o = mapcs(&["report", s(&wrong)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stderr).unwrap().contains("unsupported schema other"));
}

#[test]
fn replay_rebuilds_the_simulated_export() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let sim = dir.path().join("sim.jsonl");
    let rebuilt = dir.path().join("rebuilt.jsonl");
    let o = mapcs(&[
        "simulate",
        "--conditions",
        "alt_random ins_congruent",
        "--sessions",
        "2",
        "--seed",
        "9",
        "--data-dir",
        s(&data),
        "--out",
        s(&sim),
    ]);
    assert_eq!(code(&o), 0);
    let o = mapcs(&["replay", "--data-dir", s(&data), "--out", s(&rebuilt)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("replayed 4 of 4 sessions"));
    assert_eq!(std::fs::read(&sim).unwrap(), std::fs::read(&rebuilt).unwrap());

    let log = std::fs::read_dir(data.join("sessions")).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(&log).unwrap();
    std::fs::write(&log, text.replacen("\"final_text\":\"", "\"final_text\":\"X", 1)).unwrap();
    let o = mapcs(&["replay", "--data-dir", s(&data)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("replayed 3 of 4 sessions"), "{}", stdout(&o));
}

#[test]
fn small_dtw_sweep() {
    let o = mapcs(&["dtw-oracle", "--width", "3", "--height", "3", "--max-len", "4"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains(" 0 mismatches, 0 nonzero self-distances"));
}
