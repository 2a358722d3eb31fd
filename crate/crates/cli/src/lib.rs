//! `mapcs` subcommands. Results go to the given writer, diagnostics to
//! stderr. Exit codes: 0 ok, 1 validation failure, 2 I/O error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mapcs_core::dataset::{validate_dataset, write_dataset, Dataset, DatasetError};
use mapcs_core::game::{GameError, MapSet, QuestionnaireMode};
use mapcs_core::lexicon::{Lexicon, LexiconError, Number};
use mapcs_core::metrics::{build_report, dtw_sweep, simple_paths, Adjacency};
use mapcs_core::strategy::check::{check_dialog, CheckResult};
use mapcs_server::simulate::{run_with, SimulationConfig};
use mapcs_server::store::{Store, StoreError};
use mapcs_server::{replay, ConditionSet, Services};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: exit code 1.
    #[error("{0}")]
    Invalid(String),
    /// Unreadable or unwritable file: exit code 2.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Invalid(_) => ExitCode::from(1),
            CliError::Io(_) => ExitCode::from(2),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Io(e.to_string()),
            StoreError::Parse { .. } => CliError::Invalid(e.to_string()),
        }
    }
}

/// Whether the command's checks passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Outcome::Passed => ExitCode::SUCCESS,
            Outcome::Failed => ExitCode::from(1),
        }
    }

    fn from_ok(ok: bool) -> Self {
        if ok {
            Outcome::Passed
        } else {
            Outcome::Failed
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mapcs", version, about = "Code-switching Map Task batch tooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check dictionaries, maps and dataset files.
    Validate(ValidateArgs),
    /// Run scripted sessions through the in-process server and export them.
    Simulate(SimulateArgs),
    /// Per-condition report from an exported dataset.
    Report(ReportArgs),
    /// Compare the DTW implementation with brute-force enumeration on every
    /// pair of simple grid paths.
    DtwOracle(DtwOracleArgs),
    /// Print the compiled-in determiner table as TSV.
    Determiners,
    /// Replay every session log in a data directory and verify it.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Noun dictionary TSV (spanish, english, gender[, plural]). Bundled when omitted.
    #[arg(long, requires = "genders")]
    pub nouns: Option<PathBuf>,
    /// English gender dictionary TSV (english, gender[, plural]).
    #[arg(long, requires = "nouns")]
    pub genders: Option<PathBuf>,
    /// Directory of map `.toml` files. Bundled maps when omitted.
    #[arg(long)]
    pub maps: Option<PathBuf>,
    /// Dataset file to check against the export schema; repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Conditions separated by ';' or spaces. Each is a strategy name or
    /// `name=strategy[,k=N][,p=F][,seed=S]`; `all` runs all nine strategies.
    #[arg(long, default_value = "all")]
    pub conditions: String,
    /// Sessions per condition.
    #[arg(long, default_value_t = 10)]
    pub sessions: usize,
    /// Seeds session ids, map order, strategies, the scripted bot and the
    /// simulated participant.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Dataset output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write event logs here, for `mapcs replay`.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// `once` or `per-game`.
    #[arg(long, default_value = "once")]
    pub questionnaire_mode: QuestionnaireMode,
    /// Check each strategy's invariants on every bot transcript; exit 1 on a violation.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Dataset file produced by `simulate` or the server export.
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    /// `strict`: a mixed or none utterance breaks inter-sentential adjacency.
    /// `skip`: it is skipped over.
    #[arg(long, default_value = "strict")]
    pub adjacency: Adjacency,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DtwOracleArgs {
    #[arg(long, default_value_t = 4)]
    pub width: u32,
    #[arg(long, default_value_t = 4)]
    pub height: u32,
    /// Longest path, in cells.
    #[arg(long, default_value_t = 6)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory written by the server or `simulate --data-dir`.
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Write the dataset rebuilt from the replayed sessions here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Validate(a) => validate(&a, out),
        Command::Simulate(a) => simulate(&a, out),
        Command::Report(a) => report(&a, out),
        Command::DtwOracle(a) => dtw_oracle(&a, out),
        Command::Determiners => determiners(out),
        Command::Replay(a) => replay_dir(&a, out),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::Io(format!("stdout: {e}")))
}

pub fn validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let mut ok = true;
    let lex = match (&a.nouns, &a.genders) {
        (Some(n), Some(g)) => match Lexicon::load(n, g) {
            Ok(lex) => lex,
            Err(e @ LexiconError::Io { .. }) => return Err(CliError::Io(e.to_string())),
            Err(e) => {
                say(out, format_args!("lexicon: FAIL {e}"))?;
                return Ok(Outcome::Failed);
            }
        },
        _ => Lexicon::bundled(),
    };
    let uncovered = lex.coverage_report();
    if uncovered.is_empty() {
        say(
            out,
            format_args!(
                "lexicon: ok ({} nouns, {} english entries)",
                lex.nouns().count(),
                lex.english_entries().count()
            ),
        )?;
    } else {
        ok = false;
        say(out, format_args!("lexicon: FAIL no gender entry for {}", uncovered.join(", ")))?;
    }

    let maps = match &a.maps {
        Some(dir) => MapSet::load_dir(dir, &lex),
        None => Ok(MapSet::bundled(&lex)),
    };
    match maps {
        Ok(maps) => say(out, format_args!("maps: ok ({})", maps.ids().join(", ")))?,
        Err(e @ GameError::Io { .. }) => return Err(CliError::Io(e.to_string())),
        Err(e) => {
            ok = false;
            say(out, format_args!("maps: FAIL {e}"))?;
        }
    }

    for path in &a.datasets {
        match validate_dataset(&read(path)?) {
            Ok(s) => say(
                out,
                format_args!(
                    "{}: ok ({} sessions, {} games, {} utterances)",
                    path.display(),
                    s.sessions,
                    s.games,
                    s.utterances
                ),
            )?,
            Err(e) => {
                ok = false;
                say(out, format_args!("{}: FAIL {e}", path.display()))?;
            }
        }
    }
    Ok(Outcome::from_ok(ok))
}

fn conditions(spec: &str) -> Result<ConditionSet, CliError> {
    if spec.trim() == "all" {
        return Ok(ConditionSet::default());
    }
    ConditionSet::parse_list(spec).map_err(|e| CliError::Invalid(e.to_string()))
}

pub fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let mut cfg = SimulationConfig::new(conditions(&a.conditions)?, a.sessions, a.seed);
    cfg.questionnaire_mode = a.questionnaire_mode;
    let store = a.data_dir.as_deref().map(Store::open).transpose()?;
    let sim =
        run_with(&cfg, Arc::new(Services::scripted(a.seed)), store).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut outcome = Outcome::Passed;
    if a.check {
        for condition in cfg.conditions.iter() {
            let mut total = CheckResult::default();
            for id in &sim.session_ids {
                let s = sim.manager.session(id).map_err(|e| CliError::Invalid(e.to_string()))?;
                if s.condition_name != condition.name {
                    continue;
                }
                let dialog: Vec<_> = s.games.iter().flat_map(|g| g.transcript.iter().cloned()).collect();
                let r = check_dialog(&s.condition, &dialog);
                for v in &r.violations {
                    eprintln!("{}: {} turn {}: {}", condition.name, id, v.index, v.reason);
                }
                total.merge(r);
            }
            eprintln!(
                "check {}: {} eligible bot turns, {} violations",
                condition.name,
                total.eligible,
                total.violations.len()
            );
            if !total.violations.is_empty() {
                outcome = Outcome::Failed;
            }
        }
    }
    emit(out, a.out.as_deref(), &sim.export())?;
    Ok(outcome)
}

fn dataset_error(path: &Path, e: DatasetError) -> CliError {
    CliError::Invalid(format!("{}: {e}", path.display()))
}

pub fn report(a: &ReportArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let src = read(&a.dataset)?;
    let inputs = Dataset::parse(&src).and_then(|d| d.report_inputs()).map_err(|e| dataset_error(&a.dataset, e))?;
    let report = build_report(&inputs, a.adjacency);
    let text = match a.format {
        Format::Table => report.to_table(),
        Format::Json => report.to_json(),
    };
    emit(out, a.out.as_deref(), &text)?;
    Ok(Outcome::Passed)
}

pub fn dtw_oracle(a: &DtwOracleArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let paths = simple_paths(a.width, a.height, a.max_len);
    let r = dtw_sweep(&paths);
    say(
        out,
        format_args!(
            "{}x{} grid, paths of 1..={} cells: {} paths, {} ordered pairs, {} mismatches, {} nonzero self-distances",
            a.width,
            a.height,
            a.max_len,
            r.paths,
            r.pairs,
            r.mismatches.len(),
            r.nonzero_identity
        ),
    )?;
    for m in r.mismatches.iter().take(10) {
        say(out, format_args!("mismatch: {:?} vs {:?}: fast {} oracle {}", m.a, m.b, m.fast, m.oracle))?;
    }
    Ok(Outcome::from_ok(r.passed()))
}

pub fn determiners(out: &mut dyn Write) -> Result<Outcome, CliError> {
    let lex = Lexicon::bundled();
    let table = lex.determiners();
    let mut text = String::from("masculine\tfeminine\tdefinite\tnumber\n");
    for m in table.masculine_forms() {
        let form = table.form_of(m).expect("listed form");
        let f = table.to_feminine(m).expect("listed form");
        let number = match form.number {
            Number::Singular => "singular",
            Number::Plural => "plural",
        };
        text.push_str(&format!("{m}\t{f}\t{}\t{number}\n", form.definite));
    }
    emit(out, None, &text)?;
    Ok(Outcome::Passed)
}

pub fn replay_dir(a: &ReplayArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let store = Store::open(&a.data_dir)?;
    // Bot replies come from the log, so the bot seed is irrelevant.
    let svc = Services::scripted(0);
    let mut ok = true;
    let mut sessions = Vec::new();
    let index = store.index()?;
    for entry in &index {
        let events = store.load(&entry.session_id)?;
        match replay(&events, &svc) {
            Ok(r) => sessions.push(r.engine.session().clone()),
            Err(e) => {
                ok = false;
                say(out, format_args!("{}: FAIL {e}", entry.session_id))?;
            }
        }
    }
    say(out, format_args!("replayed {} of {} sessions", sessions.len(), index.len()))?;
    if let Some(path) = &a.out {
        emit(out, Some(path), &write_dataset(&sessions))?;
    }
    Ok(Outcome::from_ok(ok))
}
