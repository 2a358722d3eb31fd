use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use mapcs_core::agent::ExternalChatBackend;
use mapcs_core::game::QuestionnaireMode;
use mapcs_core::strategy::ExternalTranslator;
use mapcs_server::store::Store;
use mapcs_server::{http, ConditionSet, ManagerConfig, Services, SessionManager, SystemClock};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendKind {
    Scripted,
    External,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TranslatorKind {
    PhraseTable,
    External,
}

/// Map Task session service.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Event logs and the session index live here.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Condition specs `name=kind,k=N,p=F,seed=S`, separated by `;` or
    /// spaces. Defaults to one condition per strategy.
    #[arg(long)]
    conditions: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BackendKind::Scripted)]
    backend: BackendKind,
    #[arg(long, value_enum, default_value_t = TranslatorKind::PhraseTable)]
    translator: TranslatorKind,
    /// `once` or `per_game`.
    #[arg(long, default_value = "once")]
    questionnaire_mode: QuestionnaireMode,
    /// Chat-completions endpoint for `--backend external`.
    #[arg(long)]
    backend_endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o-mini")]
    backend_model: String,
    /// Translation endpoint for `--translator external`.
    #[arg(long)]
    translator_endpoint: Option<String>,
    /// Environment variable holding the external-service credential.
    #[arg(long, default_value = "MAPCS_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 30)]
    request_timeout_s: u64,
    /// Built client assets served for any other path.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn services(args: &Args) -> anyhow::Result<Services> {
    let mut svc = Services::scripted(args.seed);
    let timeout = Duration::from_secs(args.request_timeout_s);
    if let BackendKind::External = args.backend {
        let Some(endpoint) = &args.backend_endpoint else { bail!("--backend external needs --backend-endpoint") };
        svc.backend =
            Arc::new(ExternalChatBackend::from_env(endpoint, &args.backend_model, &args.api_key_env, timeout)?);
    }
    if let TranslatorKind::External = args.translator {
        let Some(endpoint) = &args.translator_endpoint else {
            bail!("--translator external needs --translator-endpoint")
        };
        svc.translator = Arc::new(ExternalTranslator::from_env(endpoint, &args.api_key_env, timeout)?);
    }
    Ok(svc)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let conditions = match &args.conditions {
        Some(list) => ConditionSet::parse_list(list)?,
        None => ConditionSet::default(),
    };
    let cfg =
        ManagerConfig { conditions, seed: args.seed, questionnaire_mode: args.questionnaire_mode, bot_latency_ms: 0 };
    let store = Store::open(&args.data_dir).with_context(|| format!("opening {}", args.data_dir.display()))?;
    let manager = Arc::new(SessionManager::new(Arc::new(services(&args)?), cfg, Arc::new(SystemClock), Some(store))?);
    log::info!("{} sessions restored from {}", manager.session_ids().len(), args.data_dir.display());
    http::spawn_ticker(manager.clone(), Duration::from_millis(500));
    let addr: SocketAddr = format!("{}:{}", args.bind, args.port).parse().context("bad --bind/--port")?;
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, http::router(manager, args.static_dir.clone())).await?;
    Ok(())
}
