use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use border_flux::pipeline::{default_stages, parse_stages, run_pipeline, PipelineError, RunConfig, Stage};
use border_flux::privacy::{Secrets, Store};
use border_flux::synth::{write_world, SynthConfig, SynthError};
use border_flux_cli::{router, ServiceState, TOKEN_ENV};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "border-flux", version, about = "Privacy-gated indicators for sudden cross-border mobility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world with its ground-truth manifests and a run config.
    Synth {
        /// Generator settings (TOML); defaults apply when absent.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Parse, validate and pseudonymize all inputs.
    Ingest(ConfigArg),
    /// Select the border cohort.
    Cohort(ConfigArg),
    /// Placements and every mobility output.
    Mobility(ConfigArg),
    /// Tweet language and destination outputs.
    Social(ConfigArg),
    /// Lexicon sentiment outputs.
    Sentiment(ConfigArg),
    /// Run several stages; all configured stages by default.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated stages; `mobility` and `all` are accepted.
        #[arg(long)]
        stages: Option<String>,
    },
    /// Serve whitelisted aggregate queries over a completed run's store.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Static bearer token (or set BORDER_FLUX_API_TOKEN).
        #[arg(long)]
        token: Option<String>,
    },
}

fn pipeline(config: &ConfigArg, stages: Option<BTreeSet<Stage>>) -> Result<(), PipelineError> {
    let cfg = RunConfig::load(&config.config)?;
    let secrets = Secrets::from_env()?;
    let stages = stages.unwrap_or_else(|| default_stages(&cfg));
    let manifest = run_pipeline(&cfg, &stages, &secrets)?;
    for (name, digest) in &manifest.outputs {
        println!("{digest}  {name}");
    }
    Ok(())
}

fn synth(config: Option<PathBuf>, out: PathBuf) -> Result<(), (u8, String)> {
    let cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| (1, format!("{}: {e}", p.display())))?;
            SynthConfig::from_toml(&text).map_err(|e| (1, e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    let summary = write_world(&cfg, &out).map_err(|e| match e {
        SynthError::Io { .. } => (2, e.to_string()),
        _ => (1, e.to_string()),
    })?;
    println!("{} subscribers, {} events, {} tweets written to {}", summary.subscribers, summary.events, summary.tweets, out.display());
    Ok(())
}

fn serve(store: PathBuf, host: String, port: u16, token: Option<String>) -> Result<(), (u8, String)> {
    let store = Store::load(&store).map_err(|e| (1, e.to_string()))?;
    let token = token.or_else(|| std::env::var(TOKEN_ENV).ok()).filter(|t| !t.is_empty());
    let app = router(ServiceState { store, token });
    let rt = tokio::runtime::Runtime::new().map_err(|e| (2, e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await.map_err(|e| (1, format!("bind {host}:{port}: {e}")))?;
        log::info!("listening on {}", listener.local_addr().map_err(|e| (2, e.to_string()))?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| (2, e.to_string()))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result: Result<(), (u8, String)> = match cli.command {
        Command::Synth { config, out } => synth(config, out),
        Command::Serve { store, port, host, token } => serve(store, host, port, token),
        Command::Ingest(c) => pipeline(&c, Some([Stage::Ingest].into())).map_err(pipeline_err),
        Command::Cohort(c) => pipeline(&c, Some([Stage::Cohort].into())).map_err(pipeline_err),
        Command::Mobility(c) => pipeline(&c, Some(Stage::MOBILITY.into())).map_err(pipeline_err),
        Command::Social(c) => pipeline(&c, Some([Stage::Social].into())).map_err(pipeline_err),
        Command::Sentiment(c) => pipeline(&c, Some([Stage::Sentiment].into())).map_err(pipeline_err),
        Command::Run { config, stages } => match stages.as_deref().map(parse_stages).transpose() {
            Ok(s) => pipeline(&config, s).map_err(pipeline_err),
            Err(e) => Err(pipeline_err(e)),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn pipeline_err(e: PipelineError) -> (u8, String) {
    (e.exit_code() as u8, e.to_string())
}
