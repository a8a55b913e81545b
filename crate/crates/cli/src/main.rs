use std::io::{self, BufRead};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dualtone_cli::api::{router, AppState};
use dualtone_cli::report;
use dualtone_cli::share::ShareSigner;
use dualtone_core::blobs::BlobStore;
use dualtone_core::config::ServiceConfig;
use dualtone_core::Engine;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "dualtone", version, about = "Iterative text-to-audio exploration service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service. Configuration comes from environment variables.
    Serve {
        /// Overrides LISTEN_ADDR.
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
    /// CSV reports over an event log.
    #[command(subcommand)]
    Analytics(Analytics),
    /// Check that every clip in a log has intact audio in a blob directory.
    Audit {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        blobs: PathBuf,
    },
}

#[derive(Args)]
struct LogArg {
    /// JSONL event log.
    #[arg(long)]
    log: PathBuf,
}

#[derive(Subcommand)]
enum Analytics {
    /// Word counts over theme phrases: term,count.
    Terms {
        #[command(flatten)]
        log: LogArg,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
    },
    /// Action-to-action transition counts: from,to,count.
    Transitions {
        #[command(flatten)]
        log: LogArg,
    },
    /// 2-D projection of themes, prompts and labels: corpus,x,y.
    Project {
        #[command(flatten)]
        log: LogArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Texts kept per corpus.
        #[arg(long, default_value_t = 1000)]
        per_corpus: usize,
        /// File with one label per line, projected alongside the log's texts.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

fn read_labels(path: &PathBuf) -> anyhow::Result<Vec<String>> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut labels = Vec::new();
    for line in io::BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            labels.push(line.trim().to_string());
        }
    }
    Ok(labels)
}

fn analytics(command: Analytics) -> anyhow::Result<()> {
    let out = io::stdout().lock();
    match command {
        Analytics::Terms { log, min_count } => report::terms_csv(&report::load_log(&log.log)?, min_count, out)?,
        Analytics::Transitions { log } => report::transitions_csv(&report::load_log(&log.log)?, out)?,
        Analytics::Project {
            log,
            seed,
            per_corpus,
            labels,
        } => {
            let labels = labels.as_ref().map(read_labels).transpose()?.unwrap_or_default();
            report::project_csv(&report::load_log(&log.log)?, &labels, per_corpus, seed, out)?
        }
    }
    Ok(())
}

async fn serve(listen: Option<SocketAddr>) -> anyhow::Result<()> {
    let mut config = ServiceConfig::from_env()?;
    if let Some(addr) = listen {
        config.listen_addr = addr;
    }
    let engine = Arc::new(Engine::from_config(&config)?);
    let signer = match &config.share_secret {
        Some(secret) => ShareSigner::new(secret),
        None => {
            tracing::warn!("SHARE_SECRET unset; share links expire when the process exits");
            ShareSigner::ephemeral()
        }
    };
    let app = router(AppState { engine, signer }, config.cors_origin.as_deref())
        .layer(tower_http::trace::TraceLayer::new_for_http());

    let listener = tokio::net::TcpListener::bind(config.listen_addr)
        .await
        .with_context(|| format!("cannot listen on {}", config.listen_addr))?;
    tracing::info!(addr = %config.listen_addr, mode = ?config.backend_mode, "serving");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve { listen } => tokio::runtime::Runtime::new()?.block_on(serve(listen)),
        Command::Analytics(command) => analytics(command),
        Command::Audit { log, blobs } => {
            let records = report::load_log(&log)?;
            let blobs = BlobStore::open(&blobs).with_context(|| format!("cannot open {}", blobs.display()))?;
            let audit = report::audit(&records, &blobs)?;
            println!(
                "{} sessions, {} rounds, {} clips, {} events",
                audit.sessions, audit.rounds, audit.clips, audit.events
            );
            for clip in &audit.missing {
                println!("missing audio: {clip}");
            }
            for clip in &audit.corrupt {
                println!("corrupt audio: {clip}");
            }
            if !audit.is_clean() {
                bail!("{} missing and {} corrupt clips", audit.missing.len(), audit.corrupt.len());
            }
            Ok(())
        }
    }
}
