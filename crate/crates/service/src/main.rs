use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use lilo_service::{router, AgentSpec, ServiceConfig, Store};

#[derive(Parser)]
#[command(name = "lilo-service", about = "Serve interactive optimization sessions over HTTP")]
struct Cli {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    #[arg(long, default_value = "sessions-out")]
    output_dir: PathBuf,
    /// oracle, synthetic, scripted:<path>, or a JSON HTTP backend config
    #[arg(long, default_value = "oracle")]
    backend: String,
    /// directory served at `/`
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn init_logging() {
    let level = std::env::var("RUST_LOG").ok().and_then(|s| s.parse().ok()).unwrap_or(tracing::Level::INFO);
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    init_logging();
    let cli = Cli::parse();
    let agent = if cli.backend.trim_start().starts_with('{') {
        match serde_json::from_str(&cli.backend) {
            Ok(h) => AgentSpec::Http(h),
            Err(e) => {
                eprintln!("error: backend config: {e}");
                return std::process::ExitCode::from(2);
            }
        }
    } else {
        AgentSpec::parse(&cli.backend)
    };
    if let Err(e) = agent.validate() {
        eprintln!("error: {e}");
        return std::process::ExitCode::from(2);
    }
    let store = match Store::new(ServiceConfig { output_dir: cli.output_dir, agent }) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: {e}");
            return std::process::ExitCode::FAILURE;
        }
    };
    match store.restore() {
        Ok(n) if n > 0 => tracing::info!("restored {n} sessions"),
        Ok(_) => {}
        Err(e) => tracing::warn!("restore failed: {e:?}"),
    }
    let listener = match tokio::net::TcpListener::bind(&cli.addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: bind {}: {e}", cli.addr);
            return std::process::ExitCode::FAILURE;
        }
    };
    tracing::info!("listening on {}", cli.addr);
    if let Err(e) = axum::serve(listener, router(store, cli.static_dir)).await {
        eprintln!("error: {e}");
        return std::process::ExitCode::FAILURE;
    }
    std::process::ExitCode::SUCCESS
}
