use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use tabsynth::workspace::Workspace;
use tabsynth_service::{router, AppState};

#[derive(Parser)]
#[command(name = "tabsynth-service", version, about = "Serve a tabsynth workspace over HTTP")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, default_value = "tabsynth-workspace")]
    workspace: PathBuf,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let ws = Workspace::open(&args.workspace)
        .with_context(|| format!("opening workspace {}", args.workspace.display()))?;
    let app = router(AppState::new(ws));
    let listener = tokio::net::TcpListener::bind(args.bind)
        .await
        .with_context(|| format!("binding {}", args.bind))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
