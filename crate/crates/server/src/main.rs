use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use metapix_server::{load_config, serve, AppState};
use tracing_subscriber::EnvFilter;

fn config_path() -> Option<PathBuf> {
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        if a == "--config" {
            return args.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    std::env::var_os("METAPIX_CONFIG").map(PathBuf::from)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let Some(path) = config_path() else {
        eprintln!("usage: metapix-server --config <file>  (or set METAPIX_CONFIG)");
        return ExitCode::from(2);
    };
    let config = match load_config(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config: {e}");
            return ExitCode::from(2);
        }
    };
    let port = config.server.port;
    let state = match AppState::from_config(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("startup: {e}");
            return ExitCode::FAILURE;
        }
    };
    let _monitor = state.catalog.spawn_monitor();
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("bind {addr}: {e}");
            return ExitCode::FAILURE;
        }
    };
    tracing::info!(%addr, tokens = state.tokens.len(), "listening");
    if let Err(e) = serve(listener, state).await {
        eprintln!("server: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
