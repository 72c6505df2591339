//! Session-oriented HTTP API over the recommendation pipeline.
//!
//! Pipeline work runs on the blocking pool; each session admits one request
//! at a time and answers a concurrent one with `409 session_busy`.

pub mod error;
mod routes;
pub mod session;
pub mod state;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

pub use error::{ApiError, ErrorBody, ErrorEnvelope};
pub use routes::{router, CardsResponse, Created, RecommendResponse, RecordsResponse, RequestResponse};
pub use session::{BackendChoice, HistoryEntry, RunSettings, Session, SessionError, SessionState, DEFAULT_BUDGET};
pub use state::{AppState, RegistrySource, ServiceConfig};

pub fn app(config: ServiceConfig) -> (Arc<AppState>, axum::Router) {
    let state = Arc::new(AppState::new(config));
    (state.clone(), router(state))
}

pub fn load_snapshot(path: &Path) -> std::io::Result<Vec<Session>> {
    match std::fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(std::io::Error::other),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

pub fn write_snapshot(path: &Path, sessions: &[Session]) -> std::io::Result<()> {
    let bytes = serde_json::to_vec_pretty(sessions).map_err(std::io::Error::other)?;
    std::fs::write(path, bytes)
}

/// Serves until ctrl-c, restoring and then saving the session snapshot
/// when one is configured.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let (state, router) = app(config);
    if let Some(path) = &state.snapshot {
        state.restore(load_snapshot(path)?);
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(path) = &state.snapshot {
        write_snapshot(path, &state.sessions())?;
    }
    Ok(())
}

/// Blocking wrapper around [`serve`] on a fresh multi-threaded runtime.
pub fn run_server(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(addr, config))
}
