//! Case store service: bundles, analyses and review decisions persisted as an
//! append-only event log, served over HTTP.

pub mod api;
pub mod events;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use corax_core::CoraxError;
use corax_core::referral::Pipeline;

pub use api::router;
pub use store::Store;

pub const DEFAULT_PORT: u16 = 8741;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("validation failed at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Core(#[from] CoraxError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub addr: SocketAddr,
}

impl ServiceConfig {
    /// `CORAX_DATA_DIR` (default `./corax-data`) and `CORAX_PORT`
    /// (default 8741), bound on localhost.
    pub fn from_env() -> Result<Self, ServiceError> {
        let data_dir = std::env::var_os("CORAX_DATA_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("corax-data"));
        let port = match std::env::var("CORAX_PORT") {
            Ok(p) => p
                .parse()
                .map_err(|_| ServiceError::BadRequest(format!("CORAX_PORT `{p}` is not a port")))?,
            Err(_) => DEFAULT_PORT,
        };
        Ok(ServiceConfig {
            data_dir,
            addr: SocketAddr::from(([127, 0, 0, 1], port)),
        })
    }
}

/// Opens the store and serves until ctrl-c.
pub async fn serve(config: ServiceConfig, pipeline: Pipeline) -> Result<(), ServiceError> {
    let store = Arc::new(Store::open(&config.data_dir, pipeline)?);
    serve_store(store, config.addr).await
}

/// Serves an already opened store until ctrl-c.
pub async fn serve_store(store: Arc<Store>, addr: SocketAddr) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
