//! HTTP API and operational CLI support for the grounded persona service.

pub mod api;
pub mod config;
pub mod error;

use anyhow::Context;

pub use api::{router, with_cors, AppState};
pub use config::{ProviderMode, ServiceConfig};
pub use error::ApiError;

impl AppState {
    pub fn from_config(config: &ServiceConfig) -> anyhow::Result<Self> {
        let engine = config.build_engine()?;
        let store = config.open_store()?;
        Ok(Self::new(engine, store, config.max_in_flight))
    }
}

pub fn app(config: &ServiceConfig) -> anyhow::Result<axum::Router> {
    let state = AppState::from_config(config)?;
    with_cors(router(state), &config.cors_origins)
}

/// Bind the configured address and serve until interrupted.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let app = app(&config)?;
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .with_context(|| format!("binding {}", config.listen))?;
    tracing::info!(addr = %listener.local_addr()?, provider = ?config.provider, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
