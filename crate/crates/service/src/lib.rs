//! HTTP API and SQLite store around the SepsisLab engine.

pub mod api;
pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod store;

use std::sync::Arc;

pub use api::router;
pub use app::AppState;
pub use config::ServiceConfig;
pub use error::ServiceError;

/// Loads the checkpoint, opens the store and seeds it if configured.
pub fn build_state(cfg: &ServiceConfig) -> Result<Arc<AppState>, ServiceError> {
    let store = store::Store::open(&cfg.store_path())?;
    let state = AppState::from_checkpoint(&cfg.model_path, cfg.policy.clone(), store)?;
    if let Some(dir) = &cfg.seed_cohort {
        state.seed_from_cohort(dir, cfg.seed_patients)?;
    }
    Ok(Arc::new(state))
}

pub async fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    let state = {
        let cfg = cfg.clone();
        tokio::task::spawn_blocking(move || build_state(&cfg)).await??
    };
    let listener = tokio::net::TcpListener::bind((cfg.bind_address.as_str(), cfg.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
