//! `sentinel serve`: run the HTTP gateway until SIGTERM or Ctrl-C, then
//! drain in-flight requests and exit 0.

use anyhow::{bail, Context};
use sentinel_core::engine::Engine;
use sentinel_gateway::GatewayState;

use crate::config::ResolvedConfig;
use crate::EXIT_OK;

pub const LISTEN_ENV: &str = "SENTINEL_LISTEN";
pub const FAIL_OPEN_ENV: &str = "SENTINEL_FAIL_OPEN";

#[derive(clap::Args)]
pub struct ServeArgs {
    /// Listen address (host:port); overrides $SENTINEL_LISTEN and the config.
    #[arg(long, value_name = "ADDR")]
    listen: Option<String>,
    /// On internal screening failure, answer benign (true) or refuse the
    /// request (false); overrides $SENTINEL_FAIL_OPEN and the config.
    #[arg(long, value_name = "BOOL")]
    fail_open: Option<bool>,
}

pub fn run(args: ServeArgs, resolved: ResolvedConfig) -> anyhow::Result<i32> {
    let mut config = resolved.config;
    if let Some(listen) = args.listen.or_else(|| env_string(LISTEN_ENV)) {
        config.gateway.listen = listen;
    }
    if let Some(fail_open) = fail_open_setting(args.fail_open)? {
        config.gateway.fail_open = fail_open;
    }
    let listen = config.gateway.listen.clone();
    let engine = Engine::new(config).context("building engine")?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    runtime.block_on(async move {
        let listener = sentinel_gateway::bind(&listen).await?;
        let addr = listener.local_addr().context("reading bound address")?;
        let state = GatewayState::new(engine, resolved.path);
        println!("listening on {addr} (engine {})", state.snapshot().version());
        use std::io::Write as _;
        std::io::stdout().flush().ok();
        sentinel_gateway::serve(state, listener, shutdown_signal()).await?;
        println!("drained in-flight requests; exiting");
        Ok::<(), anyhow::Error>(())
    })?;
    Ok(EXIT_OK)
}

fn env_string(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|value| !value.is_empty())
}

/// Flag beats environment; absent both, the config file's value stands.
fn fail_open_setting(flag: Option<bool>) -> anyhow::Result<Option<bool>> {
    if flag.is_some() {
        return Ok(flag);
    }
    let Some(raw) = env_string(FAIL_OPEN_ENV) else {
        return Ok(None);
    };
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(Some(true)),
        "0" | "false" | "no" | "off" => Ok(Some(false)),
        other => bail!("${FAIL_OPEN_ENV} must be a boolean, got `{other}`"),
    }
}

/// Resolves on SIGTERM or Ctrl-C.
async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("installing SIGTERM handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = ctrl_c.await;
    }
}
