//! Command-line front end and HTTP services for the flatlift pipeline.

pub mod cli;
pub mod models;
pub mod service;

use std::net::SocketAddr;

use axum::Router;

/// Serves `app` on an ephemeral localhost port from a background thread.
pub fn spawn_background(app: Router) -> std::io::Result<SocketAddr> {
    let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            axum::serve(listener, app).await.expect("server");
        });
    });
    Ok(addr)
}
