use std::io;
use std::net::SocketAddr;
use std::sync::mpsc;
use std::thread::JoinHandle;

use axum::Router;
use tokio::sync::oneshot;

/// Environment variable holding the review API bearer token.
pub const REVIEW_TOKEN_ENV: &str = "IUL_REVIEW_TOKEN";

fn runtime() -> io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()
}

/// Serves `app` on `addr` until the process exits. `on_bound` receives the
/// actual address (useful with port 0).
pub fn serve_blocking(addr: SocketAddr, app: Router, on_bound: impl FnOnce(SocketAddr)) -> io::Result<()> {
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        on_bound(listener.local_addr()?);
        axum::serve(listener, app).await
    })
}

/// A server on its own thread and runtime; stops when dropped.
pub struct BackgroundServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl BackgroundServer {
    pub fn start(app: Router) -> io::Result<Self> {
        let (addr_tx, addr_rx) = mpsc::channel();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime()?.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(("127.0.0.1", 0)).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = addr_tx.send(Err(e.kind()));
                        return Err(e);
                    }
                };
                let _ = addr_tx.send(listener.local_addr().map_err(|e| e.kind()));
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
            })
        });
        let addr = addr_rx
            .recv()
            .map_err(|_| io::Error::other("server thread exited before binding"))?
            .map_err(io::Error::from)?;
        Ok(Self { addr, shutdown: Some(stop_tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
