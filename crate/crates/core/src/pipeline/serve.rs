use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use axum::Router;
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A bound, not yet running, read-only file server.
pub struct Server {
    listener: TcpListener,
    router: Router,
}

impl Server {
    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> std::io::Result<()> {
        axum::serve(self.listener, self.router).await
    }
}

/// Binds `127.0.0.1:port` (0 picks a free port) over `dir`. Range requests
/// are answered with partial content.
pub async fn bind_server(dir: &Path, port: u16) -> Result<Server, ServeError> {
    if !dir.is_dir() {
        return Err(ServeError::MissingDirectory(dir.to_path_buf()));
    }
    let has_cube = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .any(|e| e.path().extension().is_some_and(|x| x == "stc"));
    if !has_cube {
        log::warn!("{} contains no .stc cube file", dir.display());
    }
    let listener = TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => ServeError::PortInUse(port),
            _ => ServeError::Io(e),
        })?;
    let router = Router::new().fallback_service(ServeDir::new(dir));
    Ok(Server { listener, router })
}

/// Serves `dir` until the process is stopped.
pub fn serve(dir: &Path, port: u16) -> Result<(), ServeError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async {
        let server = bind_server(dir, port).await?;
        log::info!("serving {} on http://{}", dir.display(), server.local_addr()?);
        server.run().await?;
        Ok(())
    })
}
