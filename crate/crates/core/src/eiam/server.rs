use std::net::{SocketAddr, TcpListener};
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::DeserializeOwned;
use tokio::sync::oneshot;

use super::http::wire;
use super::mock::MockBackend;
use super::prompt::Instruction;
use super::EiamBackend;
use crate::container;
use crate::error::{Error, Result};
use crate::snis::naive_inpaint;

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            Error::Analysis(_) => (StatusCode::UNPROCESSABLE_ENTITY, "analysis"),
            Error::Segmentation(_) => (StatusCode::NOT_FOUND, "segmentation"),
            Error::Numerical(_) => (StatusCode::INTERNAL_SERVER_ERROR, "numerical"),
            _ => (StatusCode::BAD_REQUEST, "protocol"),
        };
        let message = match self.0 {
            Error::Analysis(m) | Error::Segmentation(m) => m,
            other => other.to_string(),
        };
        let body = wire::ErrorBody {
            kind: kind.to_string(),
            message,
        };
        (status, Json(body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError(Error::Protocol(format!("malformed request: {e}"))))
}

fn binary(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response()
}

async fn caption(State(backend): State<Arc<MockBackend>>, body: Bytes) -> ApiResult<Json<wire::CaptionResponse>> {
    let req: wire::CaptionRequest = parse(&body)?;
    let prompt = backend.describe_source(&req.video_ref)?;
    Ok(Json(wire::CaptionResponse { prompt }))
}

async fn reason(State(backend): State<Arc<MockBackend>>, body: Bytes) -> ApiResult<Json<wire::ReasonResponse>> {
    let req: wire::ReasonRequest = parse(&body)?;
    let instruction = Instruction::new(req.instruction)?;
    let pair = backend.derive_target(&req.source_prompt, &instruction)?;
    Ok(Json(wire::ReasonResponse {
        target_prompt: pair.target,
        objects: pair.objects,
    }))
}

async fn segment(State(backend): State<Arc<MockBackend>>, body: Bytes) -> ApiResult<Response> {
    let req: wire::SegmentRequest = parse(&body)?;
    let mask = backend.segment_objects(&req.video_ref, &req.objects)?;
    Ok(binary(container::encode_mask(&mask)))
}

async fn inpaint(body: Bytes) -> ApiResult<Response> {
    let req: wire::InpaintRequest = parse(&body)?;
    let decode = |field: &str, text: &str| {
        BASE64
            .decode(text)
            .map_err(|e| ApiError(Error::Protocol(format!("{field}: invalid base64: {e}"))))
    };
    let latent = match container::decode(&decode("latent", &req.latent)?)? {
        container::Container::Latent(v) => v,
        _ => return Err(ApiError(Error::Protocol("latent field holds a mask".into()))),
    };
    let mask = match container::decode(&decode("mask", &req.mask)?)? {
        container::Container::Mask(m) => m,
        _ => return Err(ApiError(Error::Protocol("mask field holds a latent".into()))),
    };
    let filled = naive_inpaint(&latent, &mask)?.volume;
    Ok(binary(container::encode_latent(&filled)?))
}

/// Axum router for a mock backend.
pub fn router(backend: MockBackend) -> Router {
    Router::new()
        .route("/caption", post(caption))
        .route("/reason", post(reason))
        .route("/segment", post(segment))
        .route("/inpaint", post(inpaint))
        .with_state(Arc::new(backend))
}

/// A mock server running on a background thread; stops on drop.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl MockServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn spawn(backend: MockBackend, addr: SocketAddr) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Transport {
            endpoint: addr.to_string(),
            message: e.to_string(),
        })?;
        let addr = listener.local_addr().map_err(|e| Error::Transport {
            endpoint: addr.to_string(),
            message: e.to_string(),
        })?;
        listener.set_nonblocking(true).map_err(|e| Error::Transport {
            endpoint: addr.to_string(),
            message: e.to_string(),
        })?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(backend);
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(MockServer {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server thread exits.
    pub fn wait(mut self) -> Result<()> {
        let endpoint = self.addr.to_string();
        match self.thread.take().map(JoinHandle::join) {
            Some(Ok(Err(e))) => Err(Error::Transport {
                endpoint,
                message: e.to_string(),
            }),
            Some(Err(_)) => Err(Error::Transport {
                endpoint,
                message: "server thread panicked".into(),
            }),
            _ => Ok(()),
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves the fixtures in `dir` on `127.0.0.1:port`.
pub fn serve_mock(dir: impl AsRef<Path>, port: u16) -> Result<MockServer> {
    let backend = MockBackend::from_dir(dir)?;
    MockServer::spawn(backend, SocketAddr::from(([127, 0, 0, 1], port)))
}
