use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tokio::sync::oneshot;

use super::wire::{self, LOOKUP_PATH};
use super::{IdentityError, IdentityProvider, MockProvider};

/// Misbehaviours the mock server can be told to inject.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// 200 with only the first half of the JSON body.
    TruncatedBody,
    /// 500 for every request.
    InternalError,
    /// Sleep before answering.
    Delay(Duration),
}

#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    pub fault: Option<Fault>,
}

#[derive(Clone)]
struct AppState {
    provider: Arc<MockProvider>,
    fault: Option<Fault>,
}

/// A running mock lookup server. Dropping the handle shuts it down.
#[derive(Debug)]
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting requests and waits for the server thread. Safe to call
    /// more than once.
    pub fn shutdown(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Serves `provider` over HTTP at `addr` (port 0 picks a free port).
pub fn serve_mock(
    provider: Arc<MockProvider>,
    addr: impl ToSocketAddrs + std::fmt::Debug,
    options: ServeOptions,
) -> Result<MockServer, IdentityError> {
    let bind_err = |source| IdentityError::Bind {
        addr: format!("{addr:?}"),
        source,
    };
    let listener = TcpListener::bind(&addr).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    let local = listener.local_addr().map_err(bind_err)?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(bind_err)?;

    let app = Router::new()
        .route(LOOKUP_PATH, get(lookup))
        .with_state(AppState {
            provider,
            fault: options.fault,
        });
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name(format!("mock-identity-{local}"))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(_) => return,
                };
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        })
        .map_err(bind_err)?;

    Ok(MockServer {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn lookup(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    match state.fault {
        Some(Fault::InternalError) => {
            return json_response(StatusCode::INTERNAL_SERVER_ERROR, "{}".into());
        }
        Some(Fault::Delay(d)) => tokio::time::sleep(d).await,
        _ => {}
    }
    let Some(names) = params.get("usernames").filter(|n| !n.trim().is_empty()) else {
        let body = serde_json::to_string(&wire::encode_error(100, "missing usernames parameter"))
            .expect("status serializes");
        return json_response(StatusCode::BAD_REQUEST, body);
    };
    let mut found = Vec::new();
    for name in names.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        // the in-memory provider cannot fail
        if let Ok(Some(profile)) = state.provider.lookup(name) {
            found.push(profile);
        }
    }
    let body = serde_json::to_string(&wire::encode_found(&found)).expect("response serializes");
    if state.fault == Some(Fault::TruncatedBody) {
        let cut = body.len() / 2;
        return json_response(StatusCode::OK, body[..cut].to_owned());
    }
    json_response(StatusCode::OK, body)
}
