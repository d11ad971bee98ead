//! Request execution. Every network call in the crate goes through the
//! [`Transport`] trait so that runs can be replayed from fixtures.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::fixture::{FixtureEntry, FixtureStore};
use crate::http::{Headers, HttpRequest, HttpResponse, Method};

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("{0}")]
    Io(String),
    #[error("request to `{0}` timed out")]
    Timeout(String),
    #[error("no fixture recorded for {method} {uri}")]
    NoFixture { method: Method, uri: String },
    #[error("fixture store: {0}")]
    Fixture(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).send(request)
    }
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).send(request)
    }
}

#[derive(Debug, Clone)]
pub struct HttpTransportConfig {
    pub timeout: Duration,
    pub user_agent: String,
    /// Route every plain-http request through this proxy (e.g. a local
    /// fixture server).
    pub proxy: Option<String>,
}

impl Default for HttpTransportConfig {
    fn default() -> Self {
        HttpTransportConfig {
            timeout: Duration::from_secs(60),
            user_agent: concat!("mementos/", env!("CARGO_PKG_VERSION")).to_string(),
            proxy: None,
        }
    }
}

/// Live HTTP. Redirects are never followed automatically.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(config: &HttpTransportConfig) -> Result<Self, TransportError> {
        let mut builder = reqwest::blocking::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(config.timeout)
            .user_agent(config.user_agent.clone())
            .no_proxy();
        if let Some(proxy) = &config.proxy {
            let proxy =
                reqwest::Proxy::http(proxy).map_err(|e| TransportError::Io(e.to_string()))?;
            builder = builder.proxy(proxy);
        }
        let client = builder
            .build()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let method = match request.method {
            Method::Get => reqwest::Method::GET,
            Method::Head => reqwest::Method::HEAD,
        };
        let mut builder = self.client.request(method, &request.uri);
        for (name, value) in request.headers.iter() {
            builder = builder.header(name, value);
        }
        let map_err = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportError::Timeout(request.uri.clone())
            } else {
                TransportError::Io(format!("{}: {e}", request.uri))
            }
        };
        let response = builder.send().map_err(map_err)?;
        let status = response.status().as_u16();
        let headers: Headers = response
            .headers()
            .iter()
            .map(|(k, v)| {
                (
                    k.as_str().to_string(),
                    String::from_utf8_lossy(v.as_bytes()).into_owned(),
                )
            })
            .collect();
        let body = response.bytes().map_err(map_err)?.to_vec();
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoggedRequest {
    pub method: Method,
    pub uri: String,
    pub at: Instant,
}

/// Answers requests from a [`FixtureStore`], honouring per-entry delays.
#[derive(Default)]
pub struct ReplayTransport {
    store: Arc<FixtureStore>,
    log: Mutex<Vec<LoggedRequest>>,
}

impl ReplayTransport {
    pub fn new(store: Arc<FixtureStore>) -> Self {
        ReplayTransport {
            store,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.log.lock().unwrap().push(LoggedRequest {
            method: request.method,
            uri: request.uri.clone(),
            at: Instant::now(),
        });
        let (response, delay) = self.store.respond(request.method, &request.uri)?;
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
        Ok(response)
    }
}

/// Forwards to an inner transport and writes every exchange into a fixture
/// directory.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Result<Self, TransportError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| TransportError::Fixture(e.to_string()))?;
        Ok(RecordingTransport { inner, dir })
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let response = self.inner.send(request)?;
        let entry = FixtureEntry::from_exchange(request.method, &request.uri, &response);
        entry
            .write_to_dir(&self.dir, &response.body)
            .map_err(|e| TransportError::Fixture(e.to_string()))?;
        Ok(response)
    }
}
