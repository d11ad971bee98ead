//! Recorded HTTP exchanges and a local server that replays them.
//!
//! A fixture directory holds one JSON file per exchange. The request key is
//! the method plus the normalized URI; file names are free-form (recordings
//! use a hash of the key). Bodies are inline UTF-8 text or a sibling file
//! named by `body_file`.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical;
use crate::http::{Headers, HttpResponse, Method};
use crate::transport::TransportError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub method: Method,
    pub uri: String,
    pub status: u16,
    #[serde(default)]
    pub headers: Headers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

impl FixtureEntry {
    pub fn from_exchange(method: Method, uri: &str, response: &HttpResponse) -> Self {
        let body = std::str::from_utf8(&response.body).ok().map(str::to_string);
        let body_file = body
            .is_none()
            .then(|| format!("{}.body", key_digest(method, uri)));
        FixtureEntry {
            method,
            uri: uri.to_string(),
            status: response.status,
            headers: response.headers.clone(),
            body,
            body_file,
            delay_ms: None,
        }
    }

    pub fn write_to_dir(&self, dir: &Path, raw_body: &[u8]) -> io::Result<()> {
        let digest = key_digest(self.method, &self.uri);
        if let Some(name) = &self.body_file {
            std::fs::write(dir.join(name), raw_body)?;
        }
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        std::fs::write(dir.join(format!("{digest}.json")), json)
    }
}

fn request_key(method: Method, uri: &str) -> String {
    let uri = canonical::normalize(uri).unwrap_or_else(|_| uri.to_string());
    format!("{method} {uri}")
}

fn key_digest(method: Method, uri: &str) -> String {
    hex::encode(&Sha256::digest(request_key(method, uri).as_bytes())[..12])
}

#[derive(Debug, Clone)]
struct StoredResponse {
    status: u16,
    headers: Headers,
    body: Arc<Vec<u8>>,
    delay: Duration,
}

/// In-memory index of fixture entries keyed by method and URI.
#[derive(Debug, Default)]
pub struct FixtureStore {
    entries: RwLock<HashMap<String, StoredResponse>>,
}

impl FixtureStore {
    pub fn new() -> Self {
        FixtureStore::default()
    }

    /// Loads every `*.json` entry in `dir`.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let store = FixtureStore::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let entry: FixtureEntry = serde_json::from_str(&text).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: {e}", path.display()),
                )
            })?;
            let body = match (&entry.body, &entry.body_file) {
                (_, Some(file)) => std::fs::read(dir.join(file))?,
                (Some(text), None) => text.clone().into_bytes(),
                (None, None) => Vec::new(),
            };
            store.insert(&entry, body);
        }
        Ok(store)
    }

    pub fn insert(&self, entry: &FixtureEntry, body: Vec<u8>) {
        self.entries.write().unwrap().insert(
            request_key(entry.method, &entry.uri),
            StoredResponse {
                status: entry.status,
                headers: entry.headers.clone(),
                body: Arc::new(body),
                delay: Duration::from_millis(entry.delay_ms.unwrap_or(0)),
            },
        );
    }

    pub fn add(
        &self,
        method: Method,
        uri: &str,
        status: u16,
        headers: Headers,
        body: impl Into<Vec<u8>>,
    ) {
        self.add_delayed(method, uri, status, headers, body, Duration::ZERO);
    }

    pub fn add_delayed(
        &self,
        method: Method,
        uri: &str,
        status: u16,
        headers: Headers,
        body: impl Into<Vec<u8>>,
        delay: Duration,
    ) {
        self.entries.write().unwrap().insert(
            request_key(method, uri),
            StoredResponse {
                status,
                headers,
                body: Arc::new(body.into()),
                delay,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The recorded response and its injected delay. A HEAD request with no
    /// HEAD entry is answered from the GET entry without a body.
    pub fn respond(
        &self,
        method: Method,
        uri: &str,
    ) -> Result<(HttpResponse, Duration), TransportError> {
        let entries = self.entries.read().unwrap();
        let found = entries
            .get(&request_key(method, uri))
            .or_else(|| match method {
                Method::Head => entries.get(&request_key(Method::Get, uri)),
                Method::Get => None,
            });
        let stored = found.ok_or_else(|| TransportError::NoFixture {
            method,
            uri: uri.to_string(),
        })?;
        let body = match method {
            Method::Head => Vec::new(),
            Method::Get => stored.body.as_ref().clone(),
        };
        Ok((
            HttpResponse {
                status: stored.status,
                headers: stored.headers.clone(),
                body,
            },
            stored.delay,
        ))
    }
}

/// One request as seen by a [`FixtureServer`].
#[derive(Debug, Clone)]
pub struct ServedRequest {
    pub method: String,
    pub uri: String,
    pub host: String,
    pub received: Instant,
    pub finished: Instant,
    pub status: u16,
}

/// Serves a [`FixtureStore`] over HTTP/1.1 on a loopback port.
///
/// Requests may use an absolute target (proxy style) or an origin target with
/// a `Host` header; both map to the same fixture key.
pub struct FixtureServer {
    addr: SocketAddr,
    log: Arc<Mutex<Vec<ServedRequest>>>,
    shutdown: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start(store: Arc<FixtureStore>) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let log = Arc::new(Mutex::new(Vec::new()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let log = Arc::clone(&log);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let store = Arc::clone(&store);
                    let log = Arc::clone(&log);
                    std::thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, &store, &log) {
                            log::debug!("fixture server connection: {e}");
                        }
                    });
                }
            })
        };
        Ok(FixtureServer {
            addr,
            log,
            shutdown,
            acceptor: Some(acceptor),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn log(&self) -> Vec<ServedRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

fn serve_connection(
    stream: TcpStream,
    store: &FixtureStore,
    log: &Mutex<Vec<ServedRequest>>,
) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut host = String::new();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("host") {
                host = value.trim().to_string();
            } else if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    if content_length > 0 {
        let mut sink = vec![0; content_length];
        reader.read_exact(&mut sink)?;
    }
    let received = Instant::now();

    let mut parts = request_line.split_whitespace();
    let method_text = parts.next().unwrap_or_default().to_string();
    let target = parts.next().unwrap_or("/").to_string();
    let uri = if target.starts_with("http://") || target.starts_with("https://") {
        target
    } else {
        format!("http://{host}{target}")
    };
    if host.is_empty() {
        host = url::Url::parse(&uri)
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_default();
    }

    let method = match method_text.as_str() {
        "GET" => Some(Method::Get),
        "HEAD" => Some(Method::Head),
        _ => None,
    };
    let (response, delay) = match method.map(|m| store.respond(m, &uri)) {
        Some(Ok(found)) => found,
        Some(Err(_)) => (
            HttpResponse {
                status: 404,
                headers: Headers::new().with("X-Fixture-Miss", "1"),
                body: b"no fixture".to_vec(),
            },
            Duration::ZERO,
        ),
        None => (
            HttpResponse {
                status: 405,
                headers: Headers::new(),
                body: Vec::new(),
            },
            Duration::ZERO,
        ),
    };
    if !delay.is_zero() {
        std::thread::sleep(delay);
    }

    let mut out = stream;
    let mut head = format!(
        "HTTP/1.1 {} {}\r\n",
        response.status,
        reason(response.status)
    );
    for (name, value) in response.headers.iter() {
        if name.eq_ignore_ascii_case("content-length")
            || name.eq_ignore_ascii_case("transfer-encoding")
            || name.eq_ignore_ascii_case("connection")
        {
            continue;
        }
        head.push_str(&format!("{name}: {value}\r\n"));
    }
    head.push_str(&format!(
        "Content-Length: {}\r\nConnection: close\r\n\r\n",
        response.body.len()
    ));
    out.write_all(head.as_bytes())?;
    if method != Some(Method::Head) {
        out.write_all(&response.body)?;
    }
    out.flush()?;
    let finished = Instant::now();
    log.lock().unwrap().push(ServedRequest {
        method: method_text,
        uri,
        host,
        received,
        finished,
        status: response.status,
    });
    Ok(())
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        301 => "Moved Permanently",
        302 => "Found",
        303 => "See Other",
        307 => "Temporary Redirect",
        308 => "Permanent Redirect",
        404 => "Not Found",
        405 => "Method Not Allowed",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        501 => "Not Implemented",
        503 => "Service Unavailable",
        _ => "Status",
    }
}
