//! Deterministic simulated embedding server.
//!
//! A minimal HTTP/1.1 server speaking exactly the remote wire format,
//! with a per-request behavior script for fault injection (429s, 5xx,
//! hangs, wrong dimensions, short responses, malformed bodies) and full
//! request recording (arrival times, auth headers, payload sizes). The
//! remote-client contract tests and the acceptance suite drive the real
//! client against this server instead of any external API.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use xxhash_rust::xxh64::xxh64;

/// Scripted behavior for one request, by arrival order. Requests past the
/// end of the script succeed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimBehavior {
    Ok,
    /// Respond with this HTTP status and an empty JSON body.
    Status(u16),
    /// Respond 200 but with vectors of the wrong dimension.
    WrongDim,
    /// Respond 200 with one embedding missing.
    ShortResponse,
    /// Respond 200 with a body that is not valid JSON.
    Malformed,
    /// Sleep before answering; pair with a short client timeout to
    /// simulate a hung upstream.
    Hang(Duration),
}

/// One recorded request.
#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub arrived: Instant,
    pub auth: Option<String>,
    pub model: String,
    pub input_len: usize,
}

#[derive(Deserialize)]
struct WireRequest {
    model: String,
    input: Vec<String>,
}

struct SimState {
    dim: usize,
    behaviors: Mutex<Vec<SimBehavior>>,
    counter: AtomicUsize,
    requests: Mutex<Vec<RecordedRequest>>,
    shutdown: AtomicBool,
}

/// Handle to a running simulated server. Dropping it stops the listener.
pub struct SimServer {
    endpoint: String,
    state: Arc<SimState>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
}

impl SimServer {
    /// Start on an ephemeral localhost port.
    pub fn start(dim: usize, behaviors: Vec<SimBehavior>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(SimState {
            dim,
            behaviors: Mutex::new(behaviors),
            counter: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
            shutdown: AtomicBool::new(false),
        });
        let accept_state = Arc::clone(&state);
        let accept_thread = std::thread::spawn(move || {
            while !accept_state.shutdown.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        // Timestamp at accept: the closest observable moment
                        // to the client's request start, before any
                        // server-side parsing or scheduling can skew it.
                        let accepted = Instant::now();
                        let conn_state = Arc::clone(&accept_state);
                        std::thread::spawn(move || handle_connection(stream, conn_state, accepted));
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(SimServer {
            endpoint: format!("http://{addr}/v1/embeddings"),
            state,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Recorded requests sorted by arrival time. (Handler threads may
    /// record out of order under load.)
    pub fn requests(&self) -> Vec<RecordedRequest> {
        let mut requests = self.state.requests.lock().expect("sim lock").clone();
        requests.sort_by_key(|r| r.arrived);
        requests
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.lock().expect("sim lock").len()
    }

    /// Largest number of request arrivals inside any sliding window.
    pub fn max_arrivals_in_window(&self, window: Duration) -> usize {
        let requests = self.requests();
        let mut max = 0;
        for (i, r) in requests.iter().enumerate() {
            let count = requests[i..]
                .iter()
                .take_while(|s| s.arrived.duration_since(r.arrived) < window)
                .count();
            max = max.max(count);
        }
        max
    }

    /// Gaps between consecutive request arrivals, for backoff assertions.
    pub fn arrival_gaps(&self) -> Vec<Duration> {
        let requests = self.requests();
        requests
            .windows(2)
            .map(|w| w[1].arrived.duration_since(w[0].arrived))
            .collect()
    }

    /// The deterministic vector this server produces for a text.
    pub fn expected_vector(dim: usize, text: &str) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(xxh64(text.as_bytes(), 0x51E)); // sim-server tag
        (0..dim)
            .map(|_| ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) as f32)
            .collect()
    }
}

impl Drop for SimServer {
    fn drop(&mut self) {
        self.state.shutdown.store(true, Ordering::Relaxed);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

fn handle_connection(stream: TcpStream, state: Arc<SimState>, accepted: Instant) {
    let _ = stream.set_nodelay(true);
    let _ = serve_one(stream, &state, accepted);
}

fn serve_one(mut stream: TcpStream, state: &SimState, accepted: Instant) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    if request_line.is_empty() {
        return Ok(());
    }

    let mut auth = None;
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            let value = value.trim();
            match name.to_ascii_lowercase().as_str() {
                "authorization" => auth = Some(value.to_string()),
                "content-length" => content_length = value.parse().unwrap_or(0),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let parsed: Result<WireRequest, _> = serde_json::from_slice(&body);
    let (model, input) = match parsed {
        Ok(req) => (req.model, req.input),
        Err(_) => {
            return respond(&mut stream, 400, "{\"error\":\"bad request body\"}");
        }
    };

    let index = state.counter.fetch_add(1, Ordering::SeqCst);
    state
        .requests
        .lock()
        .expect("sim lock")
        .push(RecordedRequest {
            arrived: accepted,
            auth,
            model,
            input_len: input.len(),
        });

    let behavior = {
        let behaviors = state.behaviors.lock().expect("sim lock");
        behaviors.get(index).copied().unwrap_or(SimBehavior::Ok)
    };

    match behavior {
        SimBehavior::Status(code) => respond(&mut stream, code, "{}"),
        SimBehavior::Malformed => respond(&mut stream, 200, "this is not json {"),
        SimBehavior::Hang(delay) => {
            std::thread::sleep(delay);
            respond_embeddings(&mut stream, state.dim, &input, usize::MAX, false)
        }
        SimBehavior::WrongDim => {
            respond_embeddings(&mut stream, state.dim, &input, usize::MAX, true)
        }
        SimBehavior::ShortResponse => respond_embeddings(
            &mut stream,
            state.dim,
            &input,
            input.len().saturating_sub(1),
            false,
        ),
        SimBehavior::Ok => respond_embeddings(&mut stream, state.dim, &input, usize::MAX, false),
    }
}

fn respond_embeddings(
    stream: &mut TcpStream,
    dim: usize,
    input: &[String],
    take: usize,
    wrong_dim: bool,
) -> std::io::Result<()> {
    let dim = if wrong_dim { dim + 1 } else { dim };
    let mut rows = Vec::with_capacity(input.len());
    // Responses are deliberately emitted in reverse index order: the
    // client contract says index-sorted on receipt.
    for (i, text) in input.iter().enumerate().take(take.min(input.len())) {
        rows.push(serde_json::json!({
            "index": i,
            "embedding": SimServer::expected_vector(dim, text),
        }));
    }
    rows.reverse();
    let body = serde_json::json!({ "data": rows }).to_string();
    respond(stream, 200, &body)
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Other",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}
