//! TCP client for the Isabelle server.
//!
//! Protocol: connect, send the password line, then exchange messages.
//! Messages are either a single line or length-prefixed (a line of decimal
//! digits giving the byte count of the payload that follows). Server replies
//! `OK`/`ERROR` synchronously in command order; asynchronous commands carry a
//! task id in the `OK` and emit `NOTE`/`FINISHED`/`FAILED` frames correlated
//! by that id, which is how concurrent checks on one connection stay
//! isolated.
//!
//! `use_theories` loads theory files from disk, so each check writes its
//! document into a scratch directory under a unique theory name.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot, Mutex};

use super::{CheckBackend, CheckRequest, CheckerError, HammerRequest, VerdictStatus};

#[derive(Debug, Clone, Deserialize)]
pub struct IsabelleConfig {
    pub address: String,
    pub port: u16,
    pub password: String,
    /// Session image to start, e.g. `HOL`.
    #[serde(default = "default_session")]
    pub session: String,
}

fn default_session() -> String {
    "HOL".to_string()
}

impl IsabelleConfig {
    /// Parse the line printed by `isabelle server`:
    /// `server "name" = 127.0.0.1:4711 (password "uuid")`.
    pub fn from_server_info(text: &str, session: &str) -> Result<Self, CheckerError> {
        let re = regex::Regex::new(r#"=\s*([A-Za-z0-9_.\-]+):(\d+)\s*\(password\s+"([^"]+)"\)"#)
            .expect("static regex");
        let caps = re
            .captures(text)
            .ok_or_else(|| CheckerError::Protocol("unrecognized server-info format".to_string()))?;
        Ok(IsabelleConfig {
            address: caps[1].to_string(),
            port: caps[2].parse().map_err(|_| {
                CheckerError::Protocol("server-info port is not a number".to_string())
            })?,
            password: caps[3].to_string(),
            session: session.to_string(),
        })
    }
}

/// One server frame: the leading keyword and its JSON argument.
#[derive(Debug, Clone)]
struct Frame {
    keyword: String,
    body: Value,
}

fn parse_frame(msg: &str) -> Frame {
    let msg = msg.trim_end();
    let split = msg.find([' ', '{', '[']);
    match split {
        Some(at) => {
            let (kw, rest) = msg.split_at(at);
            Frame {
                keyword: kw.trim().to_string(),
                body: serde_json::from_str(rest.trim()).unwrap_or(Value::Null),
            }
        }
        None => Frame { keyword: msg.to_string(), body: Value::Null },
    }
}

#[derive(Default)]
struct Router {
    /// Oneshot repliers for synchronous `OK`/`ERROR`, in command order.
    sync_queue: VecDeque<oneshot::Sender<Frame>>,
    /// Live channels per task id.
    tasks: HashMap<String, mpsc::UnboundedSender<Frame>>,
    /// Frames for tasks whose channel is not registered yet.
    orphans: HashMap<String, Vec<Frame>>,
    /// Tasks whose receiver went away; their frames are dropped.
    dead: HashSet<String>,
}

struct Connection {
    writer: Mutex<OwnedWriteHalf>,
    router: Arc<std::sync::Mutex<Router>>,
}

impl Connection {
    async fn open(cfg: &IsabelleConfig) -> Result<Arc<Connection>, CheckerError> {
        let stream = TcpStream::connect((cfg.address.as_str(), cfg.port))
            .await
            .map_err(|e| CheckerError::Protocol(format!("connect: {e}")))?;
        let (read_half, mut write_half) = stream.into_split();

        write_half
            .write_all(format!("{}\n", cfg.password).as_bytes())
            .await
            .map_err(|e| CheckerError::Protocol(format!("handshake write: {e}")))?;

        let router = Arc::new(std::sync::Mutex::new(Router::default()));
        let conn = Arc::new(Connection { writer: Mutex::new(write_half), router: router.clone() });

        let mut reader = BufReader::new(read_half);
        let greeting = read_message(&mut reader)
            .await
            .map_err(|e| CheckerError::Protocol(format!("handshake read: {e}")))?
            .ok_or_else(|| CheckerError::Protocol("server closed during handshake".to_string()))?;
        let frame = parse_frame(&greeting);
        if frame.keyword != "OK" {
            return Err(CheckerError::Protocol(format!(
                "handshake rejected: {} {}",
                frame.keyword, frame.body
            )));
        }

        tokio::spawn(read_loop(reader, router));
        Ok(conn)
    }

    /// Send a command and await its synchronous `OK`/`ERROR` reply.
    async fn command(&self, name: &str, args: Value) -> Result<Frame, CheckerError> {
        let (tx, rx) = oneshot::channel();
        {
            // Queue the replier and write under the same writer lock so reply
            // order matches command order.
            let mut writer = self.writer.lock().await;
            self.router.lock().expect("router lock").sync_queue.push_back(tx);
            let line = format!("{name} {args}\n");
            writer
                .write_all(line.as_bytes())
                .await
                .map_err(|e| CheckerError::Protocol(format!("write: {e}")))?;
        }
        let frame = rx
            .await
            .map_err(|_| CheckerError::Protocol("connection closed awaiting reply".to_string()))?;
        if frame.keyword == "ERROR" {
            return Err(CheckerError::Protocol(format!("server error: {}", frame.body)));
        }
        Ok(frame)
    }

    /// Issue an asynchronous command; returns the task id and its frame
    /// stream (orphans delivered first).
    async fn command_async(
        &self,
        name: &str,
        args: Value,
    ) -> Result<(String, mpsc::UnboundedReceiver<Frame>), CheckerError> {
        let ok = self.command(name, args).await?;
        let task = ok
            .body
            .get("task")
            .and_then(Value::as_str)
            .ok_or_else(|| CheckerError::Protocol(format!("OK without task id: {}", ok.body)))?
            .to_string();
        let (tx, rx) = mpsc::unbounded_channel();
        {
            let mut router = self.router.lock().expect("router lock");
            if let Some(buffered) = router.orphans.remove(&task) {
                for frame in buffered {
                    let _ = tx.send(frame);
                }
            }
            router.tasks.insert(task.clone(), tx);
        }
        Ok((task, rx))
    }

    fn finish_task(&self, task: &str) {
        let mut router = self.router.lock().expect("router lock");
        router.tasks.remove(task);
        router.orphans.remove(task);
        router.dead.insert(task.to_string());
    }
}

async fn read_loop(mut reader: BufReader<OwnedReadHalf>, router: Arc<std::sync::Mutex<Router>>) {
    loop {
        let msg = match read_message(&mut reader).await {
            Ok(Some(m)) => m,
            Ok(None) | Err(_) => break,
        };
        if msg.trim().is_empty() {
            continue;
        }
        let frame = parse_frame(&msg);
        let task = frame.body.get("task").and_then(Value::as_str).map(str::to_string);
        let mut router = router.lock().expect("router lock");
        match frame.keyword.as_str() {
            "OK" | "ERROR" => {
                if let Some(tx) = router.sync_queue.pop_front() {
                    let _ = tx.send(frame);
                }
            }
            _ => {
                let Some(task) = task else { continue };
                if router.dead.contains(&task) {
                    continue;
                }
                match router.tasks.get(&task) {
                    Some(tx) => {
                        if tx.send(frame).is_err() {
                            router.tasks.remove(&task);
                            router.dead.insert(task);
                        }
                    }
                    None => {
                        let buf = router.orphans.entry(task).or_default();
                        if buf.len() < 1024 {
                            buf.push(frame);
                        }
                    }
                }
            }
        }
    }
    // Connection gone: fail everything outstanding.
    let mut router = router.lock().expect("router lock");
    router.sync_queue.clear();
    router.tasks.clear();
}

/// Read one message: a line of decimal digits announces a payload of that
/// many bytes; any other line is the message itself.
async fn read_message(
    reader: &mut BufReader<OwnedReadHalf>,
) -> Result<Option<String>, std::io::Error> {
    let mut line = String::new();
    let n = reader.read_line(&mut line).await?;
    if n == 0 {
        return Ok(None);
    }
    let trimmed = line.trim_end_matches(['\r', '\n']);
    if !trimmed.is_empty() && trimmed.bytes().all(|b| b.is_ascii_digit()) {
        let len: usize = trimmed.parse().expect("digits");
        let mut buf = vec![0u8; len];
        reader.read_exact(&mut buf).await?;
        Ok(Some(String::from_utf8_lossy(&buf).into_owned()))
    } else {
        Ok(Some(trimmed.to_string()))
    }
}

struct Session {
    conn: Arc<Connection>,
    session_id: String,
}

pub struct IsabelleBackend {
    cfg: IsabelleConfig,
    session: Mutex<Option<Session>>,
    work_dir: tempfile::TempDir,
    counter: AtomicU64,
}

impl IsabelleBackend {
    pub fn new(cfg: IsabelleConfig) -> Result<Self, CheckerError> {
        let work_dir =
            tempfile::tempdir().map_err(|e| CheckerError::Protocol(format!("scratch dir: {e}")))?;
        Ok(IsabelleBackend { cfg, session: Mutex::new(None), work_dir, counter: AtomicU64::new(0) })
    }

    async fn ensure_session(&self) -> Result<(Arc<Connection>, String), CheckerError> {
        let mut guard = self.session.lock().await;
        if let Some(s) = guard.as_ref() {
            return Ok((s.conn.clone(), s.session_id.clone()));
        }
        let conn = Connection::open(&self.cfg).await?;
        let (task, mut rx) =
            conn.command_async("session_start", json!({ "session": self.cfg.session })).await?;
        let session_id = loop {
            let Some(frame) = rx.recv().await else {
                conn.finish_task(&task);
                return Err(CheckerError::Protocol(
                    "connection closed during session_start".into(),
                ));
            };
            match frame.keyword.as_str() {
                "FINISHED" => {
                    break frame
                        .body
                        .get("session_id")
                        .and_then(Value::as_str)
                        .ok_or_else(|| {
                            CheckerError::Protocol("session_start without session_id".into())
                        })?
                        .to_string();
                }
                "FAILED" => {
                    conn.finish_task(&task);
                    return Err(CheckerError::Protocol(format!(
                        "session_start failed: {}",
                        frame.body
                    )));
                }
                _ => {}
            }
        };
        conn.finish_task(&task);
        *guard = Some(Session { conn: conn.clone(), session_id: session_id.clone() });
        Ok((conn, session_id))
    }

    /// Rewrite the theory header to a unique name and write the document into
    /// the scratch dir. Returns (theory name, file path).
    async fn stage_theory(&self, theory_text: &str) -> Result<(String, PathBuf), CheckerError> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let rest =
            theory_text.trim_start().strip_prefix("theory").ok_or(CheckerError::MalformedTheory)?;
        let base = rest.split_whitespace().next().ok_or(CheckerError::MalformedTheory)?.to_string();
        let unique = format!("{base}_{n}");
        let doc = theory_text.replacen(&format!("theory {base}"), &format!("theory {unique}"), 1);
        let path = self.work_dir.path().join(format!("{unique}.thy"));
        tokio::fs::write(&path, doc)
            .await
            .map_err(|e| CheckerError::Protocol(format!("write theory file: {e}")))?;
        Ok((unique, path))
    }

    /// Run `use_theories` on a staged document, collecting every frame's
    /// message strings along the way; returns (verdict, collected messages).
    async fn use_theory(
        &self,
        theory_text: &str,
        timeout_secs: u64,
    ) -> Result<(VerdictStatus, Vec<String>), CheckerError> {
        let (conn, session_id) = self.ensure_session().await?;
        let (name, path) = self.stage_theory(theory_text).await?;
        let args = json!({
            "session_id": session_id,
            "theories": [name],
            "master_dir": self.work_dir.path().to_string_lossy(),
            "watchdog_timeout": timeout_secs,
            "unicode_symbols": true,
        });
        let result = async {
            let (task, mut rx) = conn.command_async("use_theories", args).await?;
            let mut messages = Vec::new();
            let outcome = loop {
                let Some(frame) = rx.recv().await else {
                    conn.finish_task(&task);
                    return Err(CheckerError::Protocol(
                        "connection closed during use_theories".into(),
                    ));
                };
                match frame.keyword.as_str() {
                    "NOTE" => collect_messages(&frame.body, &mut messages),
                    "FINISHED" => {
                        collect_messages(&frame.body, &mut messages);
                        break interpret_finished(&frame.body);
                    }
                    "FAILED" => {
                        conn.finish_task(&task);
                        return Err(CheckerError::Protocol(format!(
                            "use_theories failed: {}",
                            frame.body
                        )));
                    }
                    _ => {}
                }
            };
            conn.finish_task(&task);
            Ok((outcome, messages))
        }
        .await;

        // Free server memory and the staged file regardless of outcome.
        let _ = conn
            .command(
                "purge_theories",
                json!({ "session_id": session_id, "theories": [path.file_stem().unwrap().to_string_lossy()] }),
            )
            .await;
        let _ = tokio::fs::remove_file(&path).await;
        result
    }
}

/// Pull message strings (`message` fields) out of NOTE/FINISHED bodies.
fn collect_messages(body: &Value, out: &mut Vec<String>) {
    match body {
        Value::Object(map) => {
            if let Some(Value::String(m)) = map.get("message") {
                out.push(m.clone());
            }
            for v in map.values() {
                collect_messages(v, out);
            }
        }
        Value::Array(items) => {
            for v in items {
                collect_messages(v, out);
            }
        }
        _ => {}
    }
}

/// Map a `use_theories` FINISHED body to a verdict. `ok: true` means the
/// document was fully processed without errors (`sorry` is tolerated by the
/// prover in this mode). `ok: false` with error messages is Invalid; without
/// any, the watchdog tripped before consolidation.
fn interpret_finished(body: &Value) -> VerdictStatus {
    let ok = body.get("ok").and_then(Value::as_bool).unwrap_or(false);
    if ok {
        return VerdictStatus::Valid;
    }
    let mut first_error: Option<(String, Option<usize>)> = None;
    let mut scan = |msg: &Value| {
        if first_error.is_some() {
            return;
        }
        if msg.get("kind").and_then(Value::as_str) == Some("error") {
            let text = msg.get("message").and_then(Value::as_str).unwrap_or("").to_string();
            let position = msg
                .get("pos")
                .and_then(|p| p.get("offset"))
                .and_then(Value::as_u64)
                .map(|o| o as usize);
            first_error = Some((text, position));
        }
    };
    if let Some(errors) = body.get("errors").and_then(Value::as_array) {
        for e in errors {
            scan(e);
        }
    }
    if let Some(nodes) = body.get("nodes").and_then(Value::as_array) {
        for node in nodes {
            if let Some(msgs) = node.get("messages").and_then(Value::as_array) {
                for m in msgs {
                    scan(m);
                }
            }
        }
    }
    match first_error {
        Some((message, position)) => VerdictStatus::Invalid { message, position },
        None => VerdictStatus::Timeout,
    }
}

/// Extract hammer suggestions from prover output lines: the text after
/// `Try this:`, with the trailing timing annotation stripped.
fn parse_hammer_suggestions(messages: &[String]) -> Vec<String> {
    let timing = regex::Regex::new(r"\s*\((?:>\s*)?[0-9.]+\s*m?s\)\s*$").expect("static regex");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for msg in messages {
        for line in msg.lines() {
            let Some(at) = line.find("Try this:") else { continue };
            let rest = &line[at + "Try this:".len()..];
            let suggestion = timing.replace(rest.trim(), "").trim().to_string();
            if !suggestion.is_empty() && seen.insert(suggestion.clone()) {
                out.push(suggestion);
            }
        }
    }
    out
}

#[async_trait]
impl CheckBackend for IsabelleBackend {
    async fn run_check(&self, req: &CheckRequest) -> Result<VerdictStatus, CheckerError> {
        let (verdict, _) = self.use_theory(&req.theory_text, req.timeout.as_secs().max(1)).await?;
        Ok(verdict)
    }

    async fn run_hammer(&self, req: &HammerRequest) -> Result<Vec<String>, CheckerError> {
        let (_, messages) = self.use_theory(&req.theory_text, req.timeout.as_secs().max(1)).await?;
        Ok(parse_hammer_suggestions(&messages))
    }

    async fn restart(&self) -> Result<(), CheckerError> {
        let mut guard = self.session.lock().await;
        if let Some(s) = guard.take() {
            let _ = s.conn.command("session_stop", json!({ "session_id": s.session_id })).await;
        }
        drop(guard);
        self.ensure_session().await.map(|_| ())
    }
}
