//! Wire-protocol tests for the Isabelle server client, driven by an
//! in-process fake server that speaks the documented framing: password
//! handshake, single-line and length-prefixed messages, and task-correlated
//! asynchronous replies.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::Mutex;

use sketchprove_core::checker::{
    wrap_theory, CheckRequest, Checker, CheckerConfig, IsabelleBackend, IsabelleConfig,
    VerdictStatus, WrapperConfig,
};
use sketchprove_core::sketch::build_sketch;
use sketchprove_core::syntax::{parse_proof, parse_theorem};

const PASSWORD: &str = "sesame-0000";

async fn send_line(writer: &Arc<Mutex<OwnedWriteHalf>>, frame: &str) {
    let mut w = writer.lock().await;
    w.write_all(frame.as_bytes()).await.unwrap();
    w.write_all(b"\n").await.unwrap();
}

/// Length-prefixed form: a digits line announcing the payload size.
async fn send_prefixed(writer: &Arc<Mutex<OwnedWriteHalf>>, frame: &str) {
    let mut w = writer.lock().await;
    w.write_all(format!("{}\n", frame.len()).as_bytes()).await.unwrap();
    w.write_all(frame.as_bytes()).await.unwrap();
}

async fn spawn_fake_server() -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        loop {
            let Ok((socket, _)) = listener.accept().await else { break };
            tokio::spawn(handle_connection(socket));
        }
    });
    addr
}

async fn handle_connection(socket: TcpStream) {
    let (read_half, write_half) = socket.into_split();
    let mut reader = BufReader::new(read_half);
    let writer = Arc::new(Mutex::new(write_half));

    let mut line = String::new();
    if reader.read_line(&mut line).await.unwrap_or(0) == 0 || line.trim() != PASSWORD {
        return;
    }
    send_line(&writer, "OK {\"isabelle_id\": \"fake\", \"isabelle_name\": \"FakeIsabelle\"}").await;

    let tasks = Arc::new(AtomicU64::new(0));
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).await.unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim().to_string();
        if line.is_empty() {
            continue;
        }
        let (command, args) = match line.find(' ') {
            Some(at) => {
                let (c, a) = line.split_at(at);
                (c.to_string(), serde_json::from_str::<Value>(a.trim()).unwrap_or(Value::Null))
            }
            None => (line, Value::Null),
        };
        match command.as_str() {
            "session_start" => {
                let task = format!("task-{}", tasks.fetch_add(1, Ordering::SeqCst));
                send_line(&writer, &format!("OK {}", json!({ "task": task }))).await;
                // Exercise length-prefixed framing on the async reply.
                let finished = format!(
                    "FINISHED {}",
                    json!({ "session_id": "fake-session", "tmp_dir": "/tmp", "task": task })
                );
                send_prefixed(&writer, &finished).await;
            }
            "session_stop" => {
                let task = format!("task-{}", tasks.fetch_add(1, Ordering::SeqCst));
                send_line(&writer, &format!("OK {}", json!({ "task": task }))).await;
                send_line(&writer, &format!("FINISHED {}", json!({ "ok": true, "task": task })))
                    .await;
            }
            "purge_theories" => {
                send_line(&writer, &format!("OK {}", json!({ "purged": [] }))).await;
            }
            "use_theories" => {
                let task = format!("task-{}", tasks.fetch_add(1, Ordering::SeqCst));
                send_line(&writer, &format!("OK {}", json!({ "task": task }))).await;
                let master = args["master_dir"].as_str().unwrap_or("").to_string();
                let name = args["theories"][0].as_str().unwrap_or("").to_string();
                let content =
                    std::fs::read_to_string(format!("{master}/{name}.thy")).unwrap_or_default();
                let writer = writer.clone();
                // Respond out of band so concurrent tasks interleave.
                tokio::spawn(async move {
                    respond_use_theories(writer, task, content).await;
                });
            }
            _ => {
                send_line(&writer, &format!("ERROR {}", json!({ "message": "unknown command" })))
                    .await;
            }
        }
    }
}

async fn respond_use_theories(writer: Arc<Mutex<OwnedWriteHalf>>, task: String, content: String) {
    if content.contains("(*hang*)") {
        return; // watchdog territory
    }
    if let Some(ms) = content
        .split("(*delay:")
        .nth(1)
        .and_then(|rest| rest.split("*)").next())
        .and_then(|d| d.parse::<u64>().ok())
    {
        tokio::time::sleep(Duration::from_millis(ms)).await;
    }
    if content.contains("sledgehammer") {
        let note = json!({
            "kind": "writeln",
            "message": "Sledgehammer: \"cvc4\"\nTry this: by simp (2 ms)",
            "task": task,
        });
        send_line(&writer, &format!("NOTE {note}")).await;
        let note = json!({
            "kind": "writeln",
            "message": "Try this: by (metis append_Nil) (15 ms)",
            "task": task,
        });
        send_line(&writer, &format!("NOTE {note}")).await;
    }
    let finished = if content.contains("by wrong") {
        json!({
            "ok": false,
            "errors": [{
                "kind": "error",
                "message": "Failed to apply initial proof method",
                "pos": { "offset": 99, "line": 3 },
            }],
            "nodes": [],
            "task": task,
        })
    } else {
        json!({
            "ok": true,
            "errors": [],
            "nodes": [{ "status": { "ok": true, "finished": true }, "messages": [] }],
            "task": task,
        })
    };
    // Long replies go length-prefixed, as the real server does.
    send_prefixed(&writer, &format!("FINISHED {finished}")).await;
}

async fn backend_for(addr: std::net::SocketAddr) -> Arc<IsabelleBackend> {
    let cfg = IsabelleConfig::from_server_info(
        &format!("server \"fake\" = 127.0.0.1:{} (password \"{}\")", addr.port(), PASSWORD),
        "HOL",
    )
    .unwrap();
    Arc::new(IsabelleBackend::new(cfg).unwrap())
}

fn doc_for(proof: &str) -> String {
    let thm = parse_theorem("theorem list_reverse: \"rev (rev xs) = xs\"").unwrap();
    wrap_theory(&thm, &parse_proof(proof).unwrap(), &WrapperConfig::default())
}

fn checker_with(backend: Arc<IsabelleBackend>, grace: Duration) -> Checker {
    Checker::new(backend, CheckerConfig { pool: 8, grace, ..CheckerConfig::default() })
}

#[tokio::test]
async fn handshake_session_and_valid_check() {
    let addr = spawn_fake_server().await;
    let checker = checker_with(backend_for(addr).await, Duration::from_secs(5));
    let verdict = checker
        .check(CheckRequest::new(doc_for("by simp"), Duration::from_secs(10)).unwrap())
        .await;
    assert_eq!(verdict.status, VerdictStatus::Valid);
}

#[tokio::test]
async fn invalid_check_carries_message_and_position() {
    let addr = spawn_fake_server().await;
    let checker = checker_with(backend_for(addr).await, Duration::from_secs(5));
    let verdict = checker
        .check(CheckRequest::new(doc_for("by wrong"), Duration::from_secs(10)).unwrap())
        .await;
    match verdict.status {
        VerdictStatus::Invalid { message, position } => {
            assert!(message.contains("Failed to apply"));
            assert_eq!(position, Some(99));
        }
        other => panic!("expected invalid, got {other:?}"),
    }
}

#[tokio::test]
async fn watchdog_times_out_hanging_check() {
    let addr = spawn_fake_server().await;
    let checker = checker_with(backend_for(addr).await, Duration::from_millis(200));
    let doc = doc_for("by simp").replace("by simp", "(*hang*) by simp");
    let verdict = checker.check(CheckRequest::new(doc, Duration::from_millis(300)).unwrap()).await;
    assert_eq!(verdict.status, VerdictStatus::Timeout);
    assert!(verdict.elapsed <= Duration::from_millis(500));
}

#[tokio::test]
async fn concurrent_checks_correlate_by_task() {
    let addr = spawn_fake_server().await;
    let checker = checker_with(backend_for(addr).await, Duration::from_secs(5));
    // The failing check finishes late; a swap of correlated replies would
    // flip the verdicts.
    let slow_invalid = doc_for("by wrong").replace("by wrong", "(*delay:300*) by wrong");
    let fast_valid = doc_for("by simp");
    let (a, b) = tokio::join!(
        checker.check(CheckRequest::new(slow_invalid, Duration::from_secs(10)).unwrap()),
        checker.check(CheckRequest::new(fast_valid, Duration::from_secs(10)).unwrap()),
    );
    assert!(matches!(a.status, VerdictStatus::Invalid { .. }), "slow doc: {:?}", a.status);
    assert_eq!(b.status, VerdictStatus::Valid);
    assert!(b.elapsed < a.elapsed);
}

#[tokio::test]
async fn hammer_probe_parses_suggestions() {
    let addr = spawn_fake_server().await;
    let checker = checker_with(backend_for(addr).await, Duration::from_secs(5));
    let thm = parse_theorem("theorem app_Nil: \"[] @ xs = xs\"").unwrap();
    let sketch = build_sketch(&parse_proof("by simp").unwrap());
    let suggestions = checker
        .sledgehammer_probe(&thm, &sketch, 0, &WrapperConfig::default(), Duration::from_secs(10))
        .await
        .unwrap();
    let texts: Vec<&str> = suggestions.iter().map(|t| t.text.as_str()).collect();
    assert_eq!(texts, vec!["by simp", "by (metis append_Nil)"]);
    assert!(suggestions
        .iter()
        .all(|t| t.source == sketchprove_core::model::TacticSource::Sledgehammer));
}

#[tokio::test]
async fn restart_reestablishes_the_session() {
    let addr = spawn_fake_server().await;
    let backend = backend_for(addr).await;
    let checker = checker_with(backend.clone(), Duration::from_secs(5));
    let verdict = checker
        .check(CheckRequest::new(doc_for("by simp"), Duration::from_secs(10)).unwrap())
        .await;
    assert_eq!(verdict.status, VerdictStatus::Valid);

    checker.restart().await.unwrap();
    let verdict = checker
        .check(CheckRequest::new(doc_for("by simp"), Duration::from_secs(10)).unwrap())
        .await;
    assert_eq!(verdict.status, VerdictStatus::Valid);
}

#[tokio::test]
async fn bad_password_is_a_protocol_error() {
    let addr = spawn_fake_server().await;
    let cfg = IsabelleConfig {
        address: "127.0.0.1".to_string(),
        port: addr.port(),
        password: "wrong".to_string(),
        session: "HOL".to_string(),
    };
    let backend = Arc::new(IsabelleBackend::new(cfg).unwrap());
    let checker = checker_with(backend, Duration::from_secs(1));
    let verdict =
        checker.check(CheckRequest::new(doc_for("by simp"), Duration::from_secs(2)).unwrap()).await;
    assert!(matches!(verdict.status, VerdictStatus::CheckerError { .. }));
}
