#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// What the mock server does with the n-th request.
#[derive(Debug, Clone)]
pub enum Reply {
    Json(u16, String),
    Stall(Duration),
}

/// One-request-per-connection HTTP server replaying `replies` in order and
/// recording every request body.
pub struct MockServer {
    pub url: String,
    pub bodies: Arc<Mutex<Vec<String>>>,
}

pub fn mock_server(replies: Vec<Reply>) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = bodies.clone();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            seen.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
            let reply = replies.get(i).cloned().unwrap_or(Reply::Json(500, "{}".into()));
            match reply {
                Reply::Json(status, text) => {
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                        text.len()
                    );
                }
                Reply::Stall(d) => thread::sleep(d),
            }
        }
    });
    MockServer { url, bodies }
}

pub fn chat_reply(content: &str) -> Reply {
    Reply::Json(200, serde_json::json!({ "choices": [{ "message": { "content": content } }] }).to_string())
}
