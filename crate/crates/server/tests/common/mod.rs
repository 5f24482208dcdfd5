#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use smartbullets::classifier::{init_model, ModelConfig, TrainedModel};
use smartbullets::{Lexicon, StopwordSet, Vocabulary};
use smartbullets_server::LoadedModel;

/// Untrained but fixed model over a handful of tokens; enough to produce
/// mixed masks deterministically.
pub fn tiny_model() -> TrainedModel {
    let vocab = Vocabulary::from_tokens([
        "好看", "垃圾", "哈哈哈", "白痴", "支持", "废物", "加油", "恶心", "abc", "233",
    ]);
    let mut cfg = ModelConfig::new(vocab.len());
    cfg.embed_dim = 8;
    cfg.feature_maps = 6;
    cfg.max_len = 12;
    cfg.seed = 11;
    TrainedModel {
        params: init_model(&cfg).unwrap(),
        vocab,
    }
}

pub fn tiny_loaded() -> LoadedModel {
    LoadedModel::from_bytes(
        &tiny_model().to_json_bytes(),
        Lexicon::bundled(),
        StopwordSet::bundled(),
    )
    .unwrap()
}

/// Distinct, mixed comments for request `r`.
pub fn comments_for(r: usize, n: usize) -> Vec<String> {
    const PARTS: [&str; 8] = ["好看", "垃圾", "哈哈哈", "白痴", "支持", "废物", "加油", "恶心"];
    (0..n)
        .map(|i| {
            let k = r * 31 + i * 7;
            format!("{}{}{}", PARTS[k % 8], PARTS[(k / 8) % 8], r * 1000 + i)
        })
        .collect()
}

pub struct RawResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl RawResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap()
    }
}

pub fn connect(addr: SocketAddr) -> TcpStream {
    let s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
    s
}

/// Writes the request head and the first `sent` bytes of `body`.
pub fn send_partial(stream: &mut TcpStream, method: &str, path: &str, body: &[u8], sent: usize) {
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: test\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).unwrap();
    stream.write_all(&body[..sent]).unwrap();
    stream.flush().unwrap();
}

pub fn read_response(stream: &mut TcpStream) -> RawResponse {
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").expect("complete response head");
    let mut lines = head.split("\r\n");
    let status = lines.next().unwrap().split(' ').nth(1).unwrap().parse().unwrap();
    let headers = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    RawResponse {
        status,
        headers,
        body: body.to_string(),
    }
}

pub fn request(addr: SocketAddr, method: &str, path: &str, body: &[u8]) -> RawResponse {
    let mut s = connect(addr);
    send_partial(&mut s, method, path, body, body.len());
    read_response(&mut s)
}

pub fn post_filter(addr: SocketAddr, comments: &[String]) -> RawResponse {
    let body = serde_json::to_vec(&serde_json::json!({ "comments": comments })).unwrap();
    request(addr, "POST", "/v1/filter", &body)
}

/// A server on its own runtime thread, bound to an ephemeral port.
pub struct TestServer {
    pub addr: SocketAddr,
    pub state: smartbullets_server::AppState,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl TestServer {
    pub fn start(state: smartbullets_server::AppState, timeout: Duration) -> Self {
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let st = state.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(4)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let server = smartbullets_server::Server::bind_with_state(
                    "127.0.0.1:0".parse().unwrap(),
                    st,
                    timeout,
                )
                .await
                .unwrap();
                addr_tx.send(server.local_addr().unwrap()).unwrap();
                server
                    .run_until(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        }
    }

    pub fn trigger_shutdown(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }

    /// Signals shutdown and waits for the serve loop to return.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.trigger_shutdown();
        self.thread.take().unwrap().join().unwrap()
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.trigger_shutdown();
    }
}
