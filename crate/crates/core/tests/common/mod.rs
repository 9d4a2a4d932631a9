#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use narrlens::embedding::EmbedderConfig;
use narrlens::evaluation::Averaging;
use narrlens::llm::ChatBackendConfig;
use narrlens::pipeline::{EvaluationConfig, PathsConfig, PipelineConfig};
use narrlens::classifier::{FocalLossParams, TrainingConfig};
use narrlens::corpus::Language;
use narrlens::retrieval::RetrievalConfig;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn mini_dir() -> PathBuf {
    data_dir().join("mini")
}

/// Offline config over the bundled mini-corpus, writing into `work`.
pub fn mini_config(work: &Path) -> PipelineConfig {
    PipelineConfig {
        paths: PathsConfig {
            taxonomy_cc: data_dir().join("taxonomy_cc.tsv"),
            taxonomy_urw: data_dir().join("taxonomy_urw.tsv"),
            articles: mini_dir().join("articles"),
            annotations: mini_dir().join("annotations.tsv"),
            models: work.join("models"),
            outputs: work.join("outputs"),
        },
        embedder: EmbedderConfig::default(),
        chat: ChatBackendConfig::default(),
        retrieval: RetrievalConfig::default(),
        training: TrainingConfig::default(),
        loss: FocalLossParams::default(),
        evaluation: EvaluationConfig {
            averaging: Averaging::Samples,
        },
        parallelism: 4,
        default_language: Language::En,
        offline: true,
    }
}

/// A captured request: headers (lower-cased names) and body.
#[derive(Debug, Clone)]
pub struct Captured {
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Captured {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

/// Serves one scripted `(status, body)` reply per connection, in order, then exits.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Captured>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(replies: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handle = std::thread::spawn(move || {
            for (status, body) in replies {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream);
                let mut headers = Vec::new();
                let mut len = 0usize;
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                loop {
                    line.clear();
                    reader.read_line(&mut line).unwrap();
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = l.split_once(':') {
                        let k = k.trim().to_ascii_lowercase();
                        if k == "content-length" {
                            len = v.trim().parse().unwrap();
                        }
                        headers.push((k, v.trim().to_string()));
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(Captured {
                    headers,
                    body: String::from_utf8(buf).unwrap(),
                });
                let mut stream = reader.into_inner();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
                let _ = stream.flush();
            }
        });
        MockServer {
            url,
            requests,
            handle: Some(handle),
        }
    }

    pub fn captured(&self) -> Vec<Captured> {
        self.requests.lock().unwrap().clone()
    }

    pub fn join(mut self) -> Vec<Captured> {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
        self.captured()
    }
}

pub fn chat_reply(content: &str) -> String {
    serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }).to_string()
}
