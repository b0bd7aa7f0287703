//! Local-model subprocess adapter.
//!
//! The adapter spawns the configured command once and speaks a JSON-lines
//! protocol over its pipes: one `{"id": ..., "text": ...}` request per
//! line on stdin, one `{"id": ..., "vec": [...]}` response per line on
//! stdout. Responses may arrive in any order within a batch; the adapter
//! reassembles them by id. This keeps any local model runtime fully
//! decoupled from the pipeline; a reference echo-style adapter script
//! ships under `scripts/` for testing.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::model::EmbeddingVector;

use super::{EmbedBackend, EmbedError, SubprocessConfig};

#[derive(Serialize)]
struct WireRequest<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    id: String,
    vec: Vec<f32>,
}

struct Pipes {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// Backend that delegates to a child process over the line protocol.
/// Batches serialize through a mutex; the child sees one batch at a time.
pub struct SubprocessBackend {
    cfg: SubprocessConfig,
    model_id: String,
    pipes: Mutex<Pipes>,
}

impl SubprocessBackend {
    pub fn spawn(cfg: SubprocessConfig) -> Result<Self, EmbedError> {
        if cfg.command.is_empty() {
            return Err(EmbedError::Config("subprocess command is empty".into()));
        }
        if cfg.dim == 0 {
            return Err(EmbedError::Config("subprocess dim must be positive".into()));
        }
        let mut child = Command::new(&cfg.command[0])
            .args(&cfg.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| EmbedError::Config(format!("cannot spawn {:?}: {e}", cfg.command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let model_id = cfg
            .model_id
            .clone()
            .unwrap_or_else(|| format!("subprocess:{}", cfg.command[0]));
        Ok(SubprocessBackend {
            cfg,
            model_id,
            pipes: Mutex::new(Pipes {
                child,
                stdin: Some(stdin),
                stdout,
            }),
        })
    }
}

impl EmbedBackend for SubprocessBackend {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed_batch(
        &self,
        items: &[(String, String)],
    ) -> Result<Vec<(String, EmbeddingVector)>, EmbedError> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let mut pipes = self.pipes.lock().expect("subprocess lock");

        // Serialize the whole batch up front and write it from a helper
        // thread so a child that answers incrementally cannot deadlock us
        // on a full pipe.
        let mut payload = String::new();
        for (key, text) in items {
            let line = serde_json::to_string(&WireRequest { id: key, text })
                .map_err(|e| EmbedError::Protocol(format!("request encode: {e}")))?;
            payload.push_str(&line);
            payload.push('\n');
        }
        let mut stdin = pipes
            .stdin
            .take()
            .ok_or_else(|| EmbedError::Protocol("child stdin already closed".into()))?;
        let writer = std::thread::spawn(move || -> (ChildStdin, std::io::Result<()>) {
            let result = stdin
                .write_all(payload.as_bytes())
                .and_then(|_| stdin.flush());
            (stdin, result)
        });

        let mut by_id: HashMap<String, Vec<f32>> = HashMap::new();
        let mut line = String::new();
        while by_id.len() < items.len() {
            line.clear();
            let n = pipes.stdout.read_line(&mut line)?;
            if n == 0 {
                // Child closed stdout before answering the whole batch.
                let _ = writer.join();
                return Err(EmbedError::PartialBatch {
                    requested: items.len(),
                    received: by_id.len(),
                });
            }
            if line.trim().is_empty() {
                continue;
            }
            let resp: WireResponse = serde_json::from_str(&line)
                .map_err(|e| EmbedError::Protocol(format!("response decode: {e}")))?;
            if resp.vec.len() != self.cfg.dim {
                return Err(EmbedError::DimMismatch {
                    expected: self.cfg.dim,
                    got: resp.vec.len(),
                });
            }
            if by_id.insert(resp.id.clone(), resp.vec).is_some() {
                return Err(EmbedError::Protocol(format!(
                    "duplicate response id {:?}",
                    resp.id
                )));
            }
        }
        let (stdin, write_result) = writer
            .join()
            .map_err(|_| EmbedError::Protocol("request writer thread panicked".into()))?;
        write_result?;
        pipes.stdin = Some(stdin);

        items
            .iter()
            .map(|(key, _)| {
                let values = by_id
                    .remove(key)
                    .ok_or_else(|| EmbedError::Protocol(format!("no response for id {key:?}")))?;
                let vector = EmbeddingVector::new(values, self.model_id.clone())
                    .map_err(|e| EmbedError::Protocol(format!("non-finite embedding: {e}")))?;
                Ok((key.clone(), vector))
            })
            .collect()
    }
}

impl Drop for SubprocessBackend {
    fn drop(&mut self) {
        if let Ok(mut pipes) = self.pipes.lock() {
            pipes.stdin.take(); // close stdin so a well-behaved child exits
            let _ = pipes.child.kill();
            let _ = pipes.child.wait();
        }
    }
}
