use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::codec::read_jsonl;
use crate::domain::Sample;
use crate::error::Result;

use super::error::AdapterError;

/// A signal-level detector treated as a black-box scorer.
pub trait ExpertAdapter: Send + Sync {
    fn expert_id(&self) -> &str;

    /// Raw fake-class probability for `sample`.
    fn score(&self, sample: &Sample) -> Result<f64, AdapterError>;

    /// True when a call may block on I/O; such calls are issued concurrently.
    fn is_remote(&self) -> bool {
        false
    }
}

/// Request body sent to HTTP and subprocess experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub sample_id: String,
    pub image_locator: Option<String>,
}

impl ScoreRequest {
    pub fn for_sample(sample: &Sample) -> Self {
        Self {
            sample_id: sample.id.clone(),
            image_locator: sample.image_locator.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScoreReply {
    score: f64,
}

fn check_reply(expert_id: &str, score: f64) -> Result<f64, AdapterError> {
    if score.is_finite() && (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(AdapterError::OutOfRange {
            expert_id: expert_id.to_string(),
            score,
        })
    }
}

fn parse_reply(expert_id: &str, text: &str) -> Result<f64, AdapterError> {
    let reply: ScoreReply = serde_json::from_str(text.trim()).map_err(|e| AdapterError::Malformed {
        expert_id: expert_id.to_string(),
        detail: e.to_string(),
    })?;
    check_reply(expert_id, reply.score)
}

/// One line of a replay manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub sample_id: String,
    pub expert_id: String,
    pub score: f64,
}

/// Scores looked up from a recorded table. Out-of-range entries are reported
/// when scored, never clipped.
#[derive(Debug, Clone)]
pub struct ReplayAdapter {
    expert_id: String,
    scores: HashMap<String, f64>,
}

impl ReplayAdapter {
    pub fn new(expert_id: impl Into<String>, scores: HashMap<String, f64>) -> Self {
        Self {
            expert_id: expert_id.into(),
            scores,
        }
    }

    /// Loads the records of `expert_id` from a replay manifest.
    pub fn from_manifest(expert_id: &str, path: &Path) -> Result<Self> {
        let records: Vec<ReplayRecord> = read_jsonl(path)?;
        let scores = records
            .into_iter()
            .filter(|r| r.expert_id == expert_id)
            .map(|r| (r.sample_id, r.score))
            .collect();
        Ok(Self::new(expert_id, scores))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl ExpertAdapter for ReplayAdapter {
    fn expert_id(&self) -> &str {
        &self.expert_id
    }

    fn score(&self, sample: &Sample) -> Result<f64, AdapterError> {
        let s = self
            .scores
            .get(&sample.id)
            .ok_or_else(|| AdapterError::UnknownSample {
                expert_id: self.expert_id.clone(),
                sample_id: sample.id.clone(),
            })?;
        check_reply(&self.expert_id, *s)
    }
}

/// Expert behind an HTTP endpoint: `POST {sample_id, image_locator}` returns
/// `{"score": x}`.
pub struct HttpAdapter {
    expert_id: String,
    endpoint: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl HttpAdapter {
    pub fn new(expert_id: impl Into<String>, endpoint: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            expert_id: expert_id.into(),
            endpoint: endpoint.into(),
            timeout,
            agent: ureq::Agent::new_with_config(config),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn map_error(&self, e: ureq::Error) -> AdapterError {
        let expert_id = self.expert_id.clone();
        match e {
            ureq::Error::Timeout(_) => AdapterError::Timeout {
                expert_id,
                timeout: self.timeout,
            },
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
                AdapterError::Timeout {
                    expert_id,
                    timeout: self.timeout,
                }
            }
            ureq::Error::Json(j) => AdapterError::Malformed {
                expert_id,
                detail: j.to_string(),
            },
            other => AdapterError::Unreachable {
                expert_id,
                detail: other.to_string(),
            },
        }
    }
}

impl ExpertAdapter for HttpAdapter {
    fn expert_id(&self) -> &str {
        &self.expert_id
    }

    fn score(&self, sample: &Sample) -> Result<f64, AdapterError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(ScoreRequest::for_sample(sample))
            .map_err(|e| self.map_error(e))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(AdapterError::Unreachable {
                expert_id: self.expert_id.clone(),
                detail: format!("HTTP status {status}"),
            });
        }
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| self.map_error(e))?;
        parse_reply(&self.expert_id, &body)
    }

    fn is_remote(&self) -> bool {
        true
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &[String]) -> std::io::Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| std::io::Error::other("empty command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Long-lived child process speaking one JSON request and one JSON reply per
/// line. A timed-out worker is killed and respawned on the next call.
pub struct SubprocessAdapter {
    expert_id: String,
    command: Vec<String>,
    timeout: Duration,
    worker: Mutex<Option<Worker>>,
}

impl SubprocessAdapter {
    pub fn new(expert_id: impl Into<String>, command: Vec<String>, timeout: Duration) -> Self {
        Self {
            expert_id: expert_id.into(),
            command,
            timeout,
            worker: Mutex::new(None),
        }
    }

    fn unreachable(&self, detail: impl ToString) -> AdapterError {
        AdapterError::Unreachable {
            expert_id: self.expert_id.clone(),
            detail: detail.to_string(),
        }
    }
}

impl ExpertAdapter for SubprocessAdapter {
    fn expert_id(&self) -> &str {
        &self.expert_id
    }

    fn score(&self, sample: &Sample) -> Result<f64, AdapterError> {
        let mut guard = self.worker.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(Worker::spawn(&self.command).map_err(|e| self.unreachable(e))?);
        }
        let worker = guard.as_mut().expect("worker present");
        let request = serde_json::to_string(&ScoreRequest::for_sample(sample))
            .map_err(|e| self.unreachable(e))?;
        let sent = writeln!(worker.stdin, "{request}").and_then(|_| worker.stdin.flush());
        if let Err(e) = sent {
            *guard = None;
            return Err(self.unreachable(e));
        }
        match worker.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => parse_reply(&self.expert_id, &line),
            Ok(Err(e)) => {
                *guard = None;
                Err(self.unreachable(e))
            }
            Err(RecvTimeoutError::Timeout) => {
                *guard = None;
                Err(AdapterError::Timeout {
                    expert_id: self.expert_id.clone(),
                    timeout: self.timeout,
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                *guard = None;
                Err(self.unreachable("process exited"))
            }
        }
    }

    fn is_remote(&self) -> bool {
        true
    }
}

/// Scores `sample` with every adapter. Remote calls run concurrently; results
/// come back in panel order.
pub fn score_panel(
    adapters: &[Box<dyn ExpertAdapter>],
    sample: &Sample,
) -> Vec<Result<f64, AdapterError>> {
    let remote = adapters.iter().filter(|a| a.is_remote()).count();
    if remote < 2 {
        return adapters.iter().map(|a| a.score(sample)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = adapters
            .iter()
            .map(|a| scope.spawn(move || a.score(sample)))
            .collect();
        handles
            .into_iter()
            .zip(adapters)
            .map(|(h, a)| {
                h.join().unwrap_or_else(|_| {
                    Err(AdapterError::Unreachable {
                        expert_id: a.expert_id().to_string(),
                        detail: "adapter panicked".into(),
                    })
                })
            })
            .collect()
    })
}
