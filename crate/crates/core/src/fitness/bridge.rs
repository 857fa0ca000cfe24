//! Child-process bridge to an external trainer.
//!
//! Each evaluation is one request line on the child's stdin and one response
//! line on its stdout:
//!
//! ```text
//! -> {"id": 7, "epochs": 5, "plan": {"block_layer_counts": [6, 12, 24, 15], "frozen_prefix": 2, "se_layer_count": 3, "learning_rate": 0.1, "dropout": 0.1}}
//! <- {"id": 7, "avg_loss": 0.4213}
//! <- {"id": 7, "error": "CUDA out of memory"}
//! ```
//!
//! Children are long-lived; a pool of `pool_size` of them is spawned lazily
//! and each serves one request at a time.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Concurrency, FitnessEvaluator};
use crate::chromosome::ArchitecturePlan;
use crate::error::EvaluatorError;

const STDERR_CAPTURE_LIMIT: usize = 16 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerBridgeConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(with = "secs_f64", rename = "request_timeout_secs")]
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub pool_size: usize,
}

impl TrainerBridgeConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            request_timeout: Duration::from_secs(3600),
            max_retries: 1,
            pool_size: 1,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.command.is_empty() || self.command[0].is_empty() {
            return Err("command must name a program".into());
        }
        if self.request_timeout.is_zero() {
            return Err("request timeout must be positive".into());
        }
        if self.pool_size == 0 {
            return Err("pool_size must be at least 1".into());
        }
        Ok(())
    }
}

mod secs_f64 {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Request sent to the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerRequest {
    pub id: u64,
    pub epochs: u32,
    pub plan: ArchitecturePlan,
}

impl TrainerRequest {
    /// Wire form, newline included.
    pub fn to_line(&self) -> String {
        let p = &self.plan;
        let blocks = p
            .block_layer_counts
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "{{\"id\": {}, \"epochs\": {}, \"plan\": {{\"block_layer_counts\": [{}], \"frozen_prefix\": {}, \"se_layer_count\": {}, \"learning_rate\": {}, \"dropout\": {}}}}}\n",
            self.id,
            self.epochs,
            blocks,
            p.frozen_prefix,
            p.se_layer_count,
            json_float(p.learning_rate),
            json_float(p.dropout),
        )
    }
}

fn json_float(x: f64) -> String {
    serde_json::to_string(&x).expect("finite float")
}

/// Parsed trainer reply.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainerResponse {
    Loss { id: u64, avg_loss: f64 },
    Error { id: u64, message: String },
}

#[derive(Deserialize)]
struct RawResponse {
    id: u64,
    avg_loss: Option<f64>,
    error: Option<String>,
}

impl TrainerResponse {
    pub fn parse_line(line: &str) -> Option<Self> {
        let raw: RawResponse = serde_json::from_str(line.trim_end()).ok()?;
        match (raw.avg_loss, raw.error) {
            (Some(avg_loss), None) => Some(Self::Loss { id: raw.id, avg_loss }),
            (None, Some(message)) => Some(Self::Error { id: raw.id, message }),
            _ => None,
        }
    }

    pub fn id(&self) -> u64 {
        match self {
            Self::Loss { id, .. } | Self::Error { id, .. } => *id,
        }
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
    stderr_done: Receiver<()>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self, EvaluatorError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| EvaluatorError::Spawn {
                command: command.join(" "),
                message: e.to_string(),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });

        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let (done_tx, stderr_done) = mpsc::channel();
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().unwrap();
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > STDERR_CAPTURE_LIMIT {
                    let mut cut = s.len() - STDERR_CAPTURE_LIMIT;
                    while !s.is_char_boundary(cut) {
                        cut += 1;
                    }
                    s.drain(..cut);
                }
            }
            let _ = done_tx.send(());
        });

        Ok(Self {
            child,
            stdin,
            lines,
            stderr,
            stderr_done,
        })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Reaps an exited child and reports its status with captured stderr.
    fn exited(mut self) -> EvaluatorError {
        let status = match self.child.wait() {
            Ok(s) => s.to_string(),
            Err(e) => format!("unknown status: {e}"),
        };
        let _ = self.stderr_done.recv_timeout(Duration::from_millis(500));
        let stderr = self.stderr.lock().unwrap().trim().to_string();
        EvaluatorError::ChildExited { status, stderr }
    }
}

struct Pool {
    idle: Vec<Worker>,
    live: usize,
}

/// Evaluator that delegates training to external processes.
pub struct TrainerBridge {
    config: TrainerBridgeConfig,
    pool: Mutex<Pool>,
    available: Condvar,
    next_id: AtomicU64,
}

impl TrainerBridge {
    pub fn new(config: TrainerBridgeConfig) -> Result<Self, EvaluatorError> {
        config.validate().map_err(EvaluatorError::Other)?;
        Ok(Self {
            config,
            pool: Mutex::new(Pool {
                idle: Vec::new(),
                live: 0,
            }),
            available: Condvar::new(),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &TrainerBridgeConfig {
        &self.config
    }

    /// Takes an idle worker, or a slot to spawn one into (`None`).
    fn checkout(&self) -> Option<Worker> {
        let mut pool = self.pool.lock().unwrap();
        loop {
            if let Some(w) = pool.idle.pop() {
                return Some(w);
            }
            if pool.live < self.config.pool_size {
                pool.live += 1;
                return None;
            }
            pool = self.available.wait(pool).unwrap();
        }
    }

    fn checkin(&self, worker: Option<Worker>) {
        let mut pool = self.pool.lock().unwrap();
        match worker {
            Some(w) => pool.idle.push(w),
            None => pool.live -= 1,
        }
        self.available.notify_one();
    }

    fn exchange(&self, slot: &mut Option<Worker>, plan: &ArchitecturePlan, epochs: u32) -> Result<f64, EvaluatorError> {
        let attempts = self.config.max_retries + 1;
        let mut last_malformed = None;
        for _ in 0..attempts {
            let worker = match slot {
                Some(w) => w,
                None => slot.insert(Worker::spawn(&self.config.command)?),
            };
            let deadline = Instant::now() + self.config.request_timeout;
            let id = self.next_id.fetch_add(1, Ordering::Relaxed);
            let line = TrainerRequest {
                id,
                epochs,
                plan: plan.clone(),
            }
            .to_line();
            if worker
                .stdin
                .write_all(line.as_bytes())
                .and_then(|_| worker.stdin.flush())
                .is_err()
            {
                return Err(slot.take().unwrap().exited());
            }
            let timeout = deadline.saturating_duration_since(Instant::now());
            match worker.lines.recv_timeout(timeout) {
                Ok(Ok(raw)) => match TrainerResponse::parse_line(&raw) {
                    Some(resp) if resp.id() == id => {
                        return match resp {
                            TrainerResponse::Loss { avg_loss, .. } => Ok(avg_loss),
                            TrainerResponse::Error { message, .. } => Err(EvaluatorError::Trainer(message)),
                        };
                    }
                    _ => last_malformed = Some(raw.trim_end().to_string()),
                },
                Ok(Err(e)) => {
                    slot.take().unwrap().kill();
                    return Err(EvaluatorError::Io(e.to_string()));
                }
                Err(RecvTimeoutError::Timeout) => {
                    slot.take().unwrap().kill();
                    last_malformed = None;
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(slot.take().unwrap().exited());
                }
            }
        }
        Err(match last_malformed {
            Some(raw) => EvaluatorError::MalformedResponse { raw },
            None => EvaluatorError::Timeout { attempts },
        })
    }
}

impl FitnessEvaluator for TrainerBridge {
    fn evaluate(&self, plan: &ArchitecturePlan, epochs: u32) -> Result<f64, EvaluatorError> {
        let mut slot = self.checkout();
        let result = self.exchange(&mut slot, plan, epochs);
        self.checkin(slot);
        result
    }

    fn concurrency(&self) -> Concurrency {
        if self.config.pool_size > 1 {
            Concurrency::Concurrent {
                max_in_flight: self.config.pool_size,
            }
        } else {
            Concurrency::Serial
        }
    }
}

impl Drop for TrainerBridge {
    fn drop(&mut self) {
        if let Ok(pool) = self.pool.get_mut() {
            for w in pool.idle.drain(..) {
                w.kill();
            }
        }
    }
}
