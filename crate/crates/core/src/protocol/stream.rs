//! Line-framed transport to an external trainer.
//!
//! One writer, one background reader. Requests register a one-shot channel
//! under their `request_id`; the reader routes each decoded response to the
//! matching channel. Malformed lines are logged and skipped (framing
//! resynchronizes at the next newline); responses with no pending request
//! (duplicates, late replies to timed-out attempts) are dropped.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;

use super::{
    decode_response, encode_request, EndpointKind, EndpointSettings, EvalJob, EvaluateResponse,
    Status, Trainer, TrainerError,
};

type Pending = Arc<Mutex<HashMap<String, SyncSender<EvaluateResponse>>>>;

/// Counters for anomalies seen on the response stream.
#[derive(Debug, Default)]
pub struct StreamStats {
    pub malformed: AtomicU64,
    pub unmatched: AtomicU64,
    pub delivered: AtomicU64,
}

/// Counting gate limiting in-flight requests to the endpoint capacity.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

pub struct StreamTrainer {
    settings: EndpointSettings,
    kind: EndpointKind,
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    closed: Arc<AtomicBool>,
    stats: Arc<StreamStats>,
    gate: Gate,
}

impl StreamTrainer {
    pub fn new<R, W>(reader: R, writer: W, settings: EndpointSettings) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::with_kind(reader, writer, settings, EndpointKind::ExternalProcess)
    }

    fn with_kind<R, W>(reader: R, writer: W, settings: EndpointSettings, kind: EndpointKind) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let pending: Pending = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(StreamStats::default());
        {
            let pending = Arc::clone(&pending);
            let closed = Arc::clone(&closed);
            let stats = Arc::clone(&stats);
            thread::Builder::new()
                .name("trainer-reader".into())
                .spawn(move || read_loop(reader, &pending, &closed, &stats))
                .expect("spawn reader thread");
        }
        let capacity = settings.capacity.max(1);
        Self {
            settings,
            kind,
            writer: Mutex::new(Box::new(writer)),
            pending,
            closed,
            stats,
            gate: Gate {
                free: Mutex::new(capacity),
                cv: Condvar::new(),
            },
        }
    }

    pub fn stats(&self) -> &StreamStats {
        &self.stats
    }

    fn round_trip(&self, job: &EvalJob<'_>) -> Result<EvaluateResponse, TrainerError> {
        let req = job.request;
        let line = encode_request(req)?;
        if self.closed.load(Ordering::SeqCst) {
            return Err(TrainerError::Disconnected("response stream closed".into()));
        }
        let (tx, rx) = mpsc::sync_channel(1);
        {
            let mut pending = self.pending.lock().unwrap();
            pending.insert(req.request_id.clone(), tx);
        }
        if self.closed.load(Ordering::SeqCst) {
            self.pending.lock().unwrap().remove(&req.request_id);
            return Err(TrainerError::Disconnected("response stream closed".into()));
        }
        let written = {
            let mut w = self.writer.lock().unwrap();
            w.write_all(&line).and_then(|()| w.flush())
        };
        if let Err(e) = written {
            self.pending.lock().unwrap().remove(&req.request_id);
            return Err(TrainerError::Disconnected(format!("write failed: {e}")));
        }
        match rx.recv_timeout(self.settings.timeout) {
            Ok(resp) => match resp.status {
                Status::Ok => Ok(resp),
                Status::Failed => Err(TrainerError::Failed {
                    code: resp.error_code.unwrap_or_else(|| "unspecified".into()),
                    message: resp.message.unwrap_or_default(),
                }),
            },
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().remove(&req.request_id);
                Err(TrainerError::Timeout(req.request_id.clone()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(TrainerError::Disconnected("response stream closed".into()))
            }
        }
    }
}

fn read_loop<R: Read>(reader: R, pending: &Pending, closed: &AtomicBool, stats: &StreamStats) {
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match decode_response(&buf) {
            Ok(resp) => {
                let tx = pending.lock().unwrap().remove(&resp.request_id);
                match tx {
                    Some(tx) => {
                        stats.delivered.fetch_add(1, Ordering::Relaxed);
                        let _ = tx.send(resp);
                    }
                    None => {
                        stats.unmatched.fetch_add(1, Ordering::Relaxed);
                        log::debug!("dropping response for unknown request {}", resp.request_id);
                    }
                }
            }
            Err(e) => {
                stats.malformed.fetch_add(1, Ordering::Relaxed);
                log::warn!("skipping bad trainer line: {e}");
            }
        }
    }
    closed.store(true, Ordering::SeqCst);
    // Dropping the senders wakes every waiter with a disconnect.
    pending.lock().unwrap().clear();
}

impl Trainer for StreamTrainer {
    fn kind(&self) -> EndpointKind {
        self.kind
    }

    fn settings(&self) -> &EndpointSettings {
        &self.settings
    }

    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvaluateResponse, TrainerError> {
        self.gate.acquire();
        let out = self.round_trip(job);
        self.gate.release();
        out
    }
}

/// A trainer child process speaking the protocol over stdin/stdout.
pub struct ProcessTrainer {
    stream: StreamTrainer,
    child: Mutex<Child>,
}

impl ProcessTrainer {
    /// Starts `command` (program then arguments), optionally in `cwd`.
    pub fn spawn(command: &[String], cwd: Option<&std::path::Path>, settings: EndpointSettings) -> std::io::Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty trainer command")
        })?;
        let mut cmd = Command::new(program);
        if let Some(dir) = cwd {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stream = StreamTrainer::with_kind(stdout, stdin, settings, EndpointKind::ExternalProcess);
        Ok(Self {
            stream,
            child: Mutex::new(child),
        })
    }

    pub fn stats(&self) -> &StreamStats {
        self.stream.stats()
    }
}

impl Trainer for ProcessTrainer {
    fn kind(&self) -> EndpointKind {
        EndpointKind::ExternalProcess
    }

    fn settings(&self) -> &EndpointSettings {
        self.stream.settings()
    }

    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvaluateResponse, TrainerError> {
        self.stream.evaluate(job)
    }
}

impl Drop for ProcessTrainer {
    fn drop(&mut self) {
        // Closing stdin asks the trainer to exit; kill covers trainers that ignore EOF.
        if let Ok(mut w) = self.stream.writer.lock() {
            *w = Box::new(std::io::sink());
        }
        if let Ok(mut child) = self.child.lock() {
            for _ in 0..20 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(std::time::Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
