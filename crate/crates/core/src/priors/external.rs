use std::io::{BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::priors::simplex_floor;
use crate::scalar::Scalar;

/// Request header.
pub const MAGIC: &[u8; 8] = b"OTPROJ01";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
// refuse to allocate for absurd length headers
const MAX_VALUES: u32 = 1 << 26;

/// A long-lived child process answering projection requests on stdin/stdout.
///
/// Request: `OTPROJ01`, u32 LE `n`, `n` f64 LE. Response: u32 LE `n`, `n` f64
/// LE. The process is started lazily and reused; concurrent callers queue on
/// an internal lock. Closing its stdin asks it to exit.
#[derive(Debug)]
pub struct ExternalProjector {
    program: String,
    args: Vec<String>,
    timeout: Duration,
    session: Mutex<Option<Session>>,
}

#[derive(Debug)]
struct Session {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    responses: Receiver<Reply>,
}

#[derive(Debug)]
enum Reply {
    Values(Vec<f64>),
    Closed,
    Truncated,
    Oversized(u32),
}

impl ExternalProjector {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        ExternalProjector {
            program: program.into(),
            args,
            timeout: DEFAULT_TIMEOUT,
            session: Mutex::new(None),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn program(&self) -> &str {
        &self.program
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn spawn(&self) -> Result<Session> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ProcessUnavailable(format!("{}: {e}", self.program)))?;
        let stdin = child.stdin.take().map(BufWriter::new);
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::ProcessUnavailable("no stdout pipe".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let reply = read_reply(&mut reader);
                let stop = !matches!(reply, Reply::Values(_));
                if tx.send(reply).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Session {
            child,
            stdin,
            responses: rx,
        })
    }

    /// Sends one vector and waits for the answer, without simplex cleanup.
    pub fn request(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut guard = self
            .session
            .lock()
            .map_err(|_| Error::ProcessUnavailable("projector lock poisoned".into()))?;
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let session = guard.as_mut().expect("session just created");
        if let Err(e) = session.send(y) {
            *guard = None;
            return Err(Error::ProcessUnavailable(format!("write failed: {e}")));
        }
        let reply = session.responses.recv_timeout(self.timeout);
        match reply {
            Ok(Reply::Values(values)) => {
                if values.len() != y.len() {
                    return Err(Error::ProtocolViolation(format!(
                        "sent {} values, received {}",
                        y.len(),
                        values.len()
                    )));
                }
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::ProtocolViolation(format!(
                        "non-finite value at index {i}"
                    )));
                }
                Ok(values)
            }
            Ok(Reply::Truncated) => {
                *guard = None;
                Err(Error::ProtocolViolation("truncated response".into()))
            }
            Ok(Reply::Oversized(n)) => {
                *guard = None;
                Err(Error::ProtocolViolation(format!(
                    "response length {n} is implausible"
                )))
            }
            Ok(Reply::Closed) | Err(RecvTimeoutError::Disconnected) => {
                *guard = None;
                Err(Error::ProcessUnavailable(
                    "process closed its output".into(),
                ))
            }
            Err(RecvTimeoutError::Timeout) => {
                *guard = None;
                Err(Error::Timeout(self.timeout))
            }
        }
    }
}

impl Session {
    fn send(&mut self, y: &[f64]) -> std::io::Result<()> {
        let w = self
            .stdin
            .as_mut()
            .ok_or_else(|| std::io::Error::other("stdin closed"))?;
        w.write_all(MAGIC)?;
        w.write_all(&(y.len() as u32).to_le_bytes())?;
        for v in y {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        // EOF first; kill if the process lingers
        drop(self.stdin.take());
        let deadline = Instant::now() + Duration::from_millis(200);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn read_reply(reader: &mut impl Read) -> Reply {
    let mut head = [0u8; 4];
    match read_full(reader, &mut head) {
        Filled::Done => {}
        Filled::Empty => return Reply::Closed,
        Filled::Partial => return Reply::Truncated,
    }
    let n = u32::from_le_bytes(head);
    if n > MAX_VALUES {
        return Reply::Oversized(n);
    }
    let mut buf = vec![0u8; n as usize * 8];
    match read_full(reader, &mut buf) {
        Filled::Done => {}
        Filled::Empty if n == 0 => {}
        _ => return Reply::Truncated,
    }
    Reply::Values(
        buf.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    )
}

enum Filled {
    Done,
    Empty,
    Partial,
}

fn read_full(reader: &mut impl Read, buf: &mut [u8]) -> Filled {
    if buf.is_empty() {
        return Filled::Done;
    }
    let mut got = 0;
    while got < buf.len() {
        match reader.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(_) => break,
        }
    }
    match got {
        0 => Filled::Empty,
        g if g == buf.len() => Filled::Done,
        _ => Filled::Partial,
    }
}

/// Projects through the external process and re-normalizes onto the simplex.
pub fn project_external<T: Scalar>(y: &[T], endpoint: &ExternalProjector) -> Result<Vec<T>> {
    let wire: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();
    let back = endpoint.request(&wire)?;
    let values: Vec<T> = back.into_iter().map(T::lit).collect();
    simplex_floor(&values)
}
