//! Subprocess sandbox for program-correctness metrics.
//!
//! Each run gets a fresh temporary working directory, an empty environment,
//! Python's isolated mode, a socket layer that refuses to connect or resolve
//! names, and a wall-clock deadline after which the child is killed. This is
//! process-level isolation only; it is not a container.

use std::fs::{self, File};
use std::io::ErrorKind;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NETWORK_GUARD: &str = r#"import socket as _socket
def _no_network(*_a, **_k):
    raise OSError("network access is disabled in the sandbox")
_socket.socket.connect = _no_network
_socket.socket.connect_ex = _no_network
_socket.socket.sendto = _no_network
_socket.getaddrinfo = _no_network
_socket.create_connection = _no_network
del _socket, _no_network
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    pub interpreter: String,
    pub timeout_secs: f64,
    /// Upper bound on concurrently running children.
    pub max_concurrent: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            interpreter: "python3".into(),
            timeout_secs: 10.0,
            max_concurrent: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Passed,
    Failed,
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

pub struct Sandbox {
    cfg: SandboxConfig,
    in_use: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Sandbox);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_use.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

impl Sandbox {
    pub fn new(cfg: SandboxConfig) -> Self {
        Self {
            cfg,
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.cfg
    }

    fn acquire(&self) -> Permit<'_> {
        let limit = self.cfg.max_concurrent.max(1);
        let mut n = self.in_use.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }

    /// Runs `source` in a fresh directory; `inspect` sees the directory after
    /// the child exits.
    pub fn run_with<R>(&self, source: &str, inspect: impl FnOnce(&Path) -> R) -> Result<(RunOutcome, R)> {
        let _permit = self.acquire();
        let dir = tempfile::tempdir()?;
        let script = dir.path().join("main.py");
        fs::write(&script, format!("{NETWORK_GUARD}\n{source}\n"))?;
        let stdout_path = dir.path().join(".stdout");
        let stderr_path = dir.path().join(".stderr");
        let start = Instant::now();
        let mut child = Command::new(&self.cfg.interpreter)
            .arg("-I")
            .arg(&script)
            .current_dir(dir.path())
            .env_clear()
            .env("HOME", dir.path())
            .env("MPLBACKEND", "Agg")
            .stdin(Stdio::null())
            .stdout(File::create(&stdout_path)?)
            .stderr(File::create(&stderr_path)?)
            .spawn()
            .map_err(|e| match e.kind() {
                ErrorKind::NotFound | ErrorKind::PermissionDenied => {
                    Error::SandboxUnavailable(format!("{}: {e}", self.cfg.interpreter))
                }
                _ => Error::Io(e),
            })?;
        let deadline = Duration::from_secs_f64(self.cfg.timeout_secs.max(0.0));
        let (status, exit_code) = loop {
            if let Some(st) = child.try_wait()? {
                let status = if st.success() { RunStatus::Passed } else { RunStatus::Failed };
                break (status, st.code());
            }
            if start.elapsed() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                break (RunStatus::TimedOut, None);
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let elapsed = start.elapsed();
        let outcome = RunOutcome {
            status,
            exit_code,
            stdout: fs::read_to_string(&stdout_path).unwrap_or_default(),
            stderr: fs::read_to_string(&stderr_path).unwrap_or_default(),
            elapsed,
        };
        let inspected = inspect(dir.path());
        Ok((outcome, inspected))
    }

    pub fn run(&self, source: &str) -> Result<RunOutcome> {
        Ok(self.run_with(source, |_| ())?.0)
    }
}

/// 1 if `program` followed by every assertion exits cleanly before the
/// deadline, else 0. A timeout scores 0.
pub fn pass_at_1<S: AsRef<str>>(program: &str, tests: &[S], sandbox: &Sandbox) -> Result<u8> {
    let mut source = String::from(program);
    for t in tests {
        source.push('\n');
        source.push_str(t.as_ref());
    }
    Ok(u8::from(sandbox.run(&source)?.status == RunStatus::Passed))
}

/// Experimental check for plotting code: the program must exit cleanly and
/// leave at least one non-empty `.png` in its working directory.
pub fn visualization_pass(program: &str, sandbox: &Sandbox) -> Result<u8> {
    let (outcome, wrote_png) = sandbox.run_with(program, |dir| {
        fs::read_dir(dir)
            .map(|entries| {
                entries.flatten().any(|e| {
                    e.path().extension().is_some_and(|x| x == "png")
                        && e.metadata().map(|m| m.len() > 0).unwrap_or(false)
                })
            })
            .unwrap_or(false)
    })?;
    Ok(u8::from(outcome.status == RunStatus::Passed && wrote_png))
}
