//! Subprocess models.
//!
//! The input is written as `{"parameters": {name: value, ...}}` to a temporary
//! file whose path is appended to the command line. The output is the last
//! non-empty line of the child's stdout, parsed as a decimal number.

use std::io::{BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Map, Value};
use wait_timeout::ChildExt;

use super::models::digest_id;
use super::Model;
use crate::error::{Error, Result};

/// Directory for input files; the system temp dir when unset.
pub const TMPDIR_ENV: &str = "CMORRIS_TMPDIR";

const STDERR_EXCERPT: usize = 2000;

#[derive(Debug, Clone)]
pub struct ExternalModel {
    command: Vec<String>,
    names: Vec<String>,
    timeout: Option<Duration>,
    id: String,
}

impl ExternalModel {
    pub fn new(command: Vec<String>, names: Vec<String>, timeout: Option<Duration>) -> Self {
        let id = digest_id("external", &json!([command, names]));
        ExternalModel {
            command,
            names,
            timeout,
            id,
        }
    }

    pub fn with_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }

    fn input_file(&self, x: &[f64]) -> Result<tempfile::NamedTempFile> {
        let mut parameters = Map::new();
        for (name, &v) in self.names.iter().zip(x) {
            parameters.insert(name.clone(), json!(v));
        }
        let body = json!({ "parameters": Value::Object(parameters) });
        let dir = std::env::var_os(TMPDIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(std::env::temp_dir);
        let mut file = tempfile::Builder::new()
            .prefix("cmorris-")
            .suffix(".json")
            .tempfile_in(&dir)
            .map_err(|e| Error::io(&dir, e))?;
        file.write_all(body.to_string().as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(file.path(), e))?;
        Ok(file)
    }
}

fn excerpt(stderr: &str) -> String {
    let trimmed = stderr.trim_end();
    if trimmed.len() <= STDERR_EXCERPT {
        return trimmed.to_string();
    }
    let mut start = trimmed.len() - STDERR_EXCERPT;
    while !trimmed.is_char_boundary(start) {
        start += 1;
    }
    format!("...{}", &trimmed[start..])
}

/// Last non-empty line of `stdout` as a number.
pub(crate) fn parse_output(stdout: &str) -> std::result::Result<f64, String> {
    let line = stdout
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .last()
        .ok_or_else(|| "no output on stdout".to_string())?;
    line.parse::<f64>()
        .map_err(|_| format!("last stdout line is not a number: {line:?}"))
}

impl Model for ExternalModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.names.len(),
                got: x.len(),
                context: "model input",
            });
        }
        let input = self.input_file(x)?;
        let program = &self.command[0];
        let mut child = Command::new(program)
            .args(&self.command[1..])
            .arg(input.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Model(format!("cannot start `{program}`: {e}")))?;

        // drain both pipes concurrently so a chatty child cannot block
        let out_pipe = child.stdout.take().expect("stdout is piped");
        let err_pipe = child.stderr.take().expect("stderr is piped");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            BufReader::new(out_pipe).read_to_string(&mut s).map(|_| s)
        });
        let stderr_buf = Arc::new(Mutex::new(Vec::new()));
        let err_reader = {
            let buf = Arc::clone(&stderr_buf);
            thread::spawn(move || {
                let mut pipe = err_pipe;
                let mut chunk = [0u8; 4096];
                while let Ok(n @ 1..) = pipe.read(&mut chunk) {
                    buf.lock().unwrap().extend_from_slice(&chunk[..n]);
                }
            })
        };
        let stderr_so_far = || String::from_utf8_lossy(&stderr_buf.lock().unwrap()).into_owned();

        let status = match self.timeout {
            Some(limit) => match child.wait_timeout(limit) {
                Ok(Some(status)) => status,
                Ok(None) => {
                    let _ = child.kill();
                    let _ = child.wait();
                    // grandchildren may still hold the pipes; do not wait for them
                    let stderr = stderr_so_far();
                    return Err(Error::Model(format!(
                        "`{program}` timed out after {:.3} s; stderr: {}",
                        limit.as_secs_f64(),
                        excerpt(&stderr)
                    )));
                }
                Err(e) => return Err(Error::Model(format!("waiting for `{program}`: {e}"))),
            },
            None => child
                .wait()
                .map_err(|e| Error::Model(format!("waiting for `{program}`: {e}")))?,
        };
        let stdout = out_reader
            .join()
            .map_err(|_| Error::Model("stdout reader panicked".into()))?
            .map_err(|e| Error::Model(format!("reading stdout of `{program}`: {e}")))?;
        let _ = err_reader.join();
        let stderr = stderr_so_far();

        if !status.success() {
            return Err(Error::Model(format!(
                "`{program}` exited with {status}; stderr: {}",
                excerpt(&stderr)
            )));
        }
        parse_output(&stdout).map_err(|msg| Error::Model(format!("`{program}`: {msg}; stderr: {}", excerpt(&stderr))))
    }
}
