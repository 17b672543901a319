//! Objectives served by a child process.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::Duration;

use pipebo_core::engine::{Objective, ObjectiveError};

use crate::config::ExternalObjective;

/// A running child process answering one query per line.
///
/// Each query is written as the coordinates separated by single spaces
/// (shortest round-trip formatting) and a newline; the child must reply
/// with one number per line. The returned value is negated so that the
/// engine maximizes.
#[derive(Debug)]
pub struct SubprocessObjective {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    line: String,
}

impl SubprocessObjective {
    pub fn spawn(spec: &ExternalObjective) -> Result<Self, ObjectiveError> {
        let (program, args) = spec
            .command
            .split_first()
            .ok_or_else(|| ObjectiveError("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ObjectiveError(format!("cannot start `{program}`: {e}")))?;
        let stdin = Some(BufWriter::new(child.stdin.take().expect("stdin is piped")));
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self {
            child,
            stdin,
            stdout,
            line: String::new(),
        })
    }

    /// Raw (minimization-form) value at `x`.
    pub fn query(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        let query: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        let io_err = |e: std::io::Error| ObjectiveError(format!("objective process: {e}"));
        let stdin = self.stdin.as_mut().expect("stdin stays open until drop");
        writeln!(stdin, "{}", query.join(" ")).map_err(io_err)?;
        stdin.flush().map_err(io_err)?;
        self.line.clear();
        let read = self.stdout.read_line(&mut self.line).map_err(io_err)?;
        if read == 0 {
            return Err(ObjectiveError("objective process closed its output".into()));
        }
        let reply = self.line.trim();
        reply
            .parse::<f64>()
            .map_err(|_| ObjectiveError(format!("objective process replied `{reply}`, expected a number")))
    }
}

impl Objective for SubprocessObjective {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        self.query(x).map(|v| -v)
    }
}

impl Drop for SubprocessObjective {
    fn drop(&mut self) {
        // Closing stdin is the end-of-queries signal. Give the child a moment
        // to exit on its own before killing it.
        drop(self.stdin.take());
        for _ in 0..50 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
