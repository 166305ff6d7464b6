//! Subprocess target runner.
//!
//! Invocation: `<program> [args...] <instance-path> <seed> --<name> <value> ...`
//! with only the active parameters, in space order. The cost is the last
//! whitespace-separated token of the last non-empty stdout line.

use std::path::PathBuf;
use std::process::ExitStatus;
use std::sync::Arc;
use std::time::Duration;
#[cfg(not(target_arch = "wasm32"))]
use std::{
    io::Read,
    process::{Command, Stdio},
    time::Instant,
};

#[cfg(not(target_arch = "wasm32"))]
use wait_timeout::ChildExt;

use super::{EvalResult, EvalStatus, Instance, TargetError};
use crate::space::{Configuration, ParameterSpace};

#[derive(Debug, Clone)]
pub struct ExternalRunner {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Option<Duration>,
    space: Arc<ParameterSpace>,
}

/// The `--name value` arguments for the active parameters of `config`.
pub fn parameter_args(space: &ParameterSpace, config: &Configuration) -> Vec<String> {
    let mut out = Vec::new();
    for (spec, value) in space.params().iter().zip(&config.values) {
        if let Some(v) = value {
            out.push(format!("--{}", spec.name));
            out.push(spec.format_value(v));
        }
    }
    out
}

/// Extracts the cost from runner output.
pub fn parse_cost(stdout: &str) -> Option<f64> {
    let line = stdout.lines().rev().find(|l| !l.trim().is_empty())?;
    let token = line.split_whitespace().last()?;
    token.parse::<f64>().ok().filter(|c| c.is_finite())
}

impl ExternalRunner {
    pub fn new(command: &[String], timeout: Option<Duration>, space: Arc<ParameterSpace>) -> Result<Self, TargetError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| TargetError::Config("empty target command".into()))?;
        Ok(Self {
            program: PathBuf::from(program),
            args: args.to_vec(),
            timeout,
            space,
        })
    }

    pub fn command_line(&self, config: &Configuration, instance_path: &str, seed: u64) -> Vec<String> {
        let mut argv = self.args.clone();
        argv.push(instance_path.to_string());
        argv.push(seed.to_string());
        argv.extend(parameter_args(&self.space, config));
        argv
    }

    pub fn evaluate(&self, config: &Configuration, instance: &Instance, seed: u64) -> Result<EvalResult, TargetError> {
        let path = instance
            .path
            .as_ref()
            .ok_or_else(|| TargetError::Instance(format!("instance '{}' has no file path", instance.id)))?;
        let argv = self.command_line(config, &path.to_string_lossy(), seed);
        let (status, output, runtime_s) = self.spawn(&argv)?;
        let failed = |status: EvalStatus, detail: String| EvalResult {
            cost: f64::NAN,
            runtime_s,
            status,
            detail: Some(detail),
        };
        Ok(match status {
            None => failed(EvalStatus::Timeout, format!("timed out after {runtime_s:.3}s")),
            Some(s) if !s.success() => failed(EvalStatus::Crashed, format!("exited with {s}")),
            Some(_) => match parse_cost(&output) {
                Some(cost) => EvalResult::ok(cost, runtime_s),
                None => {
                    let last = output.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
                    failed(EvalStatus::Crashed, format!("unparsable output '{last}'"))
                }
            },
        })
    }

    /// Runs the command; `None` status means it was killed on timeout.
    #[cfg(not(target_arch = "wasm32"))]
    fn spawn(&self, argv: &[String]) -> Result<(Option<ExitStatus>, String, f64), TargetError> {
        let start = Instant::now();
        let mut command = Command::new(&self.program);
        command.args(argv).stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::null());
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut command, 0);
        let mut child = command
            .spawn()
            .map_err(|e| TargetError::Spawn(format!("{}: {e}", self.program.display())))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout.read_to_string(&mut buf);
            buf
        });
        let status = match self.timeout {
            Some(limit) => match child.wait_timeout(limit).map_err(|e| TargetError::Spawn(e.to_string()))? {
                Some(status) => Some(status),
                None => {
                    kill_group(&mut child);
                    let _ = child.wait();
                    return Ok((None, String::new(), start.elapsed().as_secs_f64()));
                }
            },
            None => Some(child.wait().map_err(|e| TargetError::Spawn(e.to_string()))?),
        };
        let output = reader.join().unwrap_or_default();
        Ok((status, output, start.elapsed().as_secs_f64()))
    }

    #[cfg(target_arch = "wasm32")]
    fn spawn(&self, _argv: &[String]) -> Result<(Option<ExitStatus>, String, f64), TargetError> {
        Err(TargetError::Spawn(format!(
            "{}: subprocesses are unavailable on this platform",
            self.program.display()
        )))
    }
}

/// Kills the child and anything it started in its process group.
#[cfg(all(unix, not(target_arch = "wasm32")))]
fn kill_group(child: &mut std::process::Child) {
    // SAFETY: signalling a process group we created has no memory effects.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(all(not(unix), not(target_arch = "wasm32")))]
fn kill_group(child: &mut std::process::Child) {
    let _ = child.kill();
}
