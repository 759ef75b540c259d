//! Line-delimited JSON service exposing the gait environment to external
//! policy processes (trainers, notebooks, other languages).
//!
//! One JSON document per line in each direction. Requests are tagged by
//! `cmd`:
//!
//! ```json
//! {"cmd": "spec"}
//! {"cmd": "reset", "seed": 7}
//! {"cmd": "step", "action": {"a_r": 0.0, "a_b": [0,0], "a_v": [0,0],
//!                            "a_f": [[0,0],[0,0],[0,0],[0,0]],
//!                            "a_c": [0,0,0], "a_t": [0,0]}}
//! ```
//!
//! Every reply carries `"ok"`. Successes:
//!
//! * `spec` -> `{"ok": true, "spec": {"observation": {"o_r": [1], "o_v": [2],
//!   "o_f": [4, 2], "o_c": [4], "o_m": [32, 32]}, "action": {"dim": 18,
//!   "low": -1.0, "high": 1.0, "components": {...}}, "episode":
//!   {"max_steps": ..., "success_radius": ...}, "scenario": "..."}}`
//! * `reset` -> `{"ok": true, "observation": {...}}`
//! * `step` -> `{"ok": true, "observation": {...}, "reward": ..., "terms":
//!   {...} or null, "reason": "none" | "footholds" | ..., "terminated":
//!   bool, "success": bool}`
//!
//! Failures are `{"ok": false, "error": {"kind": ..., "message": ...}}` and
//! never kill the session; the very next line is handled normally. Kinds:
//!
//! * `bad_request`: the line is not valid JSON for any request.
//! * `out_of_range`: a step action has components outside [-1, 1]. Actions
//!   are rejected, not clipped, so a policy bug cannot silently change the
//!   executed command.
//! * `bad_state`: `step` before `reset`, or after the episode terminated.
//! * `env`: the environment itself failed (reset budget exhausted and such).
//!
//! The TCP server takes one connection per session; sessions are fully
//! independent (each gets its own clone of the prototype environment).

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use serde::Deserialize;
use serde_json::json;

use crate::env::{EnvError, GaitEnv};
use crate::phase::{PlannerAction, N_FEET};
use crate::terrain::LOCAL_GRID_DIM;

/// One client request; see the module docs for the wire shape.
#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Spec,
    Reset { seed: u64 },
    Step { action: PlannerAction },
}

/// Strict parse of one request line.
pub fn parse_request(line: &str) -> Result<Request, serde_json::Error> {
    serde_json::from_str(line)
}

fn error_reply(kind: &str, message: impl AsRef<str>) -> serde_json::Value {
    json!({"ok": false, "error": {"kind": kind, "message": message.as_ref()}})
}

/// One environment session; feed it request lines, get reply values.
pub struct Session {
    env: GaitEnv,
}

impl Session {
    pub fn new(env: GaitEnv) -> Self {
        Session { env }
    }

    /// Handles one request line and always produces exactly one reply.
    /// Malformed input earns an error reply, not a dead session.
    pub fn handle_line(&mut self, line: &str) -> serde_json::Value {
        let request = match parse_request(line) {
            Ok(request) => request,
            Err(e) => return error_reply("bad_request", e.to_string()),
        };
        match request {
            Request::Spec => self.spec(),
            Request::Reset { seed } => match self.env.reset(seed) {
                Ok(obs) => json!({"ok": true, "observation": obs}),
                Err(e) => error_reply("env", e.to_string()),
            },
            Request::Step { action } => match self.env.step(&action) {
                Ok(out) => json!({
                    "ok": true,
                    "observation": out.observation,
                    "reward": out.reward,
                    "terms": out.terms,
                    "reason": out.reason,
                    "terminated": out.terminated,
                    "success": out.success,
                }),
                Err(e @ (EnvError::NotReset | EnvError::DeadState)) => {
                    error_reply("bad_state", e.to_string())
                }
                Err(EnvError::InvalidAction(message)) => error_reply("out_of_range", message),
                Err(e) => error_reply("env", e.to_string()),
            },
        }
    }

    fn spec(&self) -> serde_json::Value {
        let cfg = self.env.config();
        json!({
            "ok": true,
            "spec": {
                "observation": {
                    "o_r": [1],
                    "o_v": [2],
                    "o_f": [N_FEET, 2],
                    "o_c": [N_FEET],
                    "o_m": [LOCAL_GRID_DIM, LOCAL_GRID_DIM],
                },
                "action": {
                    "dim": PlannerAction::DIM,
                    "low": -1.0,
                    "high": 1.0,
                    "components": {
                        "a_r": [1],
                        "a_b": [2],
                        "a_v": [2],
                        "a_f": [N_FEET, 2],
                        "a_c": [3],
                        "a_t": [2],
                    },
                },
                "episode": {
                    "max_steps": cfg.max_steps,
                    "success_radius": cfg.success_radius,
                },
                "scenario": self.env.label(),
            }
        })
    }
}

fn serve_lines(
    reader: impl BufRead,
    mut writer: impl Write,
    env: GaitEnv,
) -> std::io::Result<()> {
    let mut session = Session::new(env);
    for line in reader.lines() {
        let line = match line {
            Ok(line) => line,
            // Non-UTF-8 input is a client bug, not a transport failure;
            // answer it and keep the session.
            Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                let reply = error_reply("bad_request", "request line is not valid UTF-8");
                writeln!(writer, "{reply}")?;
                writer.flush()?;
                continue;
            }
            Err(e) => return Err(e),
        };
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        writeln!(writer, "{reply}")?;
        writer.flush()?;
    }
    Ok(())
}

/// Serves one session over stdin/stdout until EOF.
pub fn serve_stdio(env: GaitEnv) -> std::io::Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_lines(stdin.lock(), stdout.lock(), env)
}

/// Serves one session on an accepted connection until the peer hangs up.
pub fn handle_connection(stream: TcpStream, env: GaitEnv) -> std::io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_lines(reader, stream, env)
}

/// Accept loop: every connection gets an independent session on its own
/// thread, each starting from a clone of the prototype environment. Runs
/// until the process exits.
pub fn serve_tcp(addr: impl ToSocketAddrs, proto: GaitEnv) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    eprintln!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let env = proto.clone();
        std::thread::spawn(move || {
            if let Err(e) = handle_connection(stream, env) {
                eprintln!("session ended with I/O error: {e}");
            }
        });
    }
    Ok(())
}
