//! Line-delimited JSON bridge so external training code can drive the
//! environment over TCP.
//!
//! Every request is one JSON object on one line, every reply likewise.
//! A session must start with a handshake:
//!
//! ```text
//! > {"cmd":"handshake"}
//! < {"ok":true,"protocol_version":1,"session_id":3,"reward":"RFn1","observation_space":{..},"action_space":{..},..}
//! > {"cmd":"reset","seed":3,"split":"train"}
//! < {"ok":true,"start":1234,"obs":[2,..,..],"normalized":[..]}
//! > {"cmd":"step","action":2}
//! < {"ok":true,"obs":[v,c_bar,d],"normalized":[..],"reward":..,"terminated":false,"truncated":false,"info":{..}}
//! > {"cmd":"close"}
//! < {"ok":true}
//! ```
//!
//! The handshake may carry `protocol_version` (must be 1) and `reward`
//! (`rfn1`..`rfn3_3`). Floats go out with 17 significant digits, so they
//! parse back to the same bits. Failures reply `{"ok":false,"error":{"code":..,"message":..}}` and leave the
//! session usable. Actions are indices 0, 1, 2 for remove, maintain, add.
//! `reset` with a seed starts a new seeded stream of episode starts, the same
//! one `StartPolicy::uniform(seed)` gives in-process; without a seed it
//! continues the current stream. Each connection has its own environment.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;

use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::env::{encode_action, EnvError, Environment, EpisodeConfig, EpisodeRunner, Observation, ScalingEnv, StartPolicy};
use crate::rewards::{RewardKind, RewardSpec};
use crate::sim::SimParams;
use crate::workload::{generate, split, WorkloadError, WorkloadTrace};

pub const PROTOCOL_VERSION: u64 = 1;

/// JSON formatter writing every float as `d.dddddddddddddddde±x`.
struct RoundTrip;

impl serde_json::ser::Formatter for RoundTrip {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes `v` with [`RoundTrip`] floats.
pub fn to_wire(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTrip);
    serde::Serialize::serialize(v, &mut ser).expect("in-memory write");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Everything a session needs to build its environment.
#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub train: Arc<WorkloadTrace>,
    pub eval: Arc<WorkloadTrace>,
    pub sim: SimParams,
    pub episode: EpisodeConfig,
    /// Used unless the handshake names another reward function.
    pub reward: RewardSpec,
}

impl BridgeConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self, WorkloadError> {
        let full = generate(&cfg.workload)?;
        let (train, eval) = split(&full, cfg.workload.train_len)?;
        let kind = cfg.reward_kinds().ok().and_then(|k| k.first().copied()).unwrap_or(RewardKind::Rfn1);
        Ok(Self {
            train: Arc::new(train),
            eval: Arc::new(eval),
            sim: cfg.sim.clone(),
            episode: cfg.episode,
            reward: RewardSpec::new(kind, cfg.sla),
        })
    }
}

#[derive(Debug)]
struct ProtocolError {
    code: &'static str,
    message: String,
}

fn perr(code: &'static str, message: impl Into<String>) -> ProtocolError {
    ProtocolError { code, message: message.into() }
}

impl From<EnvError> for ProtocolError {
    fn from(e: EnvError) -> Self {
        perr("env_error", e.to_string())
    }
}

struct Episode {
    runner: EpisodeRunner,
    split: &'static str,
    done: bool,
}

/// Protocol state of one connection, independent of the transport.
pub struct Session {
    id: u64,
    cfg: Arc<BridgeConfig>,
    reward: Option<RewardSpec>,
    episode: Option<Episode>,
    closed: bool,
}

impl Session {
    pub fn new(id: u64, cfg: Arc<BridgeConfig>) -> Self {
        Self { id, cfg, reward: None, episode: None, closed: false }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Handles one request line and returns the reply line (without newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        let reply = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(req)) => self.dispatch(&req),
            Ok(_) => Err(perr("bad_request", "request must be a JSON object")),
            Err(e) => Err(perr("parse_error", e.to_string())),
        };
        match reply {
            Ok(v) => to_wire(&v),
            Err(e) => to_wire(&json!({"ok": false, "error": {"code": e.code, "message": e.message}})),
        }
    }

    fn dispatch(&mut self, req: &serde_json::Map<String, Value>) -> Result<Value, ProtocolError> {
        let cmd = req.get("cmd").and_then(Value::as_str).ok_or_else(|| perr("bad_request", "missing string field `cmd`"))?;
        if cmd != "handshake" && cmd != "close" && self.reward.is_none() {
            return Err(perr("handshake_required", format!("`{cmd}` before handshake")));
        }
        match cmd {
            "handshake" => self.handshake(req),
            "reset" => self.reset(req),
            "step" => self.step(req),
            "close" => {
                self.closed = true;
                Ok(json!({"ok": true}))
            }
            other => Err(perr("unknown_command", format!("unknown command `{other}`"))),
        }
    }

    fn handshake(&mut self, req: &serde_json::Map<String, Value>) -> Result<Value, ProtocolError> {
        let version = match req.get("protocol_version") {
            None | Some(Value::Null) => Some(PROTOCOL_VERSION),
            Some(v) => v.as_u64(),
        };
        if version != Some(PROTOCOL_VERSION) {
            return Err(perr(
                "unsupported_version",
                format!("server speaks protocol_version {PROTOCOL_VERSION}, got {}", req.get("protocol_version").unwrap_or(&Value::Null)),
            ));
        }
        let reward = match req.get("reward") {
            None | Some(Value::Null) => self.cfg.reward,
            Some(Value::String(name)) => {
                let kind: RewardKind = name.parse().map_err(|e: crate::rewards::RewardError| perr("bad_request", e.to_string()))?;
                RewardSpec::new(kind, self.cfg.reward.sla)
            }
            Some(_) => return Err(perr("bad_request", "`reward` must be a string")),
        };
        self.reward = Some(reward);
        self.episode = None;
        let sim = &self.cfg.sim;
        Ok(json!({
            "ok": true,
            "protocol_version": PROTOCOL_VERSION,
            "session_id": self.id,
            "reward": reward.label(),
            "max_steps": self.cfg.episode.max_steps,
            "splits": {"train": self.cfg.train.len(), "eval": self.cfg.eval.len()},
            "observation_space": {
                "keys": ["v", "c_bar", "d"],
                "low": [sim.min_replicas, 0.0, 0.0],
                "high": [sim.max_replicas_cap, 100.0, Value::Null],
                "normalized_low": [0.0, 0.0, 0.0],
                "normalized_high": [1.0, 1.0, 1.0],
            },
            "action_space": {"n": 3, "deltas": [-1, 0, 1]},
        }))
    }

    fn reset(&mut self, req: &serde_json::Map<String, Value>) -> Result<Value, ProtocolError> {
        let split: &'static str = match req.get("split").map(Value::as_str) {
            None | Some(Some("train")) => "train",
            Some(Some("eval")) => "eval",
            _ => return Err(perr("bad_request", "`split` must be \"train\" or \"eval\"")),
        };
        let seed = match req.get("seed") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| perr("bad_request", "`seed` must be a non-negative integer"))?),
        };
        let reuse = seed.is_none() && self.episode.as_ref().is_some_and(|e| e.split == split);
        if !reuse {
            let trace = if split == "train" { &self.cfg.train } else { &self.cfg.eval };
            let reward = self.reward.expect("checked by dispatch");
            let env = ScalingEnv::new(trace.clone(), self.cfg.sim.clone(), reward, self.cfg.episode)?;
            self.episode = Some(Episode { runner: EpisodeRunner::new(env, StartPolicy::uniform(seed.unwrap_or(0))), split, done: false });
        }
        let ep = self.episode.as_mut().expect("just set");
        let obs = ep.runner.begin_episode()?;
        ep.done = false;
        let start = ep.runner.env().current_start();
        let normalized = ep.runner.env().normalize(&obs);
        Ok(json!({"ok": true, "start": start, "obs": obs_json(&obs), "normalized": normalized}))
    }

    fn step(&mut self, req: &serde_json::Map<String, Value>) -> Result<Value, ProtocolError> {
        let index = req
            .get("action")
            .and_then(Value::as_u64)
            .ok_or_else(|| perr("bad_request", "`action` must be 0, 1 or 2"))?;
        let action = encode_action(index as usize).map_err(|_| perr("bad_request", format!("action {index} is not 0, 1 or 2")))?;
        let ep = match self.episode.as_mut() {
            Some(ep) if !ep.done => ep,
            Some(_) => return Err(perr("no_episode", "episode is over; send reset")),
            None => return Err(perr("no_episode", "no episode; send reset")),
        };
        let out = ep.runner.advance(action)?;
        ep.done = out.done();
        Ok(json!({
            "ok": true,
            "obs": obs_json(&out.observation),
            "normalized": ep.runner.env().normalize(&out.observation),
            "reward": out.reward,
            "terminated": out.terminated,
            "truncated": out.truncated,
            "info": out.info,
        }))
    }
}

fn obs_json(obs: &Observation) -> Value {
    json!([obs.v, obs.c_bar, obs.d])
}

/// Serves one connection until the client closes it or sends `close`.
pub fn handle_connection(stream: TcpStream, session_id: u64, cfg: Arc<BridgeConfig>) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    let mut session = Session::new(session_id, cfg);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut reply = session.handle_line(&line);
        reply.push('\n');
        writer.write_all(reply.as_bytes())?;
        writer.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

pub struct Server {
    listener: TcpListener,
    cfg: Arc<BridgeConfig>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, cfg: BridgeConfig) -> io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, cfg: Arc::new(cfg) })
    }

    pub fn local_addr(&self) -> io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, one thread each.
    pub fn run(self) -> io::Result<()> {
        for (id, stream) in self.listener.incoming().enumerate() {
            let stream = stream?;
            let cfg = self.cfg.clone();
            std::thread::spawn(move || {
                let _ = handle_connection(stream, id as u64 + 1, cfg);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::SlaSpec;

    fn cfg() -> Arc<BridgeConfig> {
        let trace = |n: usize| Arc::new(WorkloadTrace::new((0..n).map(|i| 10 + (i % 7) as u32).collect()));
        Arc::new(BridgeConfig {
            train: trace(500),
            eval: trace(300),
            sim: SimParams::default(),
            episode: EpisodeConfig { max_steps: 50, ..Default::default() },
            reward: RewardSpec::new(RewardKind::Rfn1, SlaSpec::default()),
        })
    }

    fn reply(s: &mut Session, line: &str) -> Value {
        serde_json::from_str(&s.handle_line(line)).unwrap()
    }

    fn code(v: &Value) -> &str {
        v["error"]["code"].as_str().unwrap_or("")
    }

    #[test]
    fn handshake_gates_other_commands() {
        let mut s = Session::new(1, cfg());
        assert_eq!(code(&reply(&mut s, r#"{"cmd":"step","action":1}"#)), "handshake_required");
        assert_eq!(code(&reply(&mut s, r#"{"cmd":"handshake","protocol_version":9}"#)), "unsupported_version");
        let hs = reply(&mut s, r#"{"cmd":"handshake","reward":"rfn3_2"}"#);
        assert_eq!(hs["ok"], true);
        assert_eq!(hs["reward"], "RFn3_2");
        assert_eq!(hs["action_space"]["n"], 3);
    }

    #[test]
    fn error_codes() {
        let mut s = Session::new(1, cfg());
        assert_eq!(code(&reply(&mut s, "not json")), "parse_error");
        assert_eq!(code(&reply(&mut s, "[1]")), "bad_request");
        reply(&mut s, r#"{"cmd":"handshake","protocol_version":1}"#);
        assert_eq!(code(&reply(&mut s, r#"{"cmd":"fly"}"#)), "unknown_command");
        assert_eq!(code(&reply(&mut s, r#"{"cmd":"step","action":1}"#)), "no_episode");
        assert_eq!(code(&reply(&mut s, r#"{"cmd":"reset","split":"test"}"#)), "bad_request");
        assert_eq!(reply(&mut s, r#"{"cmd":"reset","seed":1}"#)["ok"], true);
        assert_eq!(code(&reply(&mut s, r#"{"cmd":"step","action":3}"#)), "bad_request");
        assert_eq!(code(&reply(&mut s, r#"{"cmd":"step"}"#)), "bad_request");
        assert_eq!(reply(&mut s, r#"{"cmd":"step","action":1}"#)["ok"], true);
    }

    #[test]
    fn episode_ends_with_truncation_then_needs_reset() {
        let mut s = Session::new(1, cfg());
        reply(&mut s, r#"{"cmd":"handshake","protocol_version":1}"#);
        reply(&mut s, r#"{"cmd":"reset","seed":4,"split":"eval"}"#);
        let mut last = Value::Null;
        for _ in 0..50 {
            last = reply(&mut s, r#"{"cmd":"step","action":1}"#);
        }
        assert_eq!(last["truncated"], true);
        assert_eq!(code(&reply(&mut s, r#"{"cmd":"step","action":1}"#)), "no_episode");
        assert_eq!(reply(&mut s, r#"{"cmd":"reset"}"#)["ok"], true);
        assert_eq!(reply(&mut s, r#"{"cmd":"close"}"#)["ok"], true);
        assert!(s.is_closed());
    }

    #[test]
    fn seeded_resets_repeat() {
        let run = || {
            let mut s = Session::new(1, cfg());
            reply(&mut s, r#"{"cmd":"handshake","protocol_version":1}"#);
            (0..3).map(|_| reply(&mut s, r#"{"cmd":"reset"}"#)["start"].clone()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
        let mut s = Session::new(1, cfg());
        reply(&mut s, r#"{"cmd":"handshake","protocol_version":1}"#);
        let a = reply(&mut s, r#"{"cmd":"reset","seed":11}"#)["start"].clone();
        reply(&mut s, r#"{"cmd":"reset"}"#);
        let b = reply(&mut s, r#"{"cmd":"reset","seed":11}"#)["start"].clone();
        assert_eq!(a, b);
    }

    #[test]
    fn floats_carry_seventeen_digits() {
        let text = to_wire(&json!({"x": 0.1, "y": -100.0, "n": 3}));
        assert_eq!(text, r#"{"n":3,"x":1.0000000000000001e-1,"y":-1.0000000000000000e2}"#);
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["x"].as_f64().unwrap().to_bits(), 0.1f64.to_bits());
    }

    #[test]
    fn reset_with_same_seed_repeats_payload() {
        let mut s = Session::new(1, cfg());
        reply(&mut s, r#"{"cmd":"handshake"}"#);
        let a = s.handle_line(r#"{"cmd":"reset","seed":7}"#);
        let b = s.handle_line(r#"{"cmd":"reset","seed":7}"#);
        assert_eq!(a, b);
    }
}
