//! Versioned text format for policy checkpoints.
//!
//! ```text
//! scalebench-policy 1
//! algorithm dqn
//! hp gamma 0.99
//! hp learning_rate 0.0001
//! meta seed 42
//! tensor online 3,64,64,3 0 4611
//! -0.0213 0.1180 ...            (one line, shortest round-trip f64 values)
//! end
//! ```
//!
//! `hp` values are compact JSON. `meta` records carry per-agent state such as
//! the seed. A `tensor` header carries the network's layer widths, whether the output
//! layer is tanh-activated (0/1), and the number of values that follow.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::nn::Mlp;
use super::AgentError;

pub const FORMAT_MAGIC: &str = "scalebench-policy";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub sizes: Vec<usize>,
    pub activate_output: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub algorithm: String,
    pub hyperparams: BTreeMap<String, String>,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

fn err(msg: impl Into<String>) -> AgentError {
    AgentError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(algorithm: &str) -> Self {
        Self { algorithm: algorithm.to_string(), ..Default::default() }
    }

    /// Records every field of a serializable hyperparameter struct.
    pub fn with_hyperparams<T: Serialize>(mut self, hp: &T) -> Self {
        if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(hp) {
            for (k, v) in map {
                self.hyperparams.insert(k, v.to_string());
            }
        }
        self
    }

    pub fn hyperparams_as<T: DeserializeOwned>(&self) -> Result<T, AgentError> {
        let mut map = serde_json::Map::new();
        for (k, v) in &self.hyperparams {
            let value = serde_json::from_str(v).map_err(|e| err(format!("hyperparameter `{k}`: {e}")))?;
            map.insert(k.clone(), value);
        }
        serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| err(format!("hyperparameters: {e}")))
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta<T: FromStr>(&self, key: &str) -> Result<T, AgentError> {
        let raw = self.meta.get(key).ok_or_else(|| err(format!("missing meta field `{key}`")))?;
        raw.parse().map_err(|_| err(format!("bad value `{raw}` for `{key}`")))
    }

    pub fn with_net(mut self, name: &str, net: &Mlp) -> Self {
        self.tensors.push(Tensor {
            name: name.to_string(),
            sizes: net.sizes().to_vec(),
            activate_output: net.activates_output(),
            values: net.params().to_vec(),
        });
        self
    }

    pub fn net(&self, name: &str) -> Result<Mlp, AgentError> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| err(format!("missing tensor `{name}`")))?;
        Mlp::from_params(&t.sizes, t.activate_output, t.values.clone())
            .ok_or_else(|| err(format!("tensor `{name}` does not match its layout")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "algorithm {}", self.algorithm);
        for (k, v) in &self.hyperparams {
            let _ = writeln!(out, "hp {k} {v}");
        }
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for t in &self.tensors {
            let sizes: Vec<String> = t.sizes.iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "tensor {} {} {} {}",
                t.name,
                sizes.join(","),
                u8::from(t.activate_output),
                t.values.len()
            );
            let values: Vec<String> = t.values.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", values.join(" "));
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AgentError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err("empty checkpoint"))?;
        let version = header
            .strip_prefix(FORMAT_MAGIC)
            .map(str::trim)
            .ok_or_else(|| err("not a scalebench policy file"))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(err(format!("unsupported format version {version}")));
        }
        let mut ck = Checkpoint::default();
        let mut ended = false;
        while let Some(line) = lines.next() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("algorithm") => {
                    ck.algorithm = parts.next().ok_or_else(|| err("algorithm line without a name"))?.to_string();
                }
                Some("hp") => {
                    let key = parts.next().ok_or_else(|| err("hp line without a key"))?;
                    let value = parts.next().ok_or_else(|| err(format!("hp `{key}` without a value")))?;
                    ck.hyperparams.insert(key.to_string(), value.to_string());
                }
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| err("meta line without a key"))?;
                    let value = parts.next().ok_or_else(|| err(format!("meta `{key}` without a value")))?;
                    ck.meta.insert(key.to_string(), value.to_string());
                }
                Some("tensor") => {
                    let name = parts.next().ok_or_else(|| err("tensor without a name"))?.to_string();
                    let sizes = parts
                        .next()
                        .ok_or_else(|| err("tensor without sizes"))?
                        .split(',')
                        .map(|s| s.parse::<usize>().map_err(|_| err("bad tensor size")))
                        .collect::<Result<Vec<_>, _>>()?;
                    let activate_output = match parts.next() {
                        Some("0") => false,
                        Some("1") => true,
                        _ => return Err(err("tensor activation flag must be 0 or 1")),
                    };
                    let count: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("tensor without a value count"))?;
                    let values = lines
                        .next()
                        .ok_or_else(|| err(format!("tensor `{name}` has no values")))?
                        .split_whitespace()
                        .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad value in `{name}`"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    if values.len() != count {
                        return Err(err(format!("tensor `{name}` expected {count} values, found {}", values.len())));
                    }
                    ck.tensors.push(Tensor { name, sizes, activate_output, values });
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                Some(other) => return Err(err(format!("unexpected record `{other}`"))),
                None => {}
            }
        }
        if !ended {
            return Err(err("truncated checkpoint (missing `end`)"));
        }
        if ck.algorithm.is_empty() {
            return Err(err("checkpoint names no algorithm"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn text_round_trip_is_exact() {
        let net = Mlp::new(&[3, 4, 2], false, &mut ChaCha8Rng::seed_from_u64(3));
        let hp = crate::agents::DqnHyperparams::default();
        let ck = Checkpoint::new("dqn").with_hyperparams(&hp).with_meta("seed", 11).with_net("online", &net);
        let back = Checkpoint::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.net("online").unwrap(), net);
        assert_eq!(back.hyperparams_as::<crate::agents::DqnHyperparams>().unwrap(), hp);
        assert_eq!(back.meta::<u64>("seed").unwrap(), 11);
    }

    #[test]
    fn rejects_wrong_version_and_truncation() {
        assert!(Checkpoint::from_text("scalebench-policy 2\nalgorithm dqn\nend\n").is_err());
        assert!(Checkpoint::from_text("scalebench-policy 1\nalgorithm dqn\n").is_err());
        assert!(Checkpoint::from_text("hello").is_err());
        let bad_count = "scalebench-policy 1\nalgorithm dqn\ntensor a 1,1 0 3\n0.5 0.5\nend\n";
        assert!(Checkpoint::from_text(bad_count).is_err());
    }
}
