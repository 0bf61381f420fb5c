//! `key=value` run configuration shared by every subcommand.
//!
//! Sources, later ones winning: built-in defaults, a config file (one
//! `key=value` per line, `#` starts a comment), `STIP_<KEY>` environment
//! variables, command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use sha2::{Digest, Sha256};
use stip_core::{FfnKind, MaskKind, ModelConfig, NormKind, NormPlacement};

use crate::error::{Error, Result};
use crate::protocol::TransportKind;

pub const ENV_PREFIX: &str = "STIP_";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub n_experts: usize,
    pub top_k: usize,
    pub norm_kind: NormKind,
    pub norm_placement: NormPlacement,
    pub ffn_kind: FfnKind,
    pub mask_kind: MaskKind,
    /// Model weights.
    pub seed: u64,
    /// Permutation set.
    pub key_seed: u64,
    pub transport: TransportKind,
    pub latency_ms: u64,
    pub trials: usize,
    pub seq_len: usize,
    pub tol: f32,
    pub max_tokens: usize,
    pub prompts: usize,
    pub prompt_len: usize,
    pub bench_dim: usize,
    pub bench_reps: usize,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::desk();
        Self {
            n_layers: m.n_layers,
            d_model: m.d_model,
            d_ff: m.d_ff,
            vocab_size: m.vocab_size,
            n_experts: 0,
            top_k: m.top_k,
            norm_kind: m.norm_kind,
            norm_placement: m.norm_placement,
            ffn_kind: m.ffn_kind,
            mask_kind: m.mask_kind,
            seed: 0,
            key_seed: 1,
            transport: TransportKind::InProc,
            latency_ms: 0,
            trials: 10,
            seq_len: 16,
            tol: 1e-4,
            max_tokens: 10,
            prompts: 1,
            prompt_len: 4,
            bench_dim: 1024,
            bench_reps: 30,
            output: None,
        }
    }
}

/// Every recognised key, in canonical order.
pub const KEYS: &[&str] = &[
    "n_layers", "d_model", "d_ff", "vocab_size", "n_experts", "top_k", "norm_kind",
    "norm_placement", "ffn_kind", "mask_kind", "seed", "key_seed", "transport", "latency_ms",
    "trials", "seq_len", "tol", "max_tokens", "prompts", "prompt_len", "bench_dim", "bench_reps",
    "output",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn named<T>(key: &str, v: &str, f: fn(&str) -> Option<T>) -> Result<T> {
    f(v).ok_or_else(|| Error::Config(format!("{key}: unknown value {v:?}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "n_layers" => self.n_layers = num(key, v)?,
            "d_model" => self.d_model = num(key, v)?,
            "d_ff" => self.d_ff = num(key, v)?,
            "vocab_size" => self.vocab_size = num(key, v)?,
            "n_experts" => self.n_experts = num(key, v)?,
            "top_k" => self.top_k = num(key, v)?,
            "norm_kind" => self.norm_kind = named(key, v, NormKind::from_name)?,
            "norm_placement" => self.norm_placement = named(key, v, NormPlacement::from_name)?,
            "ffn_kind" => self.ffn_kind = named(key, v, FfnKind::from_name)?,
            "mask_kind" => self.mask_kind = named(key, v, MaskKind::from_name)?,
            "seed" => self.seed = num(key, v)?,
            "key_seed" => self.key_seed = num(key, v)?,
            "transport" => self.transport = TransportKind::parse(v)?,
            "latency_ms" => self.latency_ms = num(key, v)?,
            "trials" => self.trials = num(key, v)?,
            "seq_len" => self.seq_len = num(key, v)?,
            "tol" => self.tol = num(key, v)?,
            "max_tokens" => self.max_tokens = num(key, v)?,
            "prompts" => self.prompts = num(key, v)?,
            "prompt_len" => self.prompt_len = num(key, v)?,
            "bench_dim" => self.bench_dim = num(key, v)?,
            "bench_reps" => self.bench_reps = num(key, v)?,
            "output" => self.output = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "n_layers" => self.n_layers.to_string(),
            "d_model" => self.d_model.to_string(),
            "d_ff" => self.d_ff.to_string(),
            "vocab_size" => self.vocab_size.to_string(),
            "n_experts" => self.n_experts.to_string(),
            "top_k" => self.top_k.to_string(),
            "norm_kind" => self.norm_kind.to_string(),
            "norm_placement" => self.norm_placement.to_string(),
            "ffn_kind" => self.ffn_kind.to_string(),
            "mask_kind" => self.mask_kind.to_string(),
            "seed" => self.seed.to_string(),
            "key_seed" => self.key_seed.to_string(),
            "transport" => match &self.transport {
                TransportKind::InProc => "inproc".into(),
                TransportKind::Tcp(a) => a.clone(),
            },
            "latency_ms" => self.latency_ms.to_string(),
            "trials" => self.trials.to_string(),
            "seq_len" => self.seq_len.to_string(),
            "tol" => self.tol.to_string(),
            "max_tokens" => self.max_tokens.to_string(),
            "prompts" => self.prompts.to_string(),
            "prompt_len" => self.prompt_len.to_string(),
            "bench_dim" => self.bench_dim.to_string(),
            "bench_reps" => self.bench_reps.to_string(),
            "output" => self.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            _ => return None,
        })
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&std::fs::read_to_string(path)?)
    }

    /// Applies `STIP_<KEY>` variables; unrelated `STIP_*` names are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        for (k, v) in vars {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if KEYS.contains(&key.as_str()) {
                    self.set(&key, &v)?;
                }
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut c = ModelConfig::new(self.n_layers, self.d_model, self.d_ff, self.vocab_size)
            .with_norm(self.norm_kind, self.norm_placement)
            .with_ffn(self.ffn_kind)
            .with_mask(self.mask_kind);
        if self.n_experts > 0 {
            c = c.with_experts(self.n_experts, self.top_k);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn latency(&self) -> Duration {
        Duration::from_millis(self.latency_ms)
    }

    /// Canonical `key=value` view, excluding the output path.
    pub fn entries(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .filter(|k| **k != "output")
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    /// SHA-256 over the canonical entries; identical settings hash equally
    /// whatever source they came from.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Round-trips through [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k}={}\n", self.get(k).unwrap_or_default())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_desk_scale() {
        let c = RunConfig::default().model_config().unwrap();
        assert_eq!((c.n_layers, c.d_model, c.d_ff, c.vocab_size), (4, 64, 256, 100));
    }

    #[test]
    fn file_then_env() {
        let mut c = RunConfig::default();
        c.apply_text("# desk\nd_model = 32\nffn_kind=gelu # inline\n\n").unwrap();
        c.apply_env([("STIP_D_MODEL".into(), "16".into()), ("STIP_UNRELATED".into(), "x".into())]).unwrap();
        assert_eq!(c.d_model, 16);
        assert_eq!(c.ffn_kind, FfnKind::Gelu);
        assert!(c.apply_text("nope=1").is_err());
        assert!(c.apply_text("d_model").is_err());
        assert!(c.set("norm_kind", "batchnorm").is_err());
    }

    #[test]
    fn text_round_trip_and_hash() {
        let mut c = RunConfig::default();
        c.set("n_experts", "4").unwrap();
        c.set("transport", "127.0.0.1:0").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.hash(), d.hash());
        assert_ne!(c.hash(), RunConfig::default().hash());
        d.set("output", "x.json").unwrap();
        assert_eq!(c.hash(), d.hash());
        assert_eq!(c.hash().len(), 64);
    }
}
