//! Flat `key = value` run configuration.
//!
//! Every field of every section has a default. Keys are dotted paths into
//! the sections (`synth.shift`, `adapt.k`, `pretrain.optimizer.learning_rate`).
//! A config file is read first, then command-line overrides are applied in
//! order. The resolved configuration is echoed into every artifact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::adaptation::AdaptConfig;
use crate::feature_io::{ModalityDims, SynthSpec};
use crate::mmd::MmdConfig;
use crate::source_model::{ModelConfig, PretrainConfig};

/// Model architecture without the data-dependent input widths. Fields left
/// unset follow `encoder_out` as in [`ModelConfig::with_dims`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub encoder_out: usize,
    pub encoder_hidden: Option<usize>,
    pub fusion_layers: usize,
    pub fusion_heads: Option<usize>,
    pub fusion_ff_dim: Option<usize>,
    pub classifier_hidden: Option<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSettings {
            encoder_out: d.encoder_out,
            encoder_hidden: None,
            fusion_layers: d.fusion_layers,
            fusion_heads: None,
            fusion_ff_dim: None,
            classifier_hidden: None,
        }
    }
}

impl ModelSettings {
    pub fn resolve(&self, input_dims: ModalityDims) -> ModelConfig {
        let mut c = ModelConfig::with_dims(input_dims, self.encoder_out);
        c.fusion_layers = self.fusion_layers;
        if let Some(v) = self.encoder_hidden {
            c.encoder_hidden = v;
        }
        if let Some(v) = self.fusion_heads {
            c.fusion_heads = v;
        }
        if let Some(v) = self.fusion_ff_dim {
            c.fusion_ff_dim = v;
        }
        if let Some(v) = self.classifier_hidden {
            c.classifier_hidden = v;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    /// Entropy buckets over `[0, ln 2]`.
    pub buckets: usize,
    pub trace_entropy: bool,
    pub trace_pseudo: bool,
    pub trace_bank: bool,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            buckets: 6,
            trace_entropy: false,
            trace_pseudo: false,
            trace_bank: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub source: String,
    pub target: String,
    pub manifest: String,
    pub checkpoint: String,
    pub report: String,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            source: "source.jsonl".into(),
            target: "target.jsonl".into(),
            manifest: "manifest.json".into(),
            checkpoint: "model.ckpt".into(),
            report: "report.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    /// Seed of the synthetic generator.
    pub seed: u64,
    pub synth: SynthSpec,
    pub model: ModelSettings,
    /// `pretrain.seed` seeds both initialization and shuffling.
    pub pretrain: PretrainConfig,
    pub adapt: AdaptConfig,
    pub mmd: MmdConfig,
    pub report: ReportSettings,
    pub paths: Paths,
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            node = node
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("sections are objects");
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Object(root)
}

fn coerce(key: &str, raw: &str, template: &Value) -> Result<Value, String> {
    let bad = |what: &str| format!("{key}: cannot parse {raw:?} as {what}");
    let raw = raw.trim();
    match template {
        Value::Bool(_) => match raw {
            "true" | "1" | "yes" | "on" => Ok(Value::Bool(true)),
            "false" | "0" | "no" | "off" => Ok(Value::Bool(false)),
            _ => Err(bad("a boolean")),
        },
        Value::Number(n) if n.is_f64() => raw
            .parse::<f64>()
            .ok()
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number)
            .ok_or_else(|| bad("a number")),
        Value::Number(_) => raw
            .parse::<u64>()
            .map(Value::from)
            .map_err(|_| bad("a non-negative integer")),
        Value::String(_) => Ok(Value::String(raw.to_string())),
        Value::Array(items) => {
            if raw.starts_with('[') {
                return serde_json::from_str(raw).map_err(|_| bad("a list"));
            }
            let elem = items
                .first()
                .cloned()
                .unwrap_or(Value::String(String::new()));
            let parts: Vec<&str> = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            let mut vals = parts
                .iter()
                .map(|p| coerce(key, p, &elem))
                .collect::<Result<Vec<_>, _>>()?;
            // a single width applies to all three modalities
            if key.ends_with("dims") && vals.len() == 1 && items.len() == 3 {
                vals = vec![vals[0].clone(); 3];
            }
            Ok(Value::Array(vals))
        }
        Value::Null => match raw {
            "" | "none" | "null" | "auto" => Ok(Value::Null),
            _ => Ok(serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))),
        },
        Value::Object(_) => Err(format!("{key} is a section, not a value")),
    }
}

/// Parses `key = value` lines. `#` starts a comment; values may be quoted.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.push((k.trim().to_string(), v.to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// All keys with their current values.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten(
            "",
            &serde_json::to_value(self).expect("config serializes"),
            &mut out,
        );
        out
    }

    /// Applies overrides in order; unknown keys are rejected.
    pub fn apply<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<(), String> {
        let mut flat = self.to_flat();
        for (k, raw) in pairs {
            let key = k.trim().replace('-', "_");
            let template = flat
                .get(&key)
                .ok_or_else(|| format!("unknown config key {k:?}"))?;
            let mut v = coerce(&key, raw, template)?;
            if key == "adapt.ablations" {
                if let Value::Array(items) = &mut v {
                    for it in items.iter_mut() {
                        if let Value::String(s) = it {
                            *s = s.replace('-', "_");
                        }
                    }
                }
            }
            flat.insert(key, v);
        }
        *self = serde_json::from_value(unflatten(&flat))
            .map_err(|e| format!("invalid configuration: {e}"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let pairs = parse_pairs(&text)?;
        let mut cfg = RunConfig::default();
        cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(cfg)
    }

    /// The resolved configuration as a flat JSON object.
    pub fn echo(&self) -> Value {
        Value::Object(self.to_flat().into_iter().collect())
    }

    /// The resolved configuration as `key = value` lines.
    pub fn to_text(&self) -> String {
        self.to_flat()
            .into_iter()
            .map(|(k, v)| {
                let shown = match v {
                    Value::String(s) => s,
                    Value::Null => "none".into(),
                    Value::Array(items) => items
                        .iter()
                        .map(|x| x.as_str().map_or_else(|| x.to_string(), str::to_owned))
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                format!("{k} = {shown}\n")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_round_trip() {
        let mut c = RunConfig::default();
        c.apply([
            ("synth.shift", "2.5"),
            ("synth.dims", "8"),
            ("adapt.k", "4"),
            ("adapt.ablations", "no-align,plain_em"),
            ("adapt.bank_capacity", "30"),
            ("pretrain.optimizer.learning_rate", "0.01"),
            ("model.fusion_heads", "2"),
        ])
        .unwrap();
        assert_eq!(c.synth.shift, 2.5);
        assert_eq!(c.synth.dims, ModalityDims::uniform(8));
        assert_eq!(c.adapt.k, 4);
        assert_eq!(c.adapt.ablations.len(), 2);
        assert_eq!(c.adapt.bank_capacity, Some(30));
        assert_eq!(c.pretrain.optimizer.learning_rate, 0.01);
        assert_eq!(c.model.fusion_heads, Some(2));

        let text = c.to_text();
        let pairs = parse_pairs(&text).unwrap();
        let mut back = RunConfig::default();
        back.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        assert!(c.apply([("adapt.nope", "1")]).is_err());
        assert!(c.apply([("adapt.k", "-1")]).is_err());
        assert!(c.apply([("adapt.ablations", "bogus")]).is_err());
        assert!(parse_pairs("just words").is_err());
    }
}
