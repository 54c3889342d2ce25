use std::collections::HashMap;

use super::config::{Architecture, ModelConfig};
use crate::corpus::Lang;
use crate::error::{Error, Result};
use crate::numerics::{ParamRng, Tensor};

/// Name, shape and initialization fan-in of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

fn spec(name: impl Into<String>, shape: &[usize], fan_in: usize) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        fan_in,
    }
}

pub fn joint_prefix(lang: Option<Lang>) -> String {
    match lang {
        None => "joint".to_string(),
        Some(l) => format!("joint_{l}"),
    }
}

fn lstm_specs(prefix: &str, layer: usize, input: usize, hidden: usize) -> [ParamSpec; 3] {
    [
        spec(format!("{prefix}.{layer}.w_ih"), &[input, 4 * hidden], hidden),
        spec(format!("{prefix}.{layer}.w_hh"), &[hidden, 4 * hidden], hidden),
        spec(format!("{prefix}.{layer}.bias"), &[1, 4 * hidden], hidden),
    ]
}

fn joint_specs(cfg: &ModelConfig, lang: Option<Lang>, outputs: usize) -> [ParamSpec; 5] {
    let p = joint_prefix(lang);
    let j = cfg.joint_hidden;
    [
        spec(format!("{p}.enc_proj"), &[cfg.encoder_hidden, j], cfg.encoder_hidden),
        spec(format!("{p}.pred_proj"), &[cfg.prediction_hidden, j], cfg.prediction_hidden),
        spec(format!("{p}.bias"), &[1, j], j),
        spec(format!("{p}.out"), &[j, outputs], j),
        spec(format!("{p}.out_bias"), &[1, outputs], j),
    ]
}

/// Every parameter the architecture needs, in a fixed order.
pub fn param_manifest(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    for l in 0..cfg.encoder_layers {
        let input = if l == 0 { cfg.input_dim } else { cfg.encoder_hidden };
        out.extend(lstm_specs("encoder", l, input, cfg.encoder_hidden));
    }
    let hp = cfg.prediction_hidden;
    out.push(spec("prediction.embedding", &[cfg.table.len() - 1, hp], hp));
    out.push(spec("prediction.start", &[1, hp], hp));
    for l in 0..cfg.prediction_layers {
        out.extend(lstm_specs("prediction", l, hp, hp));
    }
    match cfg.architecture {
        Architecture::Vanilla => out.extend(joint_specs(cfg, None, cfg.table.len())),
        Architecture::MultiSoftmax | Architecture::MultiSoftmaxAttn => {
            for lang in Lang::BOTH {
                out.extend(joint_specs(cfg, Some(lang), cfg.table.table(lang).len()));
            }
        }
    }
    if let (Architecture::MultiSoftmaxAttn, Some(a)) = (cfg.architecture, &cfg.attention) {
        let (he, dk, f) = (cfg.encoder_hidden, a.key_dim, a.ffn_hidden);
        out.push(spec("attention.query", &[he, dk], he));
        out.push(spec("attention.key", &[he, dk], he));
        out.push(spec("attention.value", &[he, dk], he));
        out.push(spec("attention.ffn_w1", &[dk, f], dk));
        out.push(spec("attention.ffn_b1", &[1, f], dk));
        out.push(spec("attention.ffn_w2", &[f, 2], f));
        out.push(spec("attention.ffn_b2", &[1, 2], f));
    }
    out
}

/// Named parameter tensors in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut index = HashMap::new();
        let (mut names, mut tensors) = (Vec::new(), Vec::new());
        for (i, (name, t)) in entries.into_iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate parameter {name}")));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { names, tensors, index })
    }

    /// Uniform(-r, r) initialization with `r = 1/sqrt(fan_in)`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ParamRng::new(seed);
        let entries = param_manifest(cfg)
            .into_iter()
            .map(|s| {
                let t = rng.fan_in(&s.shape, s.fan_in);
                (s.name, t)
            })
            .collect();
        Self::new(entries).expect("manifest names are unique")
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.position(name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))?;
        Ok(&mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Checks names and shapes against a config's manifest.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let manifest = param_manifest(cfg);
        if manifest.len() != self.len() {
            return Err(Error::Config(format!(
                "{} parameters, {} architecture expects {}",
                self.len(),
                cfg.architecture.name(),
                manifest.len()
            )));
        }
        for (s, (name, t)) in manifest.iter().zip(self.iter()) {
            if s.name != name || s.shape != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    s.name,
                    s.shape
                )));
            }
        }
        Ok(())
    }
}
