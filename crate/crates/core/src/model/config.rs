use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::CombinedTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// One joint network and softmax over the combined symbol set.
    Vanilla,
    /// Language-specific joints whose posteriors are concatenated with
    /// fixed equal weights.
    #[serde(rename = "multisoftmax")]
    MultiSoftmax,
    /// Language-specific joints weighted per frame by self-attention.
    #[serde(rename = "multisoftmax_attn")]
    MultiSoftmaxAttn,
}

impl Architecture {
    pub fn has_language_joints(self) -> bool {
        !matches!(self, Architecture::Vanilla)
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Vanilla => "vanilla",
            Architecture::MultiSoftmax => "multisoftmax",
            Architecture::MultiSoftmaxAttn => "multisoftmax_attn",
        }
    }
}

/// How many future encoder frames the attention may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LookAhead {
    Frames(usize),
    Infinite,
}

impl LookAhead {
    /// Index of the last frame visible from frame `t` of a `len`-frame input.
    pub fn last_visible(self, t: usize, len: usize) -> usize {
        match self {
            LookAhead::Frames(l) => (t + l).min(len - 1),
            LookAhead::Infinite => len - 1,
        }
    }

    pub fn frames(self) -> Option<usize> {
        match self {
            LookAhead::Frames(l) => Some(l),
            LookAhead::Infinite => None,
        }
    }
}

impl fmt::Display for LookAhead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LookAhead::Frames(l) => write!(f, "{l}"),
            LookAhead::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for LookAhead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinite" | "infinity" => Ok(LookAhead::Infinite),
            _ => s
                .parse()
                .map(LookAhead::Frames)
                .map_err(|_| Error::Config(format!("look-ahead {s:?} is neither a frame count nor \"inf\""))),
        }
    }
}

impl Serialize for LookAhead {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LookAhead::Frames(l) => s.serialize_u64(*l as u64),
            LookAhead::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for LookAhead {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(LookAhead::Frames(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub key_dim: usize,
    pub ffn_hidden: usize,
    pub look_ahead: LookAhead,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            key_dim: 16,
            ffn_hidden: 16,
            look_ahead: LookAhead::Frames(10),
        }
    }
}

/// Network sizes independent of the architecture and symbol tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSizes {
    pub encoder_layers: usize,
    pub encoder_hidden: usize,
    pub prediction_layers: usize,
    pub prediction_hidden: usize,
    pub joint_hidden: usize,
    pub attention: AttentionConfig,
}

impl Default for ModelSizes {
    fn default() -> Self {
        Self {
            encoder_layers: 1,
            encoder_hidden: 48,
            prediction_layers: 1,
            prediction_hidden: 48,
            joint_hidden: 48,
            attention: AttentionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub encoder_layers: usize,
    pub encoder_hidden: usize,
    pub prediction_layers: usize,
    pub prediction_hidden: usize,
    pub joint_hidden: usize,
    /// Present exactly when the architecture is `multisoftmax_attn`.
    pub attention: Option<AttentionConfig>,
    pub table: CombinedTable,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, input_dim: usize, sizes: &ModelSizes, table: CombinedTable) -> Self {
        Self {
            architecture,
            input_dim,
            encoder_layers: sizes.encoder_layers,
            encoder_hidden: sizes.encoder_hidden,
            prediction_layers: sizes.prediction_layers,
            prediction_hidden: sizes.prediction_hidden,
            joint_hidden: sizes.joint_hidden,
            attention: (architecture == Architecture::MultiSoftmaxAttn).then(|| sizes.attention.clone()),
            table,
        }
    }

    /// Same trunk and joints under another architecture.
    pub fn with_architecture(&self, architecture: Architecture, attention: Option<AttentionConfig>) -> Self {
        Self {
            architecture,
            attention: if architecture == Architecture::MultiSoftmaxAttn {
                attention.or_else(|| self.attention.clone()).or_else(|| Some(AttentionConfig::default()))
            } else {
                None
            },
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("encoder_layers", self.encoder_layers),
            ("encoder_hidden", self.encoder_hidden),
            ("prediction_layers", self.prediction_layers),
            ("prediction_hidden", self.prediction_hidden),
            ("joint_hidden", self.joint_hidden),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        match (&self.attention, self.architecture) {
            (Some(a), Architecture::MultiSoftmaxAttn) => {
                if a.key_dim == 0 || a.ffn_hidden == 0 {
                    return Err(Error::Config("attention dims must be >= 1".into()));
                }
            }
            (None, Architecture::MultiSoftmaxAttn) => {
                return Err(Error::Config("multisoftmax_attn needs an attention config".into()))
            }
            (Some(_), arch) => {
                return Err(Error::Config(format!("{} takes no attention config", arch.name())))
            }
            (None, _) => {}
        }
        Ok(())
    }

    pub fn look_ahead(&self) -> Option<LookAhead> {
        self.attention.as_ref().map(|a| a.look_ahead)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_ahead_serde() {
        let la: Vec<LookAhead> = serde_json::from_str(r#"[10, "inf", 0]"#).unwrap();
        assert_eq!(la, vec![LookAhead::Frames(10), LookAhead::Infinite, LookAhead::Frames(0)]);
        assert_eq!(serde_json::to_string(&la).unwrap(), r#"[10,"inf",0]"#);
        assert!("soon".parse::<LookAhead>().is_err());
    }

    #[test]
    fn last_visible_frame() {
        assert_eq!(LookAhead::Frames(3).last_visible(2, 10), 5);
        assert_eq!(LookAhead::Frames(3).last_visible(8, 10), 9);
        assert_eq!(LookAhead::Infinite.last_visible(0, 10), 9);
    }
}
