use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Lstm,
    Bilstm,
    Cnnlstm,
    LstmAtt,
    Jlstm,
    Clstm,
    Hlstm,
    Hdlstm,
}

impl Architecture {
    pub const ALL: [Architecture; 8] = [
        Architecture::Lstm,
        Architecture::Bilstm,
        Architecture::Cnnlstm,
        Architecture::LstmAtt,
        Architecture::Jlstm,
        Architecture::Clstm,
        Architecture::Hlstm,
        Architecture::Hdlstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Lstm => "lstm",
            Architecture::Bilstm => "bilstm",
            Architecture::Cnnlstm => "cnnlstm",
            Architecture::LstmAtt => "lstm_att",
            Architecture::Jlstm => "jlstm",
            Architecture::Clstm => "clstm",
            Architecture::Hlstm => "hlstm",
            Architecture::Hdlstm => "hdlstm",
        }
    }

    /// Architectures that only read the target tweet's content.
    pub fn content_only(self) -> bool {
        matches!(
            self,
            Architecture::Lstm | Architecture::Bilstm | Architecture::Cnnlstm | Architecture::LstmAtt
        )
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '+', '_'], "");
        Architecture::ALL
            .into_iter()
            .find(|a| a.name().replace('_', "") == norm)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// Contextual feature switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Features {
    #[serde(default)]
    pub pos: bool,
    #[serde(default)]
    pub time: bool,
    #[serde(default)]
    pub history: bool,
}

impl Features {
    pub const NONE: Features = Features {
        pos: false,
        time: false,
        history: false,
    };
    pub const ALL: Features = Features {
        pos: true,
        time: true,
        history: true,
    };

    pub fn any(self) -> bool {
        self.pos || self.time || self.history
    }
}

impl FromStr for Features {
    type Err = Error;

    /// Comma-separated subset of `pos,time,history`; `none` or empty is the
    /// empty set.
    fn from_str(s: &str) -> Result<Self> {
        let mut f = Features::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "pos" => f.pos = true,
                "time" => f.time = true,
                "history" => f.history = true,
                "none" => {}
                "all" => f = Features::ALL,
                other => return Err(Error::Config(format!("unknown feature {other:?}"))),
            }
        }
        Ok(f)
    }
}

impl fmt::Display for Features {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.pos, "pos"), (self.time, "time"), (self.history, "history")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

/// Declarative description of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub features: Features,
    pub history_len: usize,
    pub content_dim: usize,
    pub pos_dim: usize,
    pub day_dim: usize,
    pub period_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub attention: bool,
    pub peephole: bool,
    pub conv_width: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::Hdlstm,
            features: Features::ALL,
            history_len: 5,
            content_dim: 200,
            pos_dim: 20,
            day_dim: 20,
            period_dim: 20,
            hidden: 200,
            dropout: 0.2,
            attention: false,
            peephole: true,
            conv_width: 3,
            init_std: 0.05,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn new(architecture: Architecture, features: Features) -> Self {
        Self {
            architecture,
            features,
            attention: architecture == Architecture::LstmAtt,
            ..Self::default()
        }
    }

    /// Number of history slots the model actually reads.
    pub fn history_slots(&self) -> usize {
        if self.features.history {
            self.history_len
        } else {
            0
        }
    }

    pub fn time_dim(&self) -> usize {
        self.day_dim + self.period_dim
    }

    /// Width of the per-step context vector injected into the gates.
    pub fn context_dim(&self) -> usize {
        let mut d = 0;
        if self.features.pos {
            d += self.pos_dim;
        }
        if self.features.time {
            d += self.time_dim();
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        let arch = self.architecture;
        if arch.content_only() && self.features.any() {
            return Err(Error::Config(format!(
                "{arch} reads content only but features {} were requested",
                self.features
            )));
        }
        if arch == Architecture::Hlstm {
            if !self.features.history {
                return Err(Error::Config("hlstm requires the history feature".into()));
            }
            if self.features.pos || self.features.time {
                return Err(Error::Config("hlstm takes history only, not pos/time".into()));
            }
        }
        match arch {
            Architecture::LstmAtt if !self.attention => {
                return Err(Error::Config("lstm_att needs attention enabled".into()))
            }
            Architecture::LstmAtt | Architecture::Hlstm | Architecture::Hdlstm => {}
            _ if self.attention => {
                return Err(Error::Config(format!("{arch} has no attention variant")))
            }
            _ => {}
        }
        let dims = [
            ("content_dim", self.content_dim),
            ("hidden", self.hidden),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.features.pos && self.pos_dim == 0 {
            return Err(Error::Config("pos_dim must be positive".into()));
        }
        if self.features.time && (self.day_dim == 0 || self.period_dim == 0) {
            return Err(Error::Config("day_dim and period_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.conv_width.is_multiple_of(2) {
            return Err(Error::Config(format!("conv_width {} must be odd", self.conv_width)));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Config(format!("init_std {} invalid", self.init_std)));
        }
        Ok(())
    }
}
