use std::fmt;
use std::str::FromStr;

use crate::encoders::EncoderKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dissimilarity {
    L1,
    /// Squared Euclidean distance.
    SqL2,
}

impl Dissimilarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Dissimilarity::L1 => "l1",
            Dissimilarity::SqL2 => "l2",
        }
    }
}

impl fmt::Display for Dissimilarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dissimilarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Dissimilarity::L1),
            "l2" | "sq_l2" | "sql2" => Ok(Dissimilarity::SqL2),
            other => Err(Error::Config(format!("unknown dissimilarity `{other}` (l1|l2)"))),
        }
    }
}

/// Architecture and optimisation hyperparameters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    /// `None` is the structure-only translational baseline.
    pub encoder: Option<EncoderKind>,
    pub dissimilarity: Dissimilarity,
    pub margin: f64,
    pub l2: f64,
    pub lr_structure: f64,
    pub lr_text: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 20,
            encoder: Some(EncoderKind::Nbow),
            dissimilarity: Dissimilarity::L1,
            margin: 2.0,
            l2: 1e-5,
            lr_structure: 0.01,
            lr_text: 0.1,
        }
    }
}

pub(crate) fn encoder_name(encoder: Option<EncoderKind>) -> &'static str {
    encoder.map_or("none", EncoderKind::as_str)
}

pub(crate) fn parse_encoder(s: &str) -> Result<Option<EncoderKind>> {
    match s.to_ascii_lowercase().as_str() {
        "none" | "transe" => Ok(None),
        other => other.parse().map(Some),
    }
}

pub(crate) fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl ModelConfig {
    /// The structure-only baseline with the given hyperparameters.
    pub fn transe(dim: usize, dissimilarity: Dissimilarity, margin: f64, lr: f64) -> Self {
        ModelConfig {
            dim,
            encoder: None,
            dissimilarity,
            margin,
            l2: 0.0,
            lr_structure: lr,
            lr_text: lr,
        }
    }

    pub const KEYS: [&'static str; 7] = ["dim", "encoder", "dissimilarity", "margin", "l2", "lr_structure", "lr_text"];

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.encoder.is_some_and(EncoderKind::uses_lstm) && !self.dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "dim must be even for the {} encoder, got {}",
                encoder_name(self.encoder),
                self.dim
            )));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        for (k, v) in [("l2", self.l2), ("lr_structure", self.lr_structure), ("lr_text", self.lr_text)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Returns `false` for keys this struct
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "dim" => self.dim = parse_num(key, value)?,
            "encoder" => self.encoder = parse_encoder(value.trim())?,
            "dissimilarity" => self.dissimilarity = value.trim().parse()?,
            "margin" => self.margin = parse_num(key, value)?,
            "l2" => self.l2 = parse_num(key, value)?,
            "lr_structure" => self.lr_structure = parse_num(key, value)?,
            "lr_text" => self.lr_text = parse_num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Ordered `key=value` pairs; floats use the shortest round-tripping form.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("dim".into(), self.dim.to_string()),
            ("encoder".into(), encoder_name(self.encoder).into()),
            ("dissimilarity".into(), self.dissimilarity.to_string()),
            ("margin".into(), format!("{:?}", self.margin)),
            ("l2".into(), format!("{:?}", self.l2)),
            ("lr_structure".into(), format!("{:?}", self.lr_structure)),
            ("lr_text".into(), format!("{:?}", self.lr_text)),
        ]
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
