//! Flat `key = value` run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{DEFAULT_MAX_LEN, DEFAULT_MIN_WORD_FREQ};
use crate::error::{Error, Result};
use crate::model::{parse_num, ModelConfig};
use crate::trainer::TrainConfig;

/// Everything one command needs: inputs, hyperparameters and output location.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    /// Prepared dataset bundle.
    pub bundle: Option<PathBuf>,
    /// Structure-only checkpoint used to initialise joint training.
    pub pretrained: Option<PathBuf>,
    pub out: PathBuf,
    pub max_len: usize,
    pub min_word_freq: usize,
    pub gate_groups: usize,
    pub model: ModelConfig,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            valid: None,
            test: None,
            descriptions: None,
            bundle: None,
            pretrained: None,
            out: PathBuf::from("out"),
            max_len: DEFAULT_MAX_LEN,
            min_word_freq: DEFAULT_MIN_WORD_FREQ,
            gate_groups: crate::eval::DEFAULT_GATE_GROUPS,
            model: ModelConfig::default(),
            training: TrainConfig::default(),
        }
    }
}

fn path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Applies one setting; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "train" => self.train = path(value),
            "valid" => self.valid = path(value),
            "test" => self.test = path(value),
            "descriptions" => self.descriptions = path(value),
            "bundle" => self.bundle = path(value),
            "pretrained" => self.pretrained = path(value),
            "out" => self.out = path(value).unwrap_or_else(|| PathBuf::from(".")),
            "max_len" => self.max_len = parse_num(key, value)?,
            "min_word_freq" => self.min_word_freq = parse_num(key, value)?,
            "gate_groups" => self.gate_groups = parse_num(key, value)?,
            _ => {
                if !self.model.set(key, value)? && !self.training.set(key, value)? {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a
    /// comment; blank lines are ignored; later keys override earlier ones.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(k.trim(), v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    /// Checks hyperparameters and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        self.validate_hyperparameters()?;
        self.validate_paths(&["train", "valid", "test", "bundle", "pretrained"])
    }

    pub fn validate_hyperparameters(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()?;
        if self.gate_groups == 0 {
            return Err(Error::Config("gate_groups must be positive".into()));
        }
        Ok(())
    }

    /// Checks that the inputs named by `keys` exist, where set.
    pub fn validate_paths(&self, keys: &[&str]) -> Result<()> {
        for &key in keys {
            let p = match key {
                "train" => &self.train,
                "valid" => &self.valid,
                "test" => &self.test,
                "descriptions" => &self.descriptions,
                "bundle" => &self.bundle,
                "pretrained" => &self.pretrained,
                other => return Err(Error::Config(format!("`{other}` is not a path key"))),
            };
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!("`{key}` path {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Canonical `key=value` rendering of the hyperparameters.
    pub fn hyperparameters(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.model.to_pairs().into_iter().chain(self.training.to_pairs()) {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderKind;
    use crate::model::Dissimilarity;

    const SAMPLE: &str = "\
# preset
train = data/train.txt
dim = 50   # embedding size
encoder = alstm
dissimilarity = l2
margin=1
batch_size = 256
seed = 7
";

    #[test]
    fn parses_all_key_families() {
        let cfg = RunConfig::parse(SAMPLE, Path::new("x.conf")).unwrap();
        assert_eq!(cfg.train, Some(PathBuf::from("data/train.txt")));
        assert_eq!(cfg.model.dim, 50);
        assert_eq!(cfg.model.encoder, Some(EncoderKind::Alstm));
        assert_eq!(cfg.model.dissimilarity, Dissimilarity::SqL2);
        assert_eq!(cfg.model.margin, 1.0);
        assert_eq!((cfg.training.batch_size, cfg.training.seed), (256, 7));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::parse("dim = 4\n\nbogus = 1\n", Path::new("x.conf")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn missing_input_fails_validation() {
        let mut cfg = RunConfig::default();
        cfg.set("train", "/definitely/not/here.txt").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn odd_dim_with_lstm_fails_validation() {
        let cfg = RunConfig::parse("encoder = lstm\ndim = 5\n", Path::new("x")).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn shipped_presets_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["wn18.conf", "fb15k.conf"] {
            let cfg = RunConfig::load(&dir.join(name)).unwrap();
            assert_eq!(cfg.model.dissimilarity, Dissimilarity::L1);
            assert_eq!(cfg.model.margin, 2.0);
            cfg.model.validate().unwrap();
        }
    }
}
