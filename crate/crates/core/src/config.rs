//! Plain-text `key=value` configuration with dotted keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::decision::{FusionWeights, PostprocessConfig};
use crate::error::{Error, Result};
use crate::feature_fusion::{AttentionKind, Pool, SelectionConfig};
use crate::pixel::latlrr::LatLrrOptions;
use crate::pixel::{LevelSelector, Pairing};
use crate::scalar::Scalar;
use crate::tracker::{FusionMode, TrackerConfig};

/// Every key the toolkit understands, with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("backbone.seed", "7"),
    ("fusion.mode", "decision_dfat"),
    ("fusion.s", "0.5"),
    ("fusion.lambda11", "0.5"),
    ("fusion.lambda21", "0.5"),
    ("post.window_influence", "0.4"),
    ("post.penalty_k", "0.04"),
    ("post.size_lr", "0.32"),
    ("feat.selection", "true"),
    ("feat.keep", "0.8"),
    ("feat.type", "C"),
    ("feat.vector", "max"),
    ("feat.scalar", "mean"),
    ("pixel.level", "2"),
    ("pixel.pairing", "fused_tir"),
    ("pixel.patch", "16"),
    ("pixel.stride", "0"),
    ("pixel.train_patches", "300"),
    ("pixel.lambda", "0.4"),
    ("template.update", "true"),
    ("template.lr", "0.1"),
    ("template.cadence", "10"),
    ("tracker.context_amount", "0.5"),
    ("head.cls_gain", "16"),
    ("head.reg_gain", "0.0001"),
    ("eval.protocol", "restarts"),
    ("eval.burn_in", "10"),
    ("eval.eao_lo", "0"),
    ("eval.eao_hi", "0"),
];

/// Benchmark protocol run by `eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Supervised runs reinitialized after each failure.
    Restarts,
    /// Runs from fixed anchor frames, stopping at the first failure.
    Anchors,
    /// One pass from the first frame; also reports success and precision.
    OnePass,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restarts" => Ok(Self::Restarts),
            "anchors" => Ok(Self::Anchors),
            "ope" | "gtot" => Ok(Self::OnePass),
            other => Err(Error::Config(format!("eval.protocol must be restarts, anchors or ope, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub burn_in: usize,
    /// Explicit EAO interval; derived from the run lengths when `None`.
    pub interval: Option<(usize, usize)>,
}

/// Settings of the pixel-level projection training.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTraining {
    pub patch_side: usize,
    pub patches: usize,
    pub seed: u64,
    pub options: LatLrrOptions,
}

/// Raw key/value store; typed views are built on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn split_pair(line: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = line.split_once('=').ok_or_else(|| format!("expected key=value, got `{line}`"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err("empty key".into());
    }
    Ok((k.to_string(), v.to_string()))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got `{other}`"))),
    }
}

impl Config {
    /// Parses `key=value` lines; `#` starts a comment, blank lines are ignored.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).map_err(|reason| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            })?;
            cfg.set(&k, &v).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = split_pair(pair).map_err(Error::Config)?;
        self.set(&k, &v)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("all keys carry defaults")
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parsed<V: FromStr>(&self, key: &str) -> Result<V>
    where
        V::Err: fmt::Display,
    {
        let raw = self.get(key);
        raw.parse()
            .map_err(|e| Error::Config(format!("{key}: cannot parse `{raw}`: {e}")))
    }

    fn real<T: Scalar>(&self, key: &str) -> Result<T> {
        let v: f64 = self.parsed(key)?;
        if !v.is_finite() {
            return Err(Error::Config(format!("{key}: must be finite")));
        }
        Ok(T::lit(v))
    }

    pub fn mode(&self) -> Result<FusionMode> {
        self.get("fusion.mode").parse()
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed("backbone.seed")
    }

    pub fn tracker<T: Scalar>(&self) -> Result<TrackerConfig<T>> {
        let mut cfg = TrackerConfig::<T> {
            mode: self.mode()?,
            ..TrackerConfig::default()
        };
        cfg.weights = FusionWeights::new(
            self.real("fusion.lambda11")?,
            self.real("fusion.lambda21")?,
            self.real("fusion.s")?,
        )
        .map_err(config_error)?;
        cfg.post = PostprocessConfig::new(
            self.real("post.window_influence")?,
            self.real("post.penalty_k")?,
            self.real("post.size_lr")?,
        )
        .map_err(config_error)?;
        cfg.selection =
            SelectionConfig::new(parse_bool("feat.selection", self.get("feat.selection"))?, self.parsed("feat.keep")?)
                .map_err(config_error)?;
        cfg.attention.kind = self.get("feat.type").parse::<AttentionKind>()?;
        cfg.attention.vector_pool = self.get("feat.vector").parse::<Pool>()?;
        cfg.attention.scalar_reduce = self.get("feat.scalar").parse::<Pool>()?;
        cfg.level = LevelSelector::new(self.parsed("pixel.level")?).map_err(config_error)?;
        cfg.pairing = self.get("pixel.pairing").parse::<Pairing>().map_err(config_error)?;
        let stride: usize = self.parsed("pixel.stride")?;
        cfg.pixel_stride = (stride > 0).then_some(stride);
        cfg.template_update = parse_bool("template.update", self.get("template.update"))?;
        cfg.template_lr = self.real("template.lr")?;
        cfg.template_cadence = self.parsed("template.cadence")?;
        cfg.context_amount = self.real("tracker.context_amount")?;
        let seed = self.seed()?;
        cfg.backbone.seed = seed;
        cfg.head.seed = seed;
        cfg.head.cls_gain = self.parsed("head.cls_gain")?;
        cfg.head.reg_gain = self.parsed("head.reg_gain")?;
        cfg.validate().map_err(config_error)?;
        Ok(cfg)
    }

    pub fn eval(&self) -> Result<EvalConfig> {
        let lo: usize = self.parsed("eval.eao_lo")?;
        let hi: usize = self.parsed("eval.eao_hi")?;
        let interval = match (lo, hi) {
            (0, 0) => None,
            (lo, hi) if lo >= 1 && lo <= hi => Some((lo, hi)),
            _ => return Err(Error::Config(format!("eval.eao_lo/hi: [{lo}, {hi}] is not a valid interval"))),
        };
        Ok(EvalConfig {
            protocol: self.get("eval.protocol").parse()?,
            burn_in: self.parsed("eval.burn_in")?,
            interval,
        })
    }

    pub fn pixel_training(&self) -> Result<PixelTraining> {
        let patch_side: usize = self.parsed("pixel.patch")?;
        let patches: usize = self.parsed("pixel.train_patches")?;
        if patch_side < 2 || patches == 0 {
            return Err(Error::Config("pixel.patch must be >= 2 and pixel.train_patches >= 1".into()));
        }
        Ok(PixelTraining {
            patch_side,
            patches,
            seed: self.seed()?,
            options: LatLrrOptions {
                lambda: self.parsed("pixel.lambda")?,
                ..LatLrrOptions::default()
            },
        })
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_map_to_default_tracker() {
        let cfg = Config::default().tracker::<f64>().unwrap();
        assert_eq!(cfg, TrackerConfig::<f64>::default());
    }

    #[test]
    fn file_and_overrides() {
        let text = "# comment\nfusion.mode = decision_avg\n\npost.penalty_k=0.1 # trailing\n";
        let mut c = Config::parse(text, Path::new("x.cfg")).unwrap();
        c.apply_override("fusion.s=0.47").unwrap();
        let t = c.tracker::<f64>().unwrap();
        assert_eq!(t.mode, FusionMode::DecisionAvg);
        assert_eq!(t.weights.s, 0.47);
        assert_eq!(t.post.penalty_k, 0.1);
    }

    #[test]
    fn errors_carry_line_numbers_and_are_config_errors() {
        let err = Config::parse("fusion.s=0.5\nbogus\n", Path::new("c.cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(Config::default().apply_override("nope.key=1").unwrap_err().is_config());
        let mut c = Config::default();
        c.set("fusion.s", "-1").unwrap();
        assert!(c.tracker::<f32>().unwrap_err().is_config());
        c.set("fusion.s", "0.5").unwrap();
        c.set("feat.type", "Q").unwrap();
        assert!(c.tracker::<f32>().unwrap_err().is_config());
    }

    #[test]
    fn eval_interval() {
        let mut c = Config::default();
        assert_eq!(c.eval().unwrap().interval, None);
        c.set("eval.eao_lo", "5").unwrap();
        assert!(c.eval().is_err());
        c.set("eval.eao_hi", "9").unwrap();
        assert_eq!(c.eval().unwrap().interval, Some((5, 9)));
    }
}
