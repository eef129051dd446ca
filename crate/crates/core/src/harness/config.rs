use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{invalid, Error, Result};
use crate::finder::{HyperParams, ScheduleMode, ZetaSchedule};
use crate::objectives::BenchmarkId;

/// Environment variable consulted for the seed when neither a flag nor the
/// config file provides one.
pub const SEED_ENV: &str = "FINDER_OPT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Finder,
    Adam,
    Gd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Finder => "finder",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Gd => "gd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finder" => Ok(OptimizerKind::Finder),
            "adam" => Ok(OptimizerKind::Adam),
            "gd" => Ok(OptimizerKind::Gd),
            _ => Err(Error::Config(format!(
                "unknown optimizer `{s}` (expected finder|adam|gd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Benchmark(BenchmarkId),
    /// Small classifier on synthetic blobs, trained on mini-batches.
    Tinynet,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::Benchmark(id) => id.fmt(f),
            ObjectiveKind::Tinynet => f.write_str("tinynet"),
        }
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "tinynet" {
            Ok(ObjectiveKind::Tinynet)
        } else {
            s.parse().map(ObjectiveKind::Benchmark)
        }
    }
}

/// Mini-batch classifier settings used when the objective is `tinynet`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub samples: usize,
    pub batch_size: usize,
    pub radius: f64,
    /// Stop once training accuracy reaches this value.
    pub target_accuracy: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16, 16],
            samples: 1000,
            batch_size: 100,
            radius: 2.5,
            target_accuracy: 1.0,
        }
    }
}

/// Everything needed to execute one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub optimizer: OptimizerKind,
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub epochs: usize,
    pub eps_tol: f64,
    pub seed: u64,
    pub hyper: HyperParams,
    pub schedule: ZetaSchedule,
    /// Step size for adam and gd.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub net: NetConfig,
    pub out: Option<PathBuf>,
    /// Record wall time in traces; switch off for byte-reproducible files.
    pub wall_time: bool,
    seed_set: bool,
    hyper_touched: Vec<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hyper = HyperParams::default();
        Self {
            optimizer: OptimizerKind::Finder,
            objective: ObjectiveKind::Benchmark(BenchmarkId::Sphere),
            dim: 5,
            epochs: hyper.max_epochs,
            eps_tol: hyper.eps_tol,
            seed: 0,
            hyper,
            schedule: ZetaSchedule::default(),
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            net: NetConfig::default(),
            out: None,
            wall_time: true,
            seed_set: false,
            hyper_touched: Vec::new(),
        }
    }
}

/// Keys accepted in config files and by `--set`.
pub const KNOWN_KEYS: &[&str] = &[
    "optimizer",
    "objective",
    "dim",
    "epochs",
    "eps_tol",
    "seed",
    "out",
    "wall_time",
    "p",
    "theta",
    "gamma",
    "c_s",
    "c_alpha",
    "zeta1",
    "zeta2",
    "delta_min",
    "alpha_fallback",
    "alpha_cap",
    "cache_retained",
    "schedule",
    "zeta_start",
    "zeta_end",
    "zeta_horizon",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "hidden",
    "samples",
    "batch_size",
    "radius",
    "target_accuracy",
];

impl RunConfig {
    /// Applies one key/value pair. Values may be JSON scalars or strings that
    /// parse as the expected type.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        match key {
            "optimizer" => self.optimizer = as_str(key, value)?.parse()?,
            "objective" => self.objective = as_str(key, value)?.parse()?,
            "dim" => self.dim = as_usize(key, value)?,
            "epochs" => self.epochs = as_usize(key, value)?,
            "eps_tol" => self.eps_tol = as_f64(key, value)?,
            "seed" => {
                self.seed = as_u64(key, value)?;
                self.seed_set = true;
            }
            "out" => self.out = Some(PathBuf::from(as_str(key, value)?)),
            "wall_time" => self.wall_time = as_bool(key, value)?,
            "p" => self.hyper.p = self.touch("p", as_usize(key, value)?),
            "theta" => self.hyper.theta = self.touch("theta", as_f64(key, value)?),
            "gamma" => self.hyper.gamma = self.touch("gamma", as_f64(key, value)?),
            "c_s" => self.hyper.c_s = self.touch("c_s", as_f64(key, value)?),
            "c_alpha" => self.hyper.c_alpha = self.touch("c_alpha", as_f64(key, value)?),
            "zeta1" => self.hyper.zeta1 = self.touch("zeta1", as_f64(key, value)?),
            "zeta2" => self.hyper.zeta2 = self.touch("zeta2", as_f64(key, value)?),
            "delta_min" => self.hyper.delta_min = self.touch("delta_min", as_f64(key, value)?),
            "alpha_fallback" => {
                self.hyper.alpha_fallback = self.touch("alpha_fallback", as_f64(key, value)?)
            }
            "alpha_cap" => self.hyper.alpha_cap = self.touch("alpha_cap", as_f64(key, value)?),
            "cache_retained" => {
                self.hyper.cache_retained = self.touch("cache_retained", as_bool(key, value)?)
            }
            "schedule" => {
                self.schedule.mode = match as_str(key, value)?.as_str() {
                    "constant" => ScheduleMode::Constant,
                    "linear" => ScheduleMode::Linear,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown schedule `{other}` (expected constant|linear)"
                        )))
                    }
                }
            }
            "zeta_start" => self.schedule.start = as_f64(key, value)?,
            "zeta_end" => self.schedule.end = as_f64(key, value)?,
            "zeta_horizon" => self.schedule.horizon_epochs = as_usize(key, value)?,
            "lr" => self.lr = as_f64(key, value)?,
            "beta1" => self.beta1 = as_f64(key, value)?,
            "beta2" => self.beta2 = as_f64(key, value)?,
            "adam_eps" => self.adam_eps = as_f64(key, value)?,
            "hidden" => self.net.hidden = parse_hidden(value)?,
            "samples" => self.net.samples = as_usize(key, value)?,
            "batch_size" => self.net.batch_size = as_usize(key, value)?,
            "radius" => self.net.radius = as_f64(key, value)?,
            "target_accuracy" => self.net.target_accuracy = as_f64(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        self.set(key.trim(), &value)
    }

    /// Applies every entry of a flat JSON object.
    pub fn merge_json(&mut self, text: &str) -> Result<()> {
        let doc: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("malformed config JSON: {e}")))?;
        let map: Map<String, Value> = match doc {
            Value::Object(map) => map,
            _ => return Err(Error::Config("config must be a flat JSON object".into())),
        };
        for (key, value) in &map {
            if value.is_object() {
                return Err(Error::Config(format!("config key `{key}` must be a scalar")));
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Fills the seed from [`SEED_ENV`] if nothing else set it.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if self.seed_set {
            return Ok(());
        }
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{raw}`")))?;
            self.seed_set = true;
        }
        Ok(())
    }

    pub fn seed_is_set(&self) -> bool {
        self.seed_set
    }

    /// Hyperparameters for a FINDER run: the noisy preset underlies
    /// `tinynet` runs, explicit settings always win.
    pub fn finder_params(&self) -> HyperParams {
        let mut hp = if self.objective == ObjectiveKind::Tinynet {
            let mut base = crate::finder::noisy_preset();
            for &key in &self.hyper_touched {
                copy_field(&mut base, &self.hyper, key);
            }
            base
        } else {
            self.hyper.clone()
        };
        hp.eps_tol = self.eps_tol;
        hp.max_epochs = self.epochs;
        hp.seed = self.seed;
        hp
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim", "dim must be ≥ 1"));
        }
        if let ObjectiveKind::Benchmark(id) = self.objective {
            if self.dim < id.min_dim() {
                return Err(invalid(
                    "dim",
                    format!("{id} needs dim ≥ {}", id.min_dim()),
                ));
            }
        }
        if !(self.eps_tol.is_finite() && self.eps_tol > 0.0) {
            return Err(invalid("eps_tol", "must be finite and > 0"));
        }
        self.finder_params().validate()?;
        self.schedule.validate()?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid("lr", "must be finite and > 0"));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(name, "must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(invalid("adam_eps", "must be > 0"));
        }
        if self.objective == ObjectiveKind::Tinynet {
            if self.net.batch_size == 0 || self.net.batch_size > self.net.samples {
                return Err(invalid("batch_size", "must lie in [1, samples]"));
            }
            if self.net.hidden.contains(&0) {
                return Err(invalid("hidden", "layer widths must be positive"));
            }
        }
        Ok(())
    }

    fn touch<T>(&mut self, key: &'static str, value: T) -> T {
        if !self.hyper_touched.contains(&key) {
            self.hyper_touched.push(key);
        }
        value
    }
}

/// Reads a flat JSON config over the defaults.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = RunConfig::default();
    config.merge_json(&text)?;
    Ok(config)
}

fn copy_field(dst: &mut HyperParams, src: &HyperParams, key: &str) {
    match key {
        "p" => dst.p = src.p,
        "theta" => dst.theta = src.theta,
        "gamma" => dst.gamma = src.gamma,
        "c_s" => dst.c_s = src.c_s,
        "c_alpha" => dst.c_alpha = src.c_alpha,
        "zeta1" => dst.zeta1 = src.zeta1,
        "zeta2" => dst.zeta2 = src.zeta2,
        "delta_min" => dst.delta_min = src.delta_min,
        "alpha_fallback" => dst.alpha_fallback = src.alpha_fallback,
        "alpha_cap" => dst.alpha_cap = src.alpha_cap,
        "cache_retained" => dst.cache_retained = src.cache_retained,
        _ => {}
    }
}

fn type_error(key: &str, expected: &str, value: &Value) -> Error {
    Error::Config(format!("`{key}` expects {expected}, got {value}"))
}

fn as_str(key: &str, value: &Value) -> Result<String> {
    match value {
        Value::String(s) => Ok(s.clone()),
        _ => Err(type_error(key, "a string", value)),
    }
}

fn as_f64(key: &str, value: &Value) -> Result<f64> {
    match value {
        Value::Number(n) => n.as_f64().ok_or_else(|| type_error(key, "a number", value)),
        Value::String(s) => s.trim().parse().map_err(|_| type_error(key, "a number", value)),
        _ => Err(type_error(key, "a number", value)),
    }
}

fn as_u64(key: &str, value: &Value) -> Result<u64> {
    match value {
        Value::Number(n) => n
            .as_u64()
            .ok_or_else(|| type_error(key, "a non-negative integer", value)),
        Value::String(s) => s
            .trim()
            .parse()
            .map_err(|_| type_error(key, "a non-negative integer", value)),
        _ => Err(type_error(key, "a non-negative integer", value)),
    }
}

fn as_usize(key: &str, value: &Value) -> Result<usize> {
    as_u64(key, value).map(|v| v as usize)
}

fn as_bool(key: &str, value: &Value) -> Result<bool> {
    match value {
        Value::Bool(b) => Ok(*b),
        Value::String(s) if s == "true" => Ok(true),
        Value::String(s) if s == "false" => Ok(false),
        _ => Err(type_error(key, "a boolean", value)),
    }
}

fn parse_hidden(value: &Value) -> Result<Vec<usize>> {
    let parse = |s: &str| -> Result<Vec<usize>> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|w| {
                w.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad hidden width `{w}`")))
            })
            .collect()
    };
    match value {
        Value::String(s) => parse(s),
        Value::Number(n) => n
            .as_u64()
            .map(|v| vec![v as usize])
            .ok_or_else(|| type_error("hidden", "comma-separated widths", value)),
        _ => Err(type_error("hidden", "comma-separated widths", value)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_example_gets_defaults() {
        let mut c = RunConfig::default();
        c.merge_json(r#"{"optimizer":"finder","objective":"ackley","dim":5000}"#)
            .unwrap();
        c.validate().unwrap();
        assert_eq!(c.objective, ObjectiveKind::Benchmark(BenchmarkId::Ackley));
        assert_eq!(c.dim, 5000);
        assert_eq!(c.hyper, HyperParams::default());
    }

    #[test]
    fn theta_out_of_range() {
        let mut c = RunConfig::default();
        c.merge_json(r#"{"theta":1.5}"#).unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");
    }

    #[test]
    fn empty_and_malformed_inputs() {
        let mut c = RunConfig::default();
        let err = c.merge_json("").unwrap_err();
        assert!(err.to_string().contains("malformed config JSON"));
        let err = c.merge_json(r#"{"bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("unknown config key `bogus`"));
        let err = c.merge_json("[1, 2]").unwrap_err();
        assert!(err.to_string().contains("flat JSON object"));
    }

    #[test]
    fn set_pairs() {
        let mut c = RunConfig::default();
        c.set_pair("gamma=0.5").unwrap();
        c.set_pair("objective=rastrigin").unwrap();
        c.set_pair("hidden=8,8").unwrap();
        c.set_pair("cache_retained=false").unwrap();
        assert_eq!(c.hyper.gamma, 0.5);
        assert_eq!(c.net.hidden, vec![8, 8]);
        assert!(!c.hyper.cache_retained);
        assert!(c.set_pair("novalue").is_err());
    }

    #[test]
    fn tinynet_uses_noisy_preset_with_overrides() {
        let mut c = RunConfig::default();
        c.set_pair("objective=tinynet").unwrap();
        c.set_pair("gamma=0.5").unwrap();
        let hp = c.finder_params();
        assert_eq!(hp.theta, 0.0);
        assert_eq!(hp.zeta1, 1e-6);
        assert_eq!(hp.gamma, 0.5);
    }

    #[test]
    fn zero_dim_rejected() {
        let c = RunConfig {
            dim: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("dim must be ≥ 1"));
    }
}
