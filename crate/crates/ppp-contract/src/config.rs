//! Flat key-value run configuration: one `key = value` per line, `#`
//! comments, every key optional with a documented default.
//!
//! ```text
//! # paper parameters
//! delta = 0.1
//! sigma = 0.8
//! sweep = 0.5, 0.8, 1.0
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::hjb::HowardConfig;
use crate::model::{example_bundle, FunctionBundle, ModelParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: malformed line (expected `key = value`)")]
    MalformedLine { line: usize },
    #[error("line {line}: key `{key}`: cannot parse `{value}`")]
    BadValue {
        key: &'static str,
        value: String,
        line: usize,
    },
    #[error("key `{key}`: {message}")]
    Invariant { key: String, message: String },
    #[error("unknown function bundle `{name}` (only `example` is built in)")]
    UnknownBundle { name: String },
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    /// Named function family; `example` is the only built-in. New families
    /// plug in through [`RunConfig::bundle`].
    pub bundle_name: String,
    /// Grid cells N on `[0, x̄]`.
    pub grid_cells: usize,
    pub howard: HowardConfig,
    /// Initial continuation value for simulation; `None` means x̄/2.
    pub x0: Option<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Volatilities for the `sweep` subcommand.
    pub sweep: Vec<f64>,
    pub out_dir: PathBuf,
    /// Initial cost for the risk report; `None` means the model `c0`.
    pub risk_c0: Option<f64>,
    /// Horizon for the risk report; `None` means the simulation horizon.
    pub risk_horizon: Option<f64>,
    pub risk_confidence: f64,
    pub risk_n_paths: usize,
    pub risk_n_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let k = 2.0;
        Self {
            params: ModelParams {
                delta: 0.1,
                k,
                sigma: 0.8,
                r_bar: k + 4.0,
                c0: 10.0,
                x0_welfare: 0.0,
            },
            bundle_name: "example".into(),
            grid_cells: 500,
            howard: HowardConfig::default(),
            x0: None,
            dt: 1e-3,
            horizon: 120.0,
            n_paths: 20_000,
            seed: 42,
            sweep: vec![0.5, 0.8, 1.0],
            out_dir: PathBuf::from("out"),
            risk_c0: None,
            risk_horizon: None,
            risk_confidence: 0.95,
            risk_n_paths: 200_000,
            risk_n_steps: 2_000,
        }
    }
}

impl RunConfig {
    pub fn bundle(&self) -> Result<FunctionBundle, ConfigError> {
        match self.bundle_name.as_str() {
            "example" => Ok(example_bundle()),
            other => Err(ConfigError::UnknownBundle { name: other.into() }),
        }
    }

    pub fn risk_query(&self) -> crate::risk::RiskQuery {
        crate::risk::RiskQuery {
            c0: self.risk_c0.unwrap_or(self.params.c0),
            k: self.params.k,
            sigma: self.params.sigma,
            horizon: self.risk_horizon.unwrap_or(self.horizon),
            confidence: self.risk_confidence,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| match e {
            crate::model::ModelError::InvalidParameter {
                name,
                value,
                constraint,
            } => ConfigError::Invariant {
                key: name.into(),
                message: format!("value {value} violates `{constraint}`"),
            },
            other => ConfigError::Invariant {
                key: "params".into(),
                message: other.to_string(),
            },
        })?;
        self.howard.validate().map_err(|e| ConfigError::Invariant {
            key: "tol/max_iter/rent_grid/effort_grid".into(),
            message: e.to_string(),
        })?;
        let positive: [(&str, f64); 2] = [("dt", self.dt), ("horizon", self.horizon)];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invariant {
                    key: key.into(),
                    message: format!("value {v} must be positive"),
                });
            }
        }
        if self.grid_cells < 2 {
            return Err(ConfigError::Invariant {
                key: "n".into(),
                message: "need at least 2 grid cells".into(),
            });
        }
        if self.n_paths < 1 {
            return Err(ConfigError::Invariant {
                key: "n_paths".into(),
                message: "need at least one path".into(),
            });
        }
        if let Some(x0) = self.x0 {
            if !(x0 >= 0.0 && x0.is_finite()) {
                return Err(ConfigError::Invariant {
                    key: "x0".into(),
                    message: format!("value {x0} must be non-negative"),
                });
            }
        }
        if self.sweep.is_empty() || self.sweep.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(ConfigError::Invariant {
                key: "sweep".into(),
                message: "sweep needs a non-empty list of positive volatilities".into(),
            });
        }
        if !(self.risk_confidence > 0.0 && self.risk_confidence < 1.0) {
            return Err(ConfigError::Invariant {
                key: "risk_confidence".into(),
                message: format!("value {} must lie in (0, 1)", self.risk_confidence),
            });
        }
        Ok(())
    }
}

/// Loads and validates a configuration file; a missing `r_bar` defaults to
/// `k + 4` after `k` is resolved.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    const KEYS: &[&str] = &[
        "delta",
        "k",
        "sigma",
        "r_bar",
        "c0",
        "x0_welfare",
        "bundle",
        "n",
        "tol",
        "max_iter",
        "rent_grid",
        "effort_grid",
        "refine",
        "x0",
        "dt",
        "horizon",
        "n_paths",
        "seed",
        "sweep",
        "out",
        "risk_c0",
        "risk_horizon",
        "risk_confidence",
        "risk_n_paths",
        "risk_n_steps",
    ];

    let mut entries: HashMap<&str, (String, usize)> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::MalformedLine { line });
        };
        let key = key.trim();
        let value = value.trim();
        let Some(&canonical) = KEYS.iter().find(|&&k| k == key) else {
            return Err(ConfigError::UnknownKey {
                key: key.into(),
                line,
            });
        };
        entries.insert(canonical, (value.into(), line));
    }

    fn take<T: std::str::FromStr>(
        entries: &HashMap<&str, (String, usize)>,
        key: &'static str,
        default: T,
    ) -> Result<T, ConfigError> {
        match entries.get(key) {
            None => Ok(default),
            Some((value, line)) => value.parse().map_err(|_| ConfigError::BadValue {
                key,
                value: value.clone(),
                line: *line,
            }),
        }
    }

    let mut config = RunConfig::default();
    config.params.delta = take(&entries, "delta", config.params.delta)?;
    config.params.k = take(&entries, "k", config.params.k)?;
    config.params.sigma = take(&entries, "sigma", config.params.sigma)?;
    config.params.r_bar = take(&entries, "r_bar", config.params.k + 4.0)?;
    config.params.c0 = take(&entries, "c0", config.params.c0)?;
    config.params.x0_welfare = take(&entries, "x0_welfare", config.params.x0_welfare)?;
    config.bundle_name = take(&entries, "bundle", config.bundle_name)?;
    config.grid_cells = take(&entries, "n", config.grid_cells)?;
    config.howard.tol = take(&entries, "tol", config.howard.tol)?;
    config.howard.max_iter = take(&entries, "max_iter", config.howard.max_iter)?;
    config.howard.rent_grid = take(&entries, "rent_grid", config.howard.rent_grid)?;
    config.howard.effort_grid = take(&entries, "effort_grid", config.howard.effort_grid)?;
    config.howard.refine = take(&entries, "refine", config.howard.refine)?;
    if entries.contains_key("x0") {
        config.x0 = Some(take(&entries, "x0", 0.0)?);
    }
    config.dt = take(&entries, "dt", config.dt)?;
    config.horizon = take(&entries, "horizon", config.horizon)?;
    config.n_paths = take(&entries, "n_paths", config.n_paths)?;
    config.seed = take(&entries, "seed", config.seed)?;
    if let Some((value, line)) = entries.get("sweep") {
        config.sweep = value
            .split(',')
            .map(|part| {
                part.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
                    key: "sweep",
                    value: value.clone(),
                    line: *line,
                })
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some((value, _)) = entries.get("out") {
        config.out_dir = PathBuf::from(value);
    }
    if entries.contains_key("risk_c0") {
        config.risk_c0 = Some(take(&entries, "risk_c0", 0.0)?);
    }
    if entries.contains_key("risk_horizon") {
        config.risk_horizon = Some(take(&entries, "risk_horizon", 0.0)?);
    }
    config.risk_confidence = take(&entries, "risk_confidence", config.risk_confidence)?;
    config.risk_n_paths = take(&entries, "risk_n_paths", config.risk_n_paths)?;
    config.risk_n_steps = take(&entries, "risk_n_steps", config.risk_n_steps)?;

    config.validate()?;
    Ok(config)
}
