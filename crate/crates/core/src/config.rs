//! Run configuration from flat `key = value` text.
//!
//! Keys use the command-line spelling (`lambda-p`, `min-size`, ...);
//! underscores are accepted as well. `#` starts a comment. Command-line
//! flags are overlaid on the file with [`RunConfig::from_layers`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::energy::{EnergyParams, SigmaMode};
use crate::error::{Error, Result};
use crate::segmentation::{Connectivity, SegmentationParams};
use crate::solver::{Method, SolverConfig};

pub type Settings = BTreeMap<String, String>;

/// Keys naming files.
pub const PATH_KEYS: &[&str] = &[
    "image",
    "regions",
    "pixel-probs",
    "region-probs",
    "out-regions",
    "out-region-probs",
    "out-pixel-labels",
    "out-region-labels",
    "out-labels",
    "trace",
    "pred",
    "ref",
    "tile-list",
    "out-csv",
    "val-ref",
    "out-dir",
];

const VALUE_KEYS: &[&str] = &[
    "lambda",
    "lambda-p",
    "lambda-r",
    "mu",
    "sigma",
    "sigma-p",
    "sigma-r",
    "prob-floor",
    "k",
    "min-size",
    "connectivity",
    "max-iterations",
    "energy-tolerance",
    "method",
    "jobs",
    "width",
    "classes",
];

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_flat(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

pub fn read_flat(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_flat(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub energy: EnergyParams,
    pub segmentation: SegmentationParams,
    pub solver: SolverConfig,
    pub jobs: usize,
    /// Width of `PRB1` images, which carry no shape.
    pub image_width: Option<usize>,
    pub num_classes: Option<usize>,
    paths: BTreeMap<String, PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            energy: EnergyParams::default(),
            segmentation: SegmentationParams::default(),
            solver: SolverConfig::default(),
            jobs: 1,
            image_width: None,
            num_classes: None,
            paths: BTreeMap::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Merges settings, later layers overriding earlier ones, on top of
    /// the defaults.
    pub fn from_layers(layers: &[&Settings]) -> Result<Self> {
        let mut merged = Settings::new();
        for layer in layers {
            for (k, v) in *layer {
                merged.insert(normalize_key(k), v.clone());
            }
        }
        Self::from_settings(&merged)
    }

    pub fn from_settings(settings: &Settings) -> Result<Self> {
        let mut cfg = RunConfig::default();
        // `lambda` and `sigma` set both layers; the layer-specific keys win.
        let ordered = ["lambda", "sigma"]
            .into_iter()
            .filter_map(|k| settings.get_key_value(k))
            .chain(
                settings
                    .iter()
                    .filter(|(k, _)| !matches!(k.as_str(), "lambda" | "sigma")),
            );
        for (key, value) in ordered {
            let key = key.as_str();
            let v = value.as_str();
            match key {
                "lambda" => {
                    let l = parse(key, v)?;
                    cfg.energy.lambda_p = l;
                    cfg.energy.lambda_r = l;
                }
                "lambda-p" => cfg.energy.lambda_p = parse(key, v)?,
                "lambda-r" => cfg.energy.lambda_r = parse(key, v)?,
                "mu" => cfg.energy.mu = parse(key, v)?,
                "sigma" => {
                    let s = parse_sigma(v)?;
                    cfg.energy.sigma_p = s;
                    cfg.energy.sigma_r = s;
                }
                "sigma-p" => cfg.energy.sigma_p = parse_sigma(v)?,
                "sigma-r" => cfg.energy.sigma_r = parse_sigma(v)?,
                "prob-floor" => cfg.energy.prob_floor = parse(key, v)?,
                "k" => cfg.segmentation.k = parse(key, v)?,
                "min-size" => cfg.segmentation.min_size = parse(key, v)?,
                "connectivity" => {
                    cfg.segmentation.connectivity = Connectivity::try_from(parse::<u32>(key, v)?)?
                }
                "max-iterations" => cfg.solver.max_iterations = parse(key, v)?,
                "energy-tolerance" => cfg.solver.energy_tolerance = parse(key, v)?,
                "method" => cfg.solver.method = v.parse::<Method>()?,
                "jobs" => cfg.jobs = parse(key, v)?,
                "width" => cfg.image_width = Some(parse(key, v)?),
                "classes" => cfg.num_classes = Some(parse(key, v)?),
                k if PATH_KEYS.contains(&k) => {
                    if v.is_empty() {
                        return Err(Error::Config(format!("{k}: empty path")));
                    }
                    cfg.paths.insert(k.to_string(), PathBuf::from(v));
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        self.segmentation.validate()?;
        self.solver.validate()?;
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// Required path for `key`.
    pub fn path(&self, key: &str) -> Result<&Path> {
        self.optional_path(key)
            .ok_or_else(|| Error::Config(format!("missing required --{key}")))
    }

    pub fn optional_path(&self, key: &str) -> Option<&Path> {
        self.paths.get(key).map(PathBuf::as_path)
    }
}

/// `heuristic` or a positive number.
pub fn parse_sigma(value: &str) -> Result<SigmaMode> {
    if value.eq_ignore_ascii_case("heuristic") {
        return Ok(SigmaMode::Heuristic);
    }
    let s: f64 = parse("sigma", value)?;
    Ok(SigmaMode::Fixed(s))
}

/// Whether `key` is a recognized setting.
pub fn is_known_key(key: &str) -> bool {
    let key = normalize_key(key);
    PATH_KEYS.contains(&key.as_str()) || VALUE_KEYS.contains(&key.as_str())
}
