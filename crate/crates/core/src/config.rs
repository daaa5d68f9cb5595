//! Sweep configuration files.
//!
//! One `key = value` pair per line, `#` starts a comment, lists are comma
//! separated. Recognised keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `capacity` | channels `N` | required |
//! | `common_floor` | never-reserved channels `C` | `N / 2` |
//! | `service_rate` | `μ` | `1.0` |
//! | `load_threshold` | Γ | `0.925 / μ` |
//! | `mix` | class shares, highest priority first | required |
//! | `grid.values` | explicit total arrival rates | |
//! | `grid.min`, `grid.max`, `grid.step` | evenly spaced total rates | `0.5Nμ..=2Nμ`, 16 points |
//! | `schemes` | any of `dynamic`, `fixed_guard`, `non_priority` | `dynamic, non_priority` |
//! | `fixed.thresholds` | thresholds for `fixed_guard`, capacity first | |
//! | `sim.enabled` | run the simulator too | `false` |
//! | `sim.arrivals` | measured arrivals per run | `100000` |
//! | `sim.seeds` | one run per seed | `1` |
//! | `sim.warmup_fraction` | share of the nominal run discarded | `0.1` |
//! | `sim.smoothing` | estimator smoothing factor in `(0, 1]` | off |
//! | `output` | CSV destination | |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::traffic::{ClassMix, SystemParams, ThresholdVector, DEFAULT_THRESHOLD_FACTOR};

const KEYS: &[&str] = &[
    "capacity",
    "common_floor",
    "service_rate",
    "load_threshold",
    "mix",
    "grid.values",
    "grid.min",
    "grid.max",
    "grid.step",
    "schemes",
    "fixed.thresholds",
    "sim.enabled",
    "sim.arrivals",
    "sim.seeds",
    "sim.warmup_fraction",
    "sim.smoothing",
    "output",
];

pub const DEFAULT_ARRIVALS: u64 = 100_000;
pub const DEFAULT_GRID_POINTS: usize = 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` already set on line {first}")]
    DuplicateKey {
        line: usize,
        key: String,
        first: usize,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{}`{key}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        line: Option<usize>,
        key: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Dynamic,
    FixedGuard,
    NonPriority,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Dynamic => "dynamic",
            SchemeKind::FixedGuard => "fixed_guard",
            SchemeKind::NonPriority => "non_priority",
        }
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dynamic" => Ok(SchemeKind::Dynamic),
            "fixed_guard" => Ok(SchemeKind::FixedGuard),
            "non_priority" => Ok(SchemeKind::NonPriority),
            other => Err(format!(
                "unknown scheme `{other}` (expected dynamic, fixed_guard or non_priority)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub arrivals: u64,
    pub seeds: Vec<u64>,
    pub warmup_fraction: f64,
    pub smoothing: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            arrivals: DEFAULT_ARRIVALS,
            seeds: vec![1],
            warmup_fraction: crate::sim::DEFAULT_WARMUP_FRACTION,
            smoothing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub params: SystemParams<f64>,
    pub mix: ClassMix<f64>,
    /// Total arrival rates, in evaluation order.
    pub grid: Vec<f64>,
    pub schemes: Vec<SchemeKind>,
    pub fixed_thresholds: Option<ThresholdVector<f64>>,
    pub simulation: Option<SimSettings>,
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    /// N = 40, C = 20, μ = 1, Γ = 0.925, mix 0.4/0.3/0.3, λ_T over 16
    /// points from 20 to 80, dynamic and non-priority schemes.
    pub fn default_regression() -> Self {
        let params = SystemParams::with_default_threshold(40, 20, 1.0, 3)
            .expect("valid default parameters");
        Self {
            grid: default_grid(&params),
            params,
            mix: ClassMix::new(vec![0.4, 0.3, 0.3]).expect("valid default mix"),
            schemes: vec![SchemeKind::Dynamic, SchemeKind::NonPriority],
            fixed_thresholds: None,
            simulation: None,
            output: None,
        }
    }

    /// Replaces the seed list with a single seed.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(sim) = self.simulation.as_mut() {
            sim.seeds = vec![seed];
        }
    }
}

fn default_grid(params: &SystemParams<f64>) -> Vec<f64> {
    let scale = params.capacity() as f64 * params.service_rate();
    linspace(0.5 * scale, 2.0 * scale, DEFAULT_GRID_POINTS)
}

fn linspace(min: f64, max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![min];
    }
    let step = (max - min) / (points - 1) as f64;
    (0..points).map(|k| min + step * k as f64).collect()
}

/// Points `min + k·step` up to `max`, allowing for rounding in the last one.
fn stepped(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| min + step * k as f64).collect()
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries {
    map: BTreeMap<&'static str, Entry>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<&'static str, Entry> = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            let known = KEYS
                .iter()
                .copied()
                .find(|k| *k == key)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
            if let Some(first) = map.get(known) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                    first: first.line,
                });
            }
            map.insert(
                known,
                Entry {
                    line,
                    value: value.trim().to_string(),
                },
            );
        }
        Ok(Self { map })
    }

    fn line(&self, key: &'static str) -> Option<usize> {
        self.map.get(key).map(|e| e.line)
    }

    fn has(&self, key: &'static str) -> bool {
        self.map.contains_key(key)
    }

    fn invalid(&self, key: &'static str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            line: self.line(key),
            key,
            message: message.into(),
        }
    }

    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.map
            .get(key)
            .map(|e| {
                e.value
                    .parse::<T>()
                    .map_err(|err| self.invalid(key, format!("`{}`: {err}", e.value)))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &'static str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(entry) = self.map.get(key) else {
            return Ok(None);
        };
        if entry.value.is_empty() {
            return Err(self.invalid(key, "list is empty"));
        }
        entry
            .value
            .split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<T>()
                    .map_err(|err| self.invalid(key, format!("`{item}`: {err}")))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}

impl FromStr for SweepConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let e = Entries::parse(text)?;

        let capacity: usize = e.get("capacity")?.ok_or(ConfigError::Missing("capacity"))?;
        if capacity == 0 {
            return Err(e.invalid("capacity", "must be at least 1"));
        }
        let common_floor: usize = e.get("common_floor")?.unwrap_or(capacity / 2);
        if common_floor > capacity {
            return Err(e.invalid(
                "common_floor",
                format!("{common_floor} exceeds capacity {capacity}"),
            ));
        }
        let service_rate: f64 = e.get("service_rate")?.unwrap_or(1.0);
        if !(service_rate.is_finite() && service_rate > 0.0) {
            return Err(e.invalid("service_rate", "must be positive"));
        }
        let load_threshold: f64 = e
            .get("load_threshold")?
            .unwrap_or(DEFAULT_THRESHOLD_FACTOR / service_rate);
        if !(load_threshold.is_finite() && load_threshold > 0.0) {
            return Err(e.invalid("load_threshold", "must be positive"));
        }

        let shares: Vec<f64> = e.list("mix")?.ok_or(ConfigError::Missing("mix"))?;
        let mix = ClassMix::new(shares).map_err(|err| e.invalid("mix", err.to_string()))?;
        let params = SystemParams::new(
            capacity,
            common_floor,
            load_threshold,
            service_rate,
            mix.len(),
        )
        .map_err(|err| e.invalid("capacity", err.to_string()))?;

        let grid = grid(&e, &params)?;

        let schemes: Vec<SchemeKind> = e
            .list("schemes")?
            .unwrap_or_else(|| vec![SchemeKind::Dynamic, SchemeKind::NonPriority]);
        for (i, s) in schemes.iter().enumerate() {
            if schemes[..i].contains(s) {
                return Err(e.invalid("schemes", format!("`{}` listed twice", s.label())));
            }
        }
        let fixed_thresholds = match e.list::<usize>("fixed.thresholds")? {
            Some(values) => {
                let t = ThresholdVector::fixed(values)
                    .map_err(|err| e.invalid("fixed.thresholds", err.to_string()))?;
                if t.capacity() != capacity || t.class_count() != mix.len() {
                    return Err(e.invalid(
                        "fixed.thresholds",
                        format!(
                            "need {} values starting with the capacity {capacity}",
                            mix.len()
                        ),
                    ));
                }
                Some(t)
            }
            None => None,
        };
        if schemes.contains(&SchemeKind::FixedGuard) && fixed_thresholds.is_none() {
            return Err(ConfigError::Missing("fixed.thresholds"));
        }

        let simulation = if e.get("sim.enabled")?.unwrap_or(false) {
            Some(sim_settings(&e)?)
        } else {
            None
        };

        Ok(Self {
            params,
            mix,
            grid,
            schemes,
            fixed_thresholds,
            simulation,
            output: e.get::<String>("output")?.map(PathBuf::from),
        })
    }
}

fn grid(e: &Entries, params: &SystemParams<f64>) -> Result<Vec<f64>, ConfigError> {
    let ranged = ["grid.min", "grid.max", "grid.step"]
        .iter()
        .any(|k| e.has(k));
    let points = if let Some(values) = e.list::<f64>("grid.values")? {
        if ranged {
            return Err(e.invalid(
                "grid.values",
                "cannot be combined with grid.min/grid.max/grid.step",
            ));
        }
        values
    } else if ranged {
        let min: f64 = e.get("grid.min")?.ok_or(ConfigError::Missing("grid.min"))?;
        let max: f64 = e.get("grid.max")?.ok_or(ConfigError::Missing("grid.max"))?;
        let step: f64 = e.get("grid.step")?.ok_or(ConfigError::Missing("grid.step"))?;
        if !(step.is_finite() && step > 0.0) {
            return Err(e.invalid("grid.step", "must be positive"));
        }
        if !(max >= min) {
            return Err(e.invalid("grid.max", "must not be below grid.min"));
        }
        stepped(min, max, step)
    } else {
        default_grid(params)
    };
    let key = if e.has("grid.values") {
        "grid.values"
    } else {
        "grid.min"
    };
    if let Some(bad) = points.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(e.invalid(key, format!("grid point {bad} is not a positive rate")));
    }
    Ok(points)
}

fn sim_settings(e: &Entries) -> Result<SimSettings, ConfigError> {
    let defaults = SimSettings::default();
    let arrivals: u64 = e.get("sim.arrivals")?.unwrap_or(defaults.arrivals);
    if arrivals == 0 {
        return Err(e.invalid("sim.arrivals", "must be at least 1"));
    }
    let seeds: Vec<u64> = e.list("sim.seeds")?.unwrap_or(defaults.seeds);
    let warmup_fraction: f64 = e
        .get("sim.warmup_fraction")?
        .unwrap_or(defaults.warmup_fraction);
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(e.invalid("sim.warmup_fraction", "must lie in [0, 1)"));
    }
    let smoothing: Option<f64> = e.get("sim.smoothing")?;
    if let Some(s) = smoothing {
        if !(s > 0.0 && s <= 1.0) {
            return Err(e.invalid("sim.smoothing", "must lie in (0, 1]"));
        }
    }
    Ok(SimSettings {
        arrivals,
        seeds,
        warmup_fraction,
        smoothing,
    })
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<SweepConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.parse()
}
