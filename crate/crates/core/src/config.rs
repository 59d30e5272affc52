//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, list values are comma
//! separated. `alpha_m`, `beta` and `alpha_r` are required; everything else
//! has a default. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::Hyperparameters;
use crate::campus::{CampusModel, RiskProcess};
use crate::env::DiscretizationSpec;
use crate::epidemic::{check_probability, SIParams};
use crate::error::{Error, Result};

/// Default output root when neither the config nor the command line names one.
pub const OUTPUT_ENV: &str = "SAFECAMPUS_OUT";

/// Reward weights used throughout the published policy matrices.
pub const DEFAULT_ALPHAS: [f64; 9] = [0.01, 0.1, 0.25, 0.35, 0.45, 0.5, 0.6, 0.8, 1.0];

const REQUIRED: [&str; 3] = ["alpha_m", "beta", "alpha_r"];

const KEYS: [&str; 26] = [
    "alpha_m",
    "beta",
    "alpha_r",
    "courses",
    "students_per_course",
    "weeks",
    "initial_infection_rate",
    "risk_mode",
    "risk_trajectory",
    "risk_levels",
    "infected_levels",
    "action_levels",
    "learning_rate",
    "discount",
    "max_episodes",
    "exploration_rate",
    "min_exploration_rate",
    "exploration_decay_rate",
    "learning_rate_decay",
    "min_learning_rate",
    "seed",
    "output_dir",
    "eval_episodes",
    "moving_average_window",
    "sweep_alphas",
    "sweep_seeds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskMode {
    IidUniform,
    FixedTrajectory,
}

impl FromStr for RiskMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "iid-uniform" => Ok(RiskMode::IidUniform),
            "fixed-trajectory" => Ok(RiskMode::FixedTrajectory),
            other => Err(format!("unknown mode `{other}` (iid-uniform | fixed-trajectory)")),
        }
    }
}

impl RiskMode {
    fn as_str(self) -> &'static str {
        match self {
            RiskMode::IidUniform => "iid-uniform",
            RiskMode::FixedTrajectory => "fixed-trajectory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub seeds_per_value: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            alphas: DEFAULT_ALPHAS.to_vec(),
            seeds_per_value: 1,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::config("sweep_alphas", "at least one value is required"));
        }
        if self.seeds_per_value == 0 {
            return Err(Error::config("sweep_seeds", "at least one seed per value is required"));
        }
        for &a in &self.alphas {
            check_probability("alpha_r", a).map_err(|e| Error::config("sweep_alphas", e.to_string()))?;
        }
        Ok(())
    }
}

/// Fully resolved settings for one run or sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: CampusModel,
    pub si: SIParams,
    pub spec: DiscretizationSpec,
    pub hp: Hyperparameters,
    pub risk_mode: RiskMode,
    pub risk_trajectory: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub eval_episodes: usize,
    pub moving_average_window: usize,
    pub sweep: SweepSpec,
}

impl RunConfig {
    /// Defaults with the three required model constants filled in.
    pub fn with_required(alpha_m: f64, beta: f64, alpha_r: f64) -> Self {
        RunConfig {
            model: CampusModel::default(),
            si: SIParams { alpha_m, beta },
            spec: DiscretizationSpec::default(),
            hp: Hyperparameters {
                alpha_r,
                ..Hyperparameters::default()
            },
            risk_mode: RiskMode::IidUniform,
            risk_trajectory: None,
            seed: 0,
            output_dir: default_output_dir(),
            eval_episodes: 50,
            moving_average_window: 100,
            sweep: SweepSpec::default(),
        }
    }

    pub fn alpha_r(&self) -> f64 {
        self.hp.alpha_r
    }

    pub fn validate(&self) -> Result<()> {
        let tag = |key: &'static str| move |e: Error| Error::config(key, e.to_string());
        self.si.validate().map_err(tag("alpha_m/beta"))?;
        self.model.validate().map_err(tag("students_per_course/weeks/initial_infection_rate"))?;
        self.spec.validate().map_err(tag("levels"))?;
        self.hp.validate().map_err(tag("hyperparameters"))?;
        if self.risk_mode == RiskMode::FixedTrajectory && self.risk_trajectory.is_none() {
            return Err(Error::config("risk_trajectory", "fixed-trajectory mode needs a trajectory file"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be at least 1"));
        }
        if self.moving_average_window == 0 {
            return Err(Error::config("moving_average_window", "must be at least 1"));
        }
        self.sweep.validate()
    }

    pub fn risk_process(&self) -> Result<RiskProcess> {
        let process = match (self.risk_mode, &self.risk_trajectory) {
            (RiskMode::IidUniform, _) => RiskProcess::IidUniform,
            (RiskMode::FixedTrajectory, Some(path)) => RiskProcess::load_trajectory(path)?,
            (RiskMode::FixedTrajectory, None) => {
                return Err(Error::config("risk_trajectory", "fixed-trajectory mode needs a trajectory file"))
            }
        };
        process.validate(&self.model)?;
        Ok(process)
    }

    /// Renders every key, in a form `parse_config` reads back identically.
    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("alpha_m", format!("{:?}", self.si.alpha_m));
        line("beta", format!("{:?}", self.si.beta));
        line("alpha_r", format!("{:?}", self.hp.alpha_r));
        line("courses", self.model.courses().to_string());
        line("students_per_course", join(&self.model.students_per_course, |n| n.to_string()));
        line("weeks", self.model.weeks.to_string());
        line("initial_infection_rate", format!("{:?}", self.model.initial_infection_rate));
        line("risk_mode", self.risk_mode.as_str().to_string());
        if let Some(path) = &self.risk_trajectory {
            line("risk_trajectory", path.display().to_string());
        }
        line("risk_levels", self.spec.risk_levels.to_string());
        line("infected_levels", self.spec.infected_levels.to_string());
        line("action_levels", self.spec.action_levels.to_string());
        line("learning_rate", format!("{:?}", self.hp.learning_rate));
        line("discount", format!("{:?}", self.hp.discount));
        line("max_episodes", self.hp.max_episodes.to_string());
        line("exploration_rate", format!("{:?}", self.hp.exploration_rate));
        line("min_exploration_rate", format!("{:?}", self.hp.min_exploration_rate));
        line("exploration_decay_rate", format!("{:?}", self.hp.exploration_decay_rate));
        line("learning_rate_decay", format!("{:?}", self.hp.learning_rate_decay));
        line("min_learning_rate", format!("{:?}", self.hp.min_learning_rate));
        line("seed", self.seed.to_string());
        line("output_dir", self.output_dir.display().to_string());
        line("eval_episodes", self.eval_episodes.to_string());
        line("moving_average_window", self.moving_average_window.to_string());
        line("sweep_alphas", join(&self.sweep.alphas, |a| format!("{a:?}")));
        line("sweep_seeds", self.sweep.seeds_per_value.to_string());
        out
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Reads and validates a configuration file, logging each defaulted key.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (config, defaulted) = parse_config(&text, base)?;
    for key in defaulted {
        log::info!("{key} not set; using default");
    }
    log::debug!("resolved configuration:\n{}", config.to_config_string());
    Ok(config)
}

/// Parses configuration text. Relative trajectory paths resolve against
/// `base_dir`. Returns the config and the keys that took their default.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<(RunConfig, Vec<&'static str>)> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}", number + 1), format!("expected `key = value`, found `{line}`"))
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::config(key, "set more than once"));
        }
    }
    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(Error::config(key, "required key is missing"));
        }
    }

    let mut fields = Fields {
        entries,
        defaulted: Vec::new(),
    };
    let mut cfg = RunConfig::with_required(
        fields.required("alpha_m")?,
        fields.required("beta")?,
        fields.required("alpha_r")?,
    );

    let courses: Option<usize> = fields.optional("courses")?;
    let students: Option<Vec<u32>> = fields.optional_list("students_per_course")?;
    cfg.model.students_per_course = match (courses, students) {
        (None, None) => cfg.model.students_per_course,
        (None, Some(list)) => list,
        (Some(c), None) => vec![100; c],
        (Some(c), Some(list)) if list.len() == 1 => vec![list[0]; c],
        (Some(c), Some(list)) if list.len() == c => list,
        (Some(c), Some(list)) => {
            return Err(Error::config(
                "students_per_course",
                format!("{} entries for {c} courses", list.len()),
            ))
        }
    };
    fields.or_default("weeks", &mut cfg.model.weeks)?;
    fields.or_default("initial_infection_rate", &mut cfg.model.initial_infection_rate)?;

    fields.or_default("risk_mode", &mut cfg.risk_mode)?;
    if let Some(raw) = fields.take("risk_trajectory") {
        let path = base_dir.join(raw);
        let path = std::fs::canonicalize(&path)
            .map_err(|e| Error::config("risk_trajectory", format!("{}: {e}", path.display())))?;
        cfg.risk_trajectory = Some(path);
    }

    fields.or_default("risk_levels", &mut cfg.spec.risk_levels)?;
    fields.or_default("infected_levels", &mut cfg.spec.infected_levels)?;
    fields.or_default("action_levels", &mut cfg.spec.action_levels)?;

    let hp = &mut cfg.hp;
    fields.or_default("learning_rate", &mut hp.learning_rate)?;
    fields.or_default("discount", &mut hp.discount)?;
    fields.or_default("max_episodes", &mut hp.max_episodes)?;
    fields.or_default("exploration_rate", &mut hp.exploration_rate)?;
    fields.or_default("min_exploration_rate", &mut hp.min_exploration_rate)?;
    fields.or_default("exploration_decay_rate", &mut hp.exploration_decay_rate)?;
    fields.or_default("learning_rate_decay", &mut hp.learning_rate_decay)?;
    fields.or_default("min_learning_rate", &mut hp.min_learning_rate)?;

    fields.or_default("seed", &mut cfg.seed)?;
    if let Some(dir) = fields.take("output_dir") {
        cfg.output_dir = PathBuf::from(dir);
    } else {
        fields.defaulted.push("output_dir");
    }
    fields.or_default("eval_episodes", &mut cfg.eval_episodes)?;
    fields.or_default("moving_average_window", &mut cfg.moving_average_window)?;
    if let Some(alphas) = fields.optional_list("sweep_alphas")? {
        cfg.sweep.alphas = alphas;
    }
    fields.or_default("sweep_seeds", &mut cfg.sweep.seeds_per_value)?;

    cfg.validate()?;
    Ok((cfg, fields.defaulted))
}

struct Fields {
    entries: BTreeMap<String, String>,
    defaulted: Vec<&'static str>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        raw.parse::<T>()
            .map_err(|e| Error::config(key, format!("cannot parse `{raw}`: {e}")))
    }

    fn required<T: FromStr>(&mut self, key: &'static str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self
            .take(key)
            .ok_or_else(|| Error::config(key, "required key is missing"))?;
        let value = Self::parse(key, &raw)?;
        Ok(value)
    }

    fn optional<T: FromStr>(&mut self, key: &'static str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            Some(raw) => Self::parse(key, &raw).map(Some),
            None => {
                self.defaulted.push(key);
                Ok(None)
            }
        }
    }

    fn optional_list<T: FromStr>(&mut self, key: &'static str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            Some(raw) => raw
                .split(',')
                .map(|item| Self::parse(key, item.trim()))
                .collect::<Result<Vec<T>>>()
                .map(Some),
            None => {
                self.defaulted.push(key);
                Ok(None)
            }
        }
    }

    fn or_default<T: FromStr>(&mut self, key: &'static str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(value) = self.optional(key)? {
            *slot = value;
        }
        Ok(())
    }
}
