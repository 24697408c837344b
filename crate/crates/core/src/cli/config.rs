//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # probabilistic gate, default hyperparameters
//! env = prob_gate
//! automaton = fga_gnc
//! K = 10
//! U = 0.1
//! gamma = 0.99
//! seeds = 0,1,2
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::product::RewardSchedule;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// K-counter rewards, updates on the visited automaton state only.
    Kc,
    /// Counterfactual updates with constant rewards (no counter).
    Cf,
    /// Counterfactual updates with K-counter rewards.
    CfKc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Kc => "KC",
            Algorithm::Cf => "CF",
            Algorithm::CfKc => "CF_KC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().replace(['+', '-'], "_").as_str() {
            "KC" => Some(Algorithm::Kc),
            "CF" => Some(Algorithm::Cf),
            "CF_KC" => Some(Algorithm::CfKc),
            _ => None,
        }
    }

    pub fn counterfactual(self) -> bool {
        self != Algorithm::Kc
    }
}

/// One sweep axis: a hyperparameter and the values it takes while the others
/// stay at the configured defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub key: SweepKey,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKey {
    U,
    Gamma,
    K,
}

impl SweepKey {
    pub fn name(self) -> &'static str {
        match self {
            SweepKey::U => "U",
            SweepKey::Gamma => "gamma",
            SweepKey::K => "K",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "U" | "u" => Some(SweepKey::U),
            "gamma" => Some(SweepKey::Gamma),
            "K" | "k" => Some(SweepKey::K),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Built-in environment name or grid file path.
    pub env: String,
    /// Bundled automaton name or automaton file path.
    pub automaton: String,
    pub k: usize,
    pub u: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub max_steps: usize,
    pub eval_interval: u64,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub reward_schedule: RewardSchedule,
    pub output_dir: PathBuf,
    /// Policy file for `eval` and `export-prism`.
    pub policy: Option<PathBuf>,
    /// Formula for `oracle-check`; defaults to the bundled automaton's formula.
    pub formula: Option<String>,
    /// Number of random lassos for `oracle-check`.
    pub samples: usize,
    /// Seed of the lasso sampler in `oracle-check`.
    pub oracle_seed: u64,
    /// Sweep axes; empty means the default grid.
    pub sweep: Vec<SweepAxis>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "prob_gate".into(),
            automaton: "fga_gnc".into(),
            k: 10,
            u: 0.1,
            gamma: 0.99,
            alpha: 0.1,
            epsilon: 0.1,
            episodes: 40_000,
            max_steps: 100,
            eval_interval: 10_000,
            algorithm: Algorithm::Kc,
            seeds: (0..10).collect(),
            reward_schedule: RewardSchedule::Linear,
            output_dir: PathBuf::from("out"),
            policy: None,
            formula: None,
            samples: 1000,
            oracle_seed: 0,
            sweep: Vec::new(),
        }
    }
}

/// The grid swept when no axes are configured: each axis varied around the
/// configured point.
pub fn default_sweep() -> Vec<SweepAxis> {
    vec![
        SweepAxis {
            key: SweepKey::U,
            values: vec![0.01, 0.1, 0.5],
        },
        SweepAxis {
            key: SweepKey::Gamma,
            values: vec![0.9, 0.99, 0.995],
        },
        SweepAxis {
            key: SweepKey::K,
            values: vec![5.0, 10.0, 20.0],
        },
    ]
}

fn value_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e: T::Err| value_err(key, format!("{v:?}: {e}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| num(key, x))
        .collect()
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Parses a config file; unset keys keep their defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected `key = value`, found {line:?}"),
            })?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "env" => self.env = v.to_string(),
            "automaton" => self.automaton = v.to_string(),
            "K" | "k" => self.k = num(key, v)?,
            "U" | "u" => self.u = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "episodes" => self.episodes = num(key, v)?,
            "max_steps" => self.max_steps = num(key, v)?,
            "eval_interval" => self.eval_interval = num(key, v)?,
            "algorithm" => {
                self.algorithm = Algorithm::parse(v)
                    .ok_or_else(|| value_err(key, format!("unknown algorithm {v:?}")))?
            }
            "seeds" => self.seeds = list(key, v)?,
            "reward_schedule" => {
                self.reward_schedule = RewardSchedule::parse(v)
                    .ok_or_else(|| value_err(key, format!("unknown schedule {v:?}")))?
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            "policy" => self.policy = (!v.is_empty()).then(|| PathBuf::from(v)),
            "formula" => self.formula = (!v.is_empty()).then(|| v.to_string()),
            "samples" => self.samples = num(key, v)?,
            "oracle_seed" => self.oracle_seed = num(key, v)?,
            "sweep" => {
                self.sweep = v
                    .split(';')
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .map(|axis| {
                        let (k, vals) = axis.split_once(':').ok_or_else(|| {
                            value_err(key, format!("expected `name:v1,v2`, found {axis:?}"))
                        })?;
                        let k = SweepKey::parse(k.trim())
                            .ok_or_else(|| value_err(key, format!("cannot sweep {k:?}")))?;
                        Ok(SweepAxis {
                            key: k,
                            values: list(key, vals)?,
                        })
                    })
                    .collect::<Result<_, ConfigError>>()?
            }
            _ => return Err(value_err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check =
            |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(value_err(key, msg)) };
        check(self.u > 0.0 && self.u < 1.0, "U", "must be in (0, 1)")?;
        check(
            self.gamma > 0.0 && self.gamma < 1.0,
            "gamma",
            "must be in (0, 1)",
        )?;
        check(
            self.alpha > 0.0 && self.alpha <= 1.0,
            "alpha",
            "must be in (0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.epsilon),
            "epsilon",
            "must be in [0, 1]",
        )?;
        check(self.max_steps > 0, "max_steps", "must be positive")?;
        check(!self.seeds.is_empty(), "seeds", "must not be empty")?;
        check(
            self.k > 0
                || self.reward_schedule == RewardSchedule::Constant
                || self.algorithm == Algorithm::Cf,
            "K",
            "must be positive for counter-graded schedules",
        )?;
        for axis in &self.sweep {
            for &v in &axis.values {
                let mut c = self.clone();
                c.sweep.clear();
                c.apply(axis.key, v);
                c.validate()
                    .map_err(|e| value_err("sweep", format!("{}={v}: {e}", axis.key.name())))?;
                if axis.key == SweepKey::K && v.fract() != 0.0 {
                    return Err(value_err("sweep", format!("K={v} is not an integer")));
                }
            }
        }
        Ok(())
    }

    /// Replaces one swept hyperparameter.
    pub fn apply(&mut self, key: SweepKey, v: f64) {
        match key {
            SweepKey::U => self.u = v,
            SweepKey::Gamma => self.gamma = v,
            SweepKey::K => self.k = v as usize,
        }
    }

    /// Renders every key; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("env", self.env.clone());
        kv("automaton", self.automaton.clone());
        kv("K", self.k.to_string());
        kv("U", self.u.to_string());
        kv("gamma", self.gamma.to_string());
        kv("alpha", self.alpha.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("episodes", self.episodes.to_string());
        kv("max_steps", self.max_steps.to_string());
        kv("eval_interval", self.eval_interval.to_string());
        kv("algorithm", self.algorithm.name().to_string());
        kv("seeds", join(&self.seeds));
        kv("reward_schedule", self.reward_schedule.name().to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv(
            "policy",
            self.policy
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("formula", self.formula.clone().unwrap_or_default());
        kv("samples", self.samples.to_string());
        kv("oracle_seed", self.oracle_seed.to_string());
        let sweep: Vec<String> = self
            .sweep
            .iter()
            .map(|a| format!("{}:{}", a.key.name(), join(&a.values)))
            .collect();
        kv("sweep", sweep.join(";"));
        out
    }

    /// Stable 64-bit FNV-1a hash of [`Self::to_text`], identifying the run setup.
    pub fn hash(&self) -> u64 {
        use std::hash::Hasher;
        let mut h = fnv::FnvHasher::default();
        h.write(self.to_text().as_bytes());
        h.finish()
    }
}
