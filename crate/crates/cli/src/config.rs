//! Run configuration: one TOML file, section per module, flags on top.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use evcs_core::choice::ChoiceConfig;
use evcs_core::desk::{reference_behavior, reference_choice, reference_instance};
use evcs_core::domain::{validate_instance, Instance};
use evcs_core::saa::SaaConfig;
use evcs_core::sim::SimConfig;
use evcs_core::solve::{Method, SolverSettings};
use evcs_core::stochastics::BehaviorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Instance JSON; the built-in reference instance when absent.
    pub instance: Option<PathBuf>,
    pub method: Method,
    /// Overrides the instance budget.
    pub budget: Option<f64>,
    pub seed: u64,
    pub scenarios: usize,
    pub epsilon: f64,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub output: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            instance: None,
            method: Method::MultiCut,
            budget: None,
            seed: 1,
            scenarios: 10,
            epsilon: 1e-4,
            time_limit: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Budget sweep; the standard five-point sweep when empty.
    pub budgets: Vec<f64>,
    /// Level-3 hourly prices to re-solve the sweep at.
    pub level3_prices: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub behavior: Option<BehaviorConfig>,
    pub choice: Option<ChoiceConfig>,
    pub saa: Option<SaaConfig>,
    pub sim: Option<SimConfig>,
    pub report: ReportSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
        // Instance paths in a config are relative to the config file.
        if let (Some(inst), Some(dir)) = (&mut cfg.run.instance, path.parent()) {
            if inst.is_relative() {
                *inst = dir.join(&*inst);
            }
        }
        Ok(cfg)
    }
}

/// Everything a command needs, with defaults filled in and checked.
pub struct Context {
    pub cfg: RunConfig,
    pub inst: Instance,
    pub behavior: BehaviorConfig,
    pub choice: ChoiceConfig,
    pub hash: String,
    pub timing: bool,
}

impl Context {
    pub fn new(mut cfg: RunConfig, timing: bool) -> Result<Self> {
        let builtin = cfg.run.instance.is_none();
        let mut inst = match &cfg.run.instance {
            None => reference_instance(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read instance {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("instance {} is not valid JSON", p.display()))?
            }
        };
        if let Some(b) = cfg.run.budget {
            if !(b >= 0.0 && b.is_finite()) {
                bail!("run.budget: must be a finite value ≥ 0, got {b}");
            }
            inst.budget = b;
        }
        let bad = validate_instance(&inst);
        if !bad.is_empty() {
            let msg: Vec<String> = bad.iter().map(|v| v.to_string()).collect();
            bail!("instance: {}", msg.join("; "));
        }
        if cfg.run.scenarios == 0 {
            bail!("run.scenarios: must be at least 1");
        }
        if !(cfg.run.epsilon > 0.0) {
            bail!("run.epsilon: must be positive, got {}", cfg.run.epsilon);
        }
        if let Some(t) = cfg.run.time_limit {
            if !(t > 0.0) {
                bail!("run.time_limit: must be positive seconds, got {t}");
            }
        }
        let behavior = cfg
            .behavior
            .get_or_insert_with(|| if builtin { reference_behavior() } else { BehaviorConfig::default() })
            .clone();
        behavior.validate(inst.grid.num_slots()).map_err(|e| anyhow::anyhow!("behavior: {e}"))?;
        let choice = cfg
            .choice
            .get_or_insert_with(|| if builtin { reference_choice() } else { ChoiceConfig::default() })
            .clone();
        if !choice.coefficients.is_valid() {
            bail!("choice.coefficients: every mean and standard deviation must be finite, deviations ≥ 0");
        }
        cfg.saa.get_or_insert_with(SaaConfig::default).validate().map_err(|e| anyhow::anyhow!("saa: {e}"))?;
        cfg.sim.get_or_insert_with(SimConfig::default).validate().map_err(|e| anyhow::anyhow!("sim: {e}"))?;

        // Where files live is not part of the experiment; the instance content is.
        let mut hashed = cfg.clone();
        hashed.run.instance = None;
        hashed.run.output = PathBuf::new();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&hashed)?);
        h.update(serde_json::to_vec(&inst)?);
        let hash = format!("{:x}", h.finalize());
        Ok(Self { cfg, inst, behavior, choice, hash, timing })
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            method: self.cfg.run.method,
            epsilon: self.cfg.run.epsilon,
            time_limit: self.cfg.run.time_limit.map(Duration::from_secs_f64),
            ..Default::default()
        }
    }

    pub fn saa(&self) -> SaaConfig {
        self.cfg.saa.clone().unwrap_or_default()
    }

    pub fn sim(&self) -> SimConfig {
        self.cfg.sim.clone().unwrap_or_default()
    }

    pub fn out(&self, name: &str) -> Result<PathBuf> {
        let dir = &self.cfg.run.output;
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(dir.join(name))
    }

    pub fn seconds(&self, s: f64) -> f64 {
        if self.timing {
            s
        } else {
            0.0
        }
    }
}
