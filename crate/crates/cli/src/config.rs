//! Experiment configs. Every block rejects unknown keys; input paths are
//! resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use dsbridge::state_process::{NoiseSchedule, Prior, ReferenceProcess, DEFAULT_S_OFFSET};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Overrides `output_dir` of every config.
pub const OUTPUT_DIR_ENV: &str = "DSBRIDGE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub n_steps: usize,
    pub alpha_min: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "default_offset")]
    pub s_offset: f64,
}

fn one() -> f64 {
    1.0
}

fn default_offset() -> f64 {
    DEFAULT_S_OFFSET
}

impl ScheduleConfig {
    pub fn build(&self) -> CliResult<NoiseSchedule<f64>> {
        Ok(NoiseSchedule::symmetric_cosine(
            self.n_steps,
            self.alpha_min,
            self.tau,
            self.s_offset,
        )?)
    }
}

/// Reference process for graph commands: either a one-step process with
/// terminal retention `alpha`, or a full schedule.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub alpha: Option<f64>,
    pub schedule: Option<ScheduleConfig>,
}

impl ProcessConfig {
    pub fn build(&self) -> CliResult<NoiseSchedule<f64>> {
        match (self.alpha, &self.schedule) {
            (Some(a), None) => Ok(NoiseSchedule::single_step(a)?),
            (None, Some(s)) => s.build(),
            _ => Err(CliError::Validation(
                "process: give exactly one of `alpha` and `schedule`".into(),
            )),
        }
    }
}

pub fn reference(
    schedule: &ScheduleConfig,
    prior: Option<&Vec<f64>>,
    d: usize,
) -> CliResult<ReferenceProcess<f64>> {
    let prior = match prior {
        Some(p) if p.len() != d => {
            return Err(CliError::Validation(format!(
                "prior has {} entries, state space has {d}",
                p.len()
            )))
        }
        Some(p) => Prior::new(p.clone())?,
        None => Prior::uniform(d)?,
    };
    Ok(ReferenceProcess::new(schedule.build()?, prior))
}

/// A parsed config plus where it came from.
pub struct Loaded<C> {
    pub config: C,
    pub dir: PathBuf,
}

impl<C> Loaded<C> {
    pub fn input(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }
}

pub fn load<C: DeserializeOwned>(path: &Path) -> CliResult<Loaded<C>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        field: ".".into(),
        message: e.to_string(),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let config = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, dir })
}

/// Output directory: the environment override, else the config value.
pub fn output_dir(configured: &Path) -> CliResult<PathBuf> {
    let dir = match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}
