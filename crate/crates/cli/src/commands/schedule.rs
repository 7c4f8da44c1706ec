use std::path::{Path, PathBuf};

use dsbridge::io::{write_json_file, write_schedule_file};
use serde::{Deserialize, Serialize};

use crate::config::{load, output_dir, ScheduleConfig};
use crate::error::CliResult;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleConfig,
    /// Expected `[lo, hi]` for `ᾱ(τ)`.
    #[serde(default)]
    pub terminal_band: Option<[f64; 2]>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct Summary {
    n_steps: usize,
    tau: f64,
    alpha_min: f64,
    s_offset: f64,
    terminal_alpha_bar: f64,
    min_alpha: f64,
    terminal_in_band: Option<bool>,
}

pub fn run(config: &Path, _seed: Option<u64>) -> CliResult<()> {
    let cfg = load::<Config>(config)?.config;
    let schedule = cfg.schedule.build()?;
    let out = output_dir(&cfg.output_dir)?;
    write_schedule_file(&out.join("schedule.csv"), &schedule)?;
    let terminal = schedule.terminal_alpha_bar();
    let summary = Summary {
        n_steps: schedule.n_steps(),
        tau: schedule.tau(),
        alpha_min: cfg.schedule.alpha_min,
        s_offset: cfg.schedule.s_offset,
        terminal_alpha_bar: terminal,
        min_alpha: schedule.min_alpha(),
        terminal_in_band: cfg
            .terminal_band
            .map(|[lo, hi]| (lo..=hi).contains(&terminal)),
    };
    write_json_file(&out.join("summary.json"), &summary)?;
    println!(
        "alpha_bar(tau) = {terminal:.6} over {} steps",
        schedule.n_steps()
    );
    Ok(())
}
