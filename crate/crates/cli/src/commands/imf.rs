use std::path::{Path, PathBuf};

use dsbridge::imf::{imf_diagnostics, marginal_drift, run_imf, ImfConfig};
use dsbridge::io::{write_coupling_file, write_json_file, write_trace_file};
use dsbridge::measures::Coupling;
use serde::{Deserialize, Serialize};

use super::marginal_pair;
use crate::config::{load, output_dir, reference, ScheduleConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    pub gamma: PathBuf,
    pub xi: PathBuf,
    #[serde(default)]
    pub imf: ImfConfig<f64>,
    #[serde(default = "default_tv_tolerance")]
    pub tv_tolerance: f64,
    pub output_dir: PathBuf,
}

fn default_tv_tolerance() -> f64 {
    1e-4
}

#[derive(Debug, Serialize)]
pub(crate) struct Verdict {
    pub d: usize,
    pub n_steps: usize,
    pub iterations: usize,
    pub converged: bool,
    pub tv_to_oracle: f64,
    pub tv_tolerance: f64,
    pub tv_below_tolerance: bool,
    pub final_kl_to_oracle: Option<f64>,
    pub monotone: bool,
    pub path_monotone: Option<bool>,
    pub coarse_grid: bool,
    pub gamma_drift: f64,
    pub xi_drift: f64,
    pub point_mass: bool,
}

/// Shared by `imf` and `graph-imf`: run IMF from the product coupling and
/// write coupling, oracle, trace and verdict.
pub(crate) fn solve<R: dsbridge::MarkovReference<f64>>(
    space: &dsbridge::StateSpace,
    gamma: &[f64],
    xi: &[f64],
    reference: &R,
    imf: &ImfConfig<f64>,
    tv_tolerance: f64,
    out: &Path,
) -> CliResult<(Verdict, Coupling<f64>)> {
    let cfg = ImfConfig {
        log_kl_to_oracle: true,
        ..*imf
    };
    let result = run_imf(gamma, xi, Coupling::product(gamma, xi)?, reference, &cfg)?;
    let oracle = result.oracle.as_ref().expect("oracle requested");
    write_coupling_file(&out.join("coupling.csv"), space, &result.coupling)?;
    write_coupling_file(&out.join("oracle.csv"), space, oracle)?;
    write_trace_file(&out.join("trace.csv"), &result.trace)?;
    let report = imf_diagnostics(&result.trace)?;
    let (gamma_drift, xi_drift) = marginal_drift(&result.coupling, gamma, xi);
    let tv = result.coupling.tv(oracle);
    let verdict = Verdict {
        d: space.len(),
        n_steps: result.trace.n_steps,
        iterations: result.trace.records.len(),
        converged: result.converged,
        tv_to_oracle: tv,
        tv_tolerance,
        tv_below_tolerance: tv < tv_tolerance,
        final_kl_to_oracle: result.trace.records.last().and_then(|r| r.kl_to_oracle),
        monotone: report.monotone,
        path_monotone: report.path_monotone,
        coarse_grid: report.coarse_grid,
        gamma_drift,
        xi_drift,
        point_mass: result
            .coupling
            .matrix()
            .as_slice()
            .iter()
            .any(|&v| v > 1.0 - 1e-12),
    };
    if !report.monotone {
        eprint!("{}", report.table);
    }
    Ok((verdict, result.coupling))
}

pub fn run(config: &Path, _seed: Option<u64>) -> CliResult<()> {
    let loaded = load::<Config>(config)?;
    let cfg = &loaded.config;
    let (space, gamma, xi) = marginal_pair(&loaded.input(&cfg.gamma), &loaded.input(&cfg.xi))?;
    let r = reference(&cfg.schedule, cfg.prior.as_ref(), space.len())?;
    let out = output_dir(&cfg.output_dir)?;
    let (verdict, _) = solve(&space, &gamma, &xi, &r, &cfg.imf, cfg.tv_tolerance, &out)?;
    write_json_file(&out.join("verdict.json"), &verdict)?;
    println!(
        "{} iterations, tv_to_oracle {:.3e}, monotone {}",
        verdict.iterations, verdict.tv_to_oracle, verdict.monotone
    );
    if !verdict.converged {
        return Err(CliError::NotConverged(format!(
            "IMF stopped after {} iterations without meeting tol_coupling_tv",
            verdict.iterations
        )));
    }
    Ok(())
}
