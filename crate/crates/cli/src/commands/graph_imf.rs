use std::path::{Path, PathBuf};

use dsbridge::graph::{
    enumerate_graph_space, graph_kernel, FlatGraphProcess, GraphProcess, GraphVocab,
    DEFAULT_ENUMERATION_CAP,
};
use dsbridge::imf::ImfConfig;
use dsbridge::io::{read_marginal_file, read_text_file, write_json_file};
use dsbridge::measures::Coupling;
use dsbridge::MarkovReference;
use serde::{Deserialize, Serialize};

use super::imf::{solve, Verdict};
use crate::config::{load, output_dir, ProcessConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub vocab: PathBuf,
    pub n_nodes: usize,
    pub process: ProcessConfig,
    /// Marginals keyed by graph key (`nodes|edges`); absent graphs get 0.
    pub gamma: PathBuf,
    pub xi: PathBuf,
    #[serde(default = "default_cap")]
    pub enumeration_cap: usize,
    #[serde(default)]
    pub imf: ImfConfig<f64>,
    #[serde(default = "default_tv_tolerance")]
    pub tv_tolerance: f64,
    pub output_dir: PathBuf,
}

fn default_cap() -> usize {
    DEFAULT_ENUMERATION_CAP
}

fn default_tv_tolerance() -> f64 {
    1e-4
}

#[derive(Debug, Serialize)]
struct GraphVerdict {
    #[serde(flatten)]
    imf: Verdict,
    n_graphs: usize,
    factorized_kernel_error: f64,
    expected_mismatch: f64,
    independent_mismatch: f64,
    mismatch_not_worse: bool,
    diagonal_mass: f64,
}

#[derive(Serialize)]
struct StateRow<'a> {
    index: usize,
    key: &'a str,
    respects_dummies: bool,
}

/// Marginal over the enumerated space from a file keyed by graph key.
fn keyed_marginal(path: &Path, keys: &[String]) -> CliResult<Vec<f64>> {
    let (space, p) = read_marginal_file::<f64>(path)?;
    let mut out = vec![0.0; keys.len()];
    for (label, v) in space.labels().iter().zip(p) {
        let i = keys.iter().position(|k| k == label).ok_or_else(|| {
            CliError::Validation(format!(
                "{}: {label:?} is not a graph of this space",
                path.display()
            ))
        })?;
        out[i] = v;
    }
    Ok(out)
}

/// Largest gap between the flat kernel and the per-pair factorized kernel.
fn factorized_kernel_error(flat: &FlatGraphProcess<f64>) -> CliResult<f64> {
    let n = flat.n_steps();
    let graphs = flat.space().graphs();
    let mut worst = 0.0f64;
    for (s, t) in [(0, n), (0, n / 2), (n / 2, n), (n / 4, n / 4 + 1)] {
        let k = flat.transition(s, t)?.matrix;
        for (i, g1) in graphs.iter().enumerate() {
            for (j, g2) in graphs.iter().enumerate() {
                worst = worst.max((k[(i, j)] - graph_kernel(flat.process(), g1, g2, s, t)?).abs());
            }
        }
    }
    Ok(worst)
}

pub fn run(config: &Path, _seed: Option<u64>) -> CliResult<()> {
    let loaded = load::<Config>(config)?;
    let cfg = &loaded.config;
    let vocab_path = loaded.input(&cfg.vocab);
    let vocab =
        GraphVocab::from_json(&read_text_file(&vocab_path)?).map_err(|source| CliError::Input {
            path: vocab_path,
            source,
        })?;
    let space = enumerate_graph_space(&vocab, cfg.n_nodes, cfg.enumeration_cap)?;
    let states = space.state_space()?;
    let gamma = keyed_marginal(&loaded.input(&cfg.gamma), states.labels())?;
    let xi = keyed_marginal(&loaded.input(&cfg.xi), states.labels())?;
    let process = GraphProcess::new(vocab, cfg.process.build()?);
    let flat = FlatGraphProcess::new(space.clone(), process)?;
    let out = output_dir(&cfg.output_dir)?;
    let kernel_error = factorized_kernel_error(&flat)?;

    let mut w = csv::Writer::from_path(out.join("states.csv")).map_err(dsbridge::Error::from)?;
    for (index, (key, ok)) in states
        .labels()
        .iter()
        .zip(space.respects_dummies())
        .enumerate()
    {
        w.serialize(StateRow {
            index,
            key,
            respects_dummies: ok,
        })
        .map_err(dsbridge::Error::from)?;
    }
    w.flush().map_err(dsbridge::Error::from)?;

    let (imf, coupling) = solve(
        &states,
        &gamma,
        &xi,
        &flat,
        &cfg.imf,
        cfg.tv_tolerance,
        &out,
    )?;
    let expected = space.expected_mismatch(&coupling)?;
    let independent = space.expected_mismatch(&Coupling::product(&gamma, &xi)?)?;
    let converged = imf.converged;
    let iterations = imf.iterations;
    let verdict = GraphVerdict {
        imf,
        n_graphs: space.len(),
        factorized_kernel_error: kernel_error,
        expected_mismatch: expected,
        independent_mismatch: independent,
        mismatch_not_worse: expected <= independent + 1e-12,
        diagonal_mass: (0..space.len()).map(|i| coupling.matrix()[(i, i)]).sum(),
    };
    write_json_file(&out.join("verdict.json"), &verdict)?;
    println!(
        "{} graphs, {iterations} iterations, tv_to_oracle {:.3e}, mismatch {expected:.4} vs {independent:.4}",
        space.len(),
        verdict.imf.tv_to_oracle
    );
    if !converged {
        return Err(CliError::NotConverged(format!(
            "IMF stopped after {iterations} iterations"
        )));
    }
    Ok(())
}
