use std::path::{Path, PathBuf};

use dsbridge::graph::{GraphProcess, GraphVocab, LabeledGraph};
use dsbridge::io::{read_text_file, write_json_file};
use dsbridge::qap::{build_qap_cost, exhaustive_qap, solve_qap, QapSolverConfig, TrialResult};
use serde::{Deserialize, Serialize};

use crate::config::{load, output_dir, ProcessConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub process: ProcessConfig,
    #[serde(default)]
    pub solver: QapSolverConfig<f64>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct Output {
    mapping: Vec<usize>,
    nll: f64,
    trials: Vec<TrialResult<f64>>,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_nll: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_mapping: Option<Vec<usize>>,
    /// `nll − oracle_nll`.
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<f64>,
}

fn read_graph(path: &Path, vocab: &GraphVocab<f64>) -> CliResult<LabeledGraph> {
    let text = read_text_file(path)?;
    LabeledGraph::from_json(&text, vocab).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

pub fn run(
    g1: &Path,
    g2: &Path,
    vocab: &Path,
    config: &Path,
    exhaustive: bool,
    seed: Option<u64>,
) -> CliResult<()> {
    let cfg = load::<Config>(config)?.config;
    let vocab =
        GraphVocab::from_json(&read_text_file(vocab)?).map_err(|source| CliError::Input {
            path: vocab.to_path_buf(),
            source,
        })?;
    let (a, b) = (read_graph(g1, &vocab)?, read_graph(g2, &vocab)?);
    let n = a.n().max(b.n());
    let a = a.padded(n, vocab.dummy(), vocab.no_edge())?;
    let b = b.padded(n, vocab.dummy(), vocab.no_edge())?;
    let process = GraphProcess::new(vocab, cfg.process.build()?);
    let cost = build_qap_cost(&process, &a, &b)?;
    let out = output_dir(&cfg.output_dir)?;
    let oracle = if exhaustive {
        Some(exhaustive_qap(&cost)?)
    } else {
        None
    };
    let sol = solve_qap(&cost, &cfg.solver, seed.unwrap_or(cfg.seed))?;
    let output = Output {
        mapping: sol.assignment.mapping.clone(),
        nll: sol.nll,
        trials: sol.trials,
        n,
        oracle_nll: oracle.as_ref().map(|o| o.1),
        oracle_mapping: oracle.as_ref().map(|o| o.0.mapping.clone()),
        gap: oracle.as_ref().map(|o| sol.nll - o.1),
    };
    write_json_file(&out.join("assignment.json"), &output)?;
    match output.gap {
        Some(gap) => println!("nll {:.6} (gap to exhaustive {gap:.3e})", output.nll),
        None => println!("nll {:.6}", output.nll),
    }
    Ok(())
}
