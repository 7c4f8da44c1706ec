use std::io::Write;
use std::path::{Path, PathBuf};

use dsbridge::bridge::{bridge_marginal, sample_bridge_paths};
use dsbridge::io::{fmt, write_json_file, write_paths_file};
use dsbridge::{MarkovReference, StateSpace};
use serde::{Deserialize, Serialize};

use crate::config::{load, output_dir, reference, ScheduleConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleConfig,
    pub d: usize,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    pub x0: usize,
    pub z: usize,
    pub n_paths: usize,
    #[serde(default = "yes")]
    pub write_paths: bool,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Serialize)]
struct Verdict {
    n_paths: usize,
    seed: u64,
    endpoints_ok: bool,
    all_constant: bool,
    midpoint_step: usize,
    midpoint_max_abs_z: f64,
    midpoint_within_3sigma: bool,
    max_abs_z: f64,
}

/// `|freq − q| / σ`, with `σ = sqrt(q(1−q)/n)`; zero when both sides are
/// deterministic and agree.
fn z_score(freq: f64, q: f64, n: usize) -> f64 {
    let sigma = (q * (1.0 - q) / n as f64).sqrt();
    let gap = (freq - q).abs();
    if sigma > 0.0 {
        gap / sigma
    } else if gap < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn run(config: &Path, seed: Option<u64>) -> CliResult<()> {
    let cfg = load::<Config>(config)?.config;
    let seed = seed.unwrap_or(cfg.seed);
    if cfg.x0 >= cfg.d || cfg.z >= cfg.d {
        return Err(CliError::Validation(format!(
            "x0 and z must be below d = {}",
            cfg.d
        )));
    }
    if cfg.n_paths == 0 {
        return Err(CliError::Validation("n_paths must be >= 1".into()));
    }
    let r = reference(&cfg.schedule, cfg.prior.as_ref(), cfg.d)?;
    let space = StateSpace::numbered(cfg.d)?;
    let paths = sample_bridge_paths(&r, cfg.x0, cfg.z, cfg.n_paths, seed)?;
    let out = output_dir(&cfg.output_dir)?;
    if cfg.write_paths {
        write_paths_file(&out.join("paths.csv"), &space, &paths)?;
    }

    let n = r.n_steps();
    let mid = n / 2;
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(out.join("marginals.csv")).map_err(dsbridge::Error::from)?,
    );
    let io = |e: std::io::Error| CliError::from(dsbridge::Error::from(e));
    writeln!(file, "k,t,state,count,empirical,analytic,z_score").map_err(io)?;
    let (mut max_z, mut mid_z) = (0.0f64, 0.0f64);
    for k in 0..=n {
        let t = r.dt() * k as f64;
        let analytic = bridge_marginal(&r, cfg.x0, cfg.z, k)?;
        let mut counts = vec![0usize; cfg.d];
        for p in &paths {
            counts[p.state_at(t)] += 1;
        }
        for (y, &c) in counts.iter().enumerate() {
            let freq = c as f64 / cfg.n_paths as f64;
            let zs = z_score(freq, analytic[y], cfg.n_paths);
            max_z = max_z.max(zs);
            if k == mid {
                mid_z = mid_z.max(zs);
            }
            writeln!(
                file,
                "{k},{},{},{c},{},{},{}",
                fmt(t),
                space.label(y),
                fmt(freq),
                fmt(analytic[y]),
                fmt(zs)
            )
            .map_err(io)?;
        }
    }
    file.flush().map_err(io)?;

    let verdict = Verdict {
        n_paths: cfg.n_paths,
        seed,
        endpoints_ok: paths
            .iter()
            .all(|p| p.start() == cfg.x0 && p.end() == cfg.z && p.is_consistent(r.tau())),
        all_constant: paths.iter().all(|p| p.num_jumps() == 0),
        midpoint_step: mid,
        midpoint_max_abs_z: mid_z,
        midpoint_within_3sigma: mid_z <= 3.0,
        max_abs_z: max_z,
    };
    write_json_file(&out.join("verdict.json"), &verdict)?;
    println!("{} paths, midpoint max |z| {mid_z:.3}", cfg.n_paths);
    Ok(())
}
