use std::io::Write;
use std::path::{Path, PathBuf};

use dsbridge::imf::Direction;
use dsbridge::io::{
    fmt, read_coupling_file, write_coupling_file, write_json_file, write_loss_curve_file,
    write_text_file,
};
use dsbridge::measures::ReciprocalMeasure;
use dsbridge::tabular::{
    approximate_imf, gradient_check, train_with_tables, ApproxImfConfig, PinnedTables,
    TabularPredictor, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::marginal_pair;
use crate::config::{load, output_dir, reference, ScheduleConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    ApproximateImf,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Uniform,
    ExactPosterior,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mode: Mode,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    /// Coupling CSV, for `train`.
    #[serde(default)]
    pub coupling: Option<PathBuf>,
    /// Marginal CSVs, for `approximate_imf`.
    #[serde(default)]
    pub gamma: Option<PathBuf>,
    #[serde(default)]
    pub xi: Option<PathBuf>,
    #[serde(default = "forward")]
    pub direction: Direction,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub train: TrainConfig<f64>,
    #[serde(default)]
    pub approx: ApproxImfConfig<f64>,
    #[serde(default = "default_kernel_tolerance")]
    pub kernel_tolerance: f64,
    #[serde(default = "default_tv_tolerance")]
    pub tv_tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn forward() -> Direction {
    Direction::Forward
}

fn default_kernel_tolerance() -> f64 {
    1e-2
}

fn default_tv_tolerance() -> f64 {
    5e-2
}

fn required<'a>(v: &'a Option<PathBuf>, name: &str, mode: &str) -> CliResult<&'a PathBuf> {
    v.as_ref()
        .ok_or_else(|| CliError::Validation(format!("mode {mode} needs `{name}`")))
}

#[derive(Debug, Serialize)]
struct TrainVerdict {
    direction: Direction,
    steps: usize,
    zero_step: bool,
    initial_loss: f64,
    final_loss: f64,
    floor: f64,
    final_grad_norm: f64,
    monotone: bool,
    kernel_error: f64,
    kernel_tolerance: f64,
    kernel_error_below_tolerance: bool,
}

#[derive(Debug, Serialize)]
struct ApproxVerdict {
    n_outer: usize,
    alternate: bool,
    tv_to_oracle: f64,
    tv_tolerance: f64,
    tv_below_tolerance: bool,
    initial_marginal_tv: f64,
    terminal_marginal_tv: f64,
}

pub fn run(config: &Path, seed: Option<u64>) -> CliResult<()> {
    let loaded = load::<Config>(config)?;
    let cfg = &loaded.config;
    let seed = seed.unwrap_or(cfg.seed);
    let out = output_dir(&cfg.output_dir)?;
    match cfg.mode {
        Mode::Train => {
            let path = loaded.input(required(&cfg.coupling, "coupling", "train")?);
            let (space, coupling) = read_coupling_file(&path)?;
            let r = reference(&cfg.schedule, cfg.prior.as_ref(), space.len())?;
            let tables = PinnedTables::new(&r, cfg.direction)?;
            let rec = ReciprocalMeasure::new(coupling, &r)?;
            let weights = tables.weights(&rec)?;
            let exact = tables.exact_posterior(&weights)?;
            let floor = tables.loss_and_grad(&exact, &weights, false)?.0;
            let start = match cfg.init {
                Init::Uniform => {
                    TabularPredictor::uniform(cfg.direction, tables.n_steps(), space.len())
                }
                Init::ExactPosterior => exact,
            };
            let train = TrainConfig { seed, ..cfg.train };
            let result = train_with_tables(start, &tables, &rec, &train)?;
            write_loss_curve_file(&out.join("loss_curve.csv"), &result.curve)?;
            write_text_file(&out.join("checkpoint.json"), &result.predictor.to_json()?)?;
            let kernel_error = tables.kernel_error(&result.predictor, &rec)?;
            let first = result.curve.first().expect("at least one record");
            let last = result.curve.last().expect("at least one record");
            let verdict = TrainVerdict {
                direction: cfg.direction,
                steps: result.steps,
                zero_step: result.steps == 0,
                initial_loss: first.loss,
                final_loss: last.loss,
                floor,
                final_grad_norm: last.grad_norm,
                monotone: result
                    .curve
                    .windows(2)
                    .all(|w| w[1].loss <= w[0].loss + 1e-12),
                kernel_error,
                kernel_tolerance: cfg.kernel_tolerance,
                kernel_error_below_tolerance: kernel_error < cfg.kernel_tolerance,
            };
            write_json_file(&out.join("verdict.json"), &verdict)?;
            println!(
                "{} steps, loss {:.6e} (floor {floor:.6e}), kernel error {kernel_error:.3e}",
                result.steps, last.loss
            );
        }
        Mode::ApproximateImf => {
            let gamma = loaded.input(required(&cfg.gamma, "gamma", "approximate_imf")?);
            let xi = loaded.input(required(&cfg.xi, "xi", "approximate_imf")?);
            let (space, gamma, xi) = marginal_pair(&gamma, &xi)?;
            let r = reference(&cfg.schedule, cfg.prior.as_ref(), space.len())?;
            let approx = ApproxImfConfig {
                train: TrainConfig {
                    seed,
                    ..cfg.approx.train
                },
                ..cfg.approx
            };
            let result = approximate_imf(&gamma, &xi, &r, &approx)?;
            write_coupling_file(&out.join("coupling.csv"), &space, &result.coupling)?;
            write_coupling_file(&out.join("oracle.csv"), &space, &result.oracle)?;
            let mut f = std::io::BufWriter::new(
                std::fs::File::create(out.join("outer.csv")).map_err(dsbridge::Error::from)?,
            );
            let io = |e: std::io::Error| CliError::from(dsbridge::Error::from(e));
            writeln!(f, "outer,direction,train_steps,final_loss,tv_to_oracle,initial_marginal_tv,terminal_marginal_tv")
                .map_err(io)?;
            for rec in &result.records {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{}",
                    rec.outer,
                    rec.direction.as_str(),
                    rec.train_steps,
                    fmt(rec.final_loss),
                    fmt(rec.tv_to_oracle),
                    fmt(rec.initial_marginal_tv),
                    fmt(rec.terminal_marginal_tv)
                )
                .map_err(io)?;
            }
            f.flush().map_err(io)?;
            if let Some(p) = &result.forward {
                write_text_file(&out.join("forward_checkpoint.json"), &p.to_json()?)?;
            }
            if let Some(p) = &result.backward {
                write_text_file(&out.join("backward_checkpoint.json"), &p.to_json()?)?;
            }
            let last = result.records.last().expect("n_outer >= 1");
            let tv = result.coupling.tv(&result.oracle);
            let verdict = ApproxVerdict {
                n_outer: result.records.len(),
                alternate: approx.alternate,
                tv_to_oracle: tv,
                tv_tolerance: cfg.tv_tolerance,
                tv_below_tolerance: tv < cfg.tv_tolerance,
                initial_marginal_tv: last.initial_marginal_tv,
                terminal_marginal_tv: last.terminal_marginal_tv,
            };
            write_json_file(&out.join("verdict.json"), &verdict)?;
            println!(
                "{} outer iterations, tv_to_oracle {tv:.3e}",
                result.records.len()
            );
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckConfig {
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    pub coupling: PathBuf,
    #[serde(default = "forward")]
    pub direction: Direction,
    #[serde(default = "default_coords")]
    pub n_coords: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Logits are drawn uniformly from `[-logit_scale, logit_scale]`.
    #[serde(default = "default_scale")]
    pub logit_scale: f64,
    #[serde(default = "default_grad_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn default_coords() -> usize {
    100
}

fn default_h() -> f64 {
    1e-5
}

fn default_scale() -> f64 {
    2.0
}

fn default_grad_tolerance() -> f64 {
    1e-4
}

#[derive(Debug, Serialize)]
struct GradVerdict {
    direction: Direction,
    coordinates: usize,
    h: f64,
    max_rel_error: f64,
    max_abs_error: f64,
    tolerance: f64,
    passed: bool,
}

pub fn grad_check(config: &Path, seed: Option<u64>) -> CliResult<()> {
    let loaded = load::<GradCheckConfig>(config)?;
    let cfg = &loaded.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(cfg.seed));
    let (space, coupling) = read_coupling_file(&loaded.input(&cfg.coupling))?;
    let d = space.len();
    let r = reference(&cfg.schedule, cfg.prior.as_ref(), d)?;
    let tables = PinnedTables::new(&r, cfg.direction)?;
    let weights = tables.weights(&ReciprocalMeasure::new(coupling, &r)?)?;
    let len = tables.n_steps() * d * d;
    let logits = (0..len)
        .map(|_| rng.random_range(-cfg.logit_scale..=cfg.logit_scale))
        .collect();
    let pred = TabularPredictor::from_logits(cfg.direction, tables.n_steps(), d, logits)?;
    let coords: Vec<usize> = (0..cfg.n_coords)
        .map(|_| rng.random_range(0..len))
        .collect();
    let check = gradient_check(&pred, &tables, &weights, &coords, cfg.h)?;
    let out = output_dir(&cfg.output_dir)?;
    let verdict = GradVerdict {
        direction: cfg.direction,
        coordinates: check.coordinates,
        h: cfg.h,
        max_rel_error: check.max_rel_error,
        max_abs_error: check.max_abs_error,
        tolerance: cfg.tolerance,
        passed: check.max_rel_error < cfg.tolerance,
    };
    write_json_file(&out.join("verdict.json"), &verdict)?;
    println!(
        "{} coordinates, max relative error {:.3e}",
        check.coordinates, check.max_rel_error
    );
    Ok(())
}
