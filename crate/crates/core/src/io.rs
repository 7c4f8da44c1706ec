//! CSV and JSON formats. Floats are written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::bridge::JumpPath;
use crate::error::{Error, Result};
use crate::imf::ImfTrace;
use crate::linalg::Matrix;
use crate::measures::{validate_distribution, Coupling, MarkovChainMeasure};
use crate::scalar::Scalar;
use crate::state_process::{NoiseSchedule, StateSpace};
use crate::tabular::LossRecord;

/// Scientific notation with 17 significant digits.
pub fn fmt<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

fn fmt_opt<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(String::new, fmt)
}

fn parse<T: Scalar>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse::<f64>()
        .map(T::lit)
        .map_err(|_| Error::Format(format!("{what}: cannot parse {s:?} as a number")))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Format(format!("{}: {io}", path.display())),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// `label,probability` rows.
pub fn write_marginal<T: Scalar, W: Write>(w: W, space: &StateSpace, p: &[T]) -> Result<()> {
    if p.len() != space.len() {
        return Err(Error::SizeMismatch {
            expected: space.len(),
            found: p.len(),
        });
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["label", "probability"])?;
    for (l, v) in space.labels().iter().zip(p) {
        out.write_record([l.as_str(), &fmt(*v)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_marginal<T: Scalar, R: Read>(r: R) -> Result<(StateSpace, Vec<T>)> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["label", "probability"] {
        return Err(Error::Format("expected header label,probability".into()));
    }
    let mut labels = Vec::new();
    let mut p = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Format(format!(
                "expected 2 fields, found {}",
                rec.len()
            )));
        }
        labels.push(rec[0].to_string());
        p.push(parse(&rec[1], "probability")?);
    }
    let space = StateSpace::new(labels)?;
    validate_distribution(&p, "marginal")?;
    Ok((space, p))
}

/// Read and validate a marginal file; errors name the file.
pub fn read_marginal_file<T: Scalar>(path: &Path) -> Result<(StateSpace, Vec<T>)> {
    let f = open(path)?;
    with_path(path, read_marginal(f))
}

pub fn write_marginal_file<T: Scalar>(path: &Path, space: &StateSpace, p: &[T]) -> Result<()> {
    write_marginal(create(path)?, space, p)
}

/// Header `from,<labels>`; each row starts with its label.
pub fn write_matrix<T: Scalar, W: Write>(w: W, space: &StateSpace, m: &Matrix<T>) -> Result<()> {
    if m.rows() != space.len() || m.cols() != space.len() {
        return Err(Error::SizeMismatch {
            expected: space.len(),
            found: m.rows(),
        });
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["from".to_string()];
    header.extend(space.labels().iter().cloned());
    out.write_record(&header)?;
    for (i, l) in space.labels().iter().enumerate() {
        let mut row = vec![l.clone()];
        row.extend(m.row(i).iter().map(|&v| fmt(v)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix<T: Scalar, R: Read>(r: R) -> Result<(StateSpace, Matrix<T>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("from") {
        return Err(Error::Format("first header column must be \"from\"".into()));
    }
    let labels = header[1..].to_vec();
    let d = labels.len();
    let mut rows = Vec::with_capacity(d);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::Format(format!(
                "row {i}: expected {} fields, found {}",
                d + 1,
                rec.len()
            )));
        }
        if rec.get(0) != labels.get(i).map(String::as_str) {
            return Err(Error::Format(format!(
                "row {i}: label {:?} does not match the header",
                &rec[0]
            )));
        }
        rows.push(
            rec.iter()
                .skip(1)
                .map(|s| parse(s, "entry"))
                .collect::<Result<Vec<T>>>()?,
        );
    }
    if rows.len() != d {
        return Err(Error::Format(format!(
            "expected {d} rows, found {}",
            rows.len()
        )));
    }
    let space = StateSpace::new(labels)?;
    Ok((space, Matrix::from_rows(&rows).expect("rectangular")))
}

pub fn write_coupling_file<T: Scalar>(
    path: &Path,
    space: &StateSpace,
    c: &Coupling<T>,
) -> Result<()> {
    write_matrix(create(path)?, space, c.matrix())
}

pub fn read_coupling_file<T: Scalar>(path: &Path) -> Result<(StateSpace, Coupling<T>)> {
    let f = open(path)?;
    with_path(
        path,
        read_matrix(f).and_then(|(s, m)| Ok((s, Coupling::new(m)?))),
    )
}

/// `k,t,alpha,alpha_bar`; `alpha` is empty at `k = 0`.
pub fn write_schedule<T: Scalar, W: Write>(w: W, schedule: &NoiseSchedule<T>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "t", "alpha", "alpha_bar"])?;
    for k in 0..=schedule.n_steps() {
        let alpha = if k == 0 {
            String::new()
        } else {
            fmt(schedule.alpha()[k - 1])
        };
        out.write_record([
            k.to_string(),
            fmt(schedule.time(k)),
            alpha,
            fmt(schedule.alpha_bar_at(k)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_schedule_file<T: Scalar>(path: &Path, schedule: &NoiseSchedule<T>) -> Result<()> {
    write_schedule(create(path)?, schedule)
}

/// `iteration,direction,tv_change,kl_to_oracle,path_kl_to_oracle,path_kl`;
/// missing values empty.
pub fn write_trace<T: Scalar, W: Write>(w: W, trace: &ImfTrace<T>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "iteration",
        "direction",
        "tv_change",
        "kl_to_oracle",
        "path_kl_to_oracle",
        "path_kl",
    ])?;
    for r in &trace.records {
        out.write_record([
            r.iteration.to_string(),
            r.direction.as_str().to_string(),
            fmt(r.tv_change),
            fmt_opt(r.kl_to_oracle),
            fmt_opt(r.path_kl_to_oracle),
            fmt_opt(r.path_kl),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_file<T: Scalar>(path: &Path, trace: &ImfTrace<T>) -> Result<()> {
    write_trace(create(path)?, trace)
}

/// `path,t,state`: the starting state at `t = 0`, then one row per jump.
pub fn write_paths<T: Scalar, W: Write>(
    w: W,
    space: &StateSpace,
    paths: &[JumpPath<T>],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "t", "state"])?;
    for (i, p) in paths.iter().enumerate() {
        let id = i.to_string();
        out.write_record([id.as_str(), &fmt(T::zero()), space.label(p.start())])?;
        for (t, &s) in p.times.iter().zip(&p.states[1..]) {
            out.write_record([id.as_str(), &fmt(*t), space.label(s)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_paths_file<T: Scalar>(
    path: &Path,
    space: &StateSpace,
    paths: &[JumpPath<T>],
) -> Result<()> {
    write_paths(create(path)?, space, paths)
}

/// `step,loss,grad_norm`.
pub fn write_loss_curve<T: Scalar, W: Write>(w: W, curve: &[LossRecord<T>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "loss", "grad_norm"])?;
    for r in curve {
        out.write_record([r.step.to_string(), fmt(r.loss), fmt(r.grad_norm)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_loss_curve_file<T: Scalar>(path: &Path, curve: &[LossRecord<T>]) -> Result<()> {
    write_loss_curve(create(path)?, curve)
}

#[derive(Serialize)]
struct ChainManifest<'a> {
    n_steps: usize,
    labels: &'a [String],
    initial: &'a str,
    kernels: Vec<String>,
}

/// Write `initial.csv`, one `kernel_KKKK.csv` per step (from `k` to `k+1`)
/// and `manifest.json` into `dir`.
pub fn write_markov_chain<T: Scalar>(
    dir: &Path,
    space: &StateSpace,
    chain: &MarkovChainMeasure<T>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?;
    write_marginal_file(&dir.join("initial.csv"), space, &chain.init)?;
    let mut kernels = Vec::with_capacity(chain.n_steps());
    for (k, kernel) in chain.kernels.iter().enumerate() {
        let name = format!("kernel_{k:04}.csv");
        write_matrix(create(&dir.join(&name))?, space, &kernel.matrix)?;
        kernels.push(name);
    }
    let manifest = ChainManifest {
        n_steps: chain.n_steps(),
        labels: space.labels(),
        initial: "initial.csv",
        kernels,
    };
    write_json_file(&dir.join("manifest.json"), &manifest)
}

/// Pretty JSON with a trailing newline.
pub fn write_json_file<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_text_file(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_text_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
