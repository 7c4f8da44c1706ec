pub mod graph_imf;
pub mod imf;
pub mod matching;
pub mod sample;
pub mod schedule;
pub mod tabular;

use std::path::Path;

use dsbridge::io::read_marginal_file;
use dsbridge::StateSpace;

use crate::error::{CliError, CliResult};

/// Two marginal files over the same labelled space.
pub(crate) fn marginal_pair(a: &Path, b: &Path) -> CliResult<(StateSpace, Vec<f64>, Vec<f64>)> {
    let (sa, pa) = read_marginal_file(a)?;
    let (sb, pb) = read_marginal_file(b)?;
    if sa.labels() != sb.labels() {
        return Err(CliError::Validation(format!(
            "{} and {} list different states",
            a.display(),
            b.display()
        )));
    }
    Ok((sa, pa, pb))
}
