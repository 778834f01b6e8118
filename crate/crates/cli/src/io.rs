//! CSV readers and writers.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use stable_posi::linmodel::{DesignMatrix, ModelSet};
use stable_posi::selectors::SelectionResult;
use stable_posi::stability::{IntervalSet, StabilityBudget};
use stable_posi::PosiError;

use crate::CliError;

/// Bumped whenever a column is added, removed or renamed.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const SELECTION_HEADER: [&str; 8] = ["kind", "step", "index", "value", "noisy", "eta", "tau", "nu"];
pub const INTERVALS_HEADER: [&str; 6] = ["index", "estimate", "stderr", "k_const", "lower", "upper"];

/// Shortest round-trip text for a float. NaN becomes an empty field;
/// infinities use the `inf` sentinel.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    let t = field.trim();
    match t {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => t.parse::<f64>().map_err(|_| {
            CliError::Parse(format!("{}:{line}: not a number: {t:?}", path.display()))
        }),
    }
}

fn records(path: &Path) -> Result<Vec<csv::StringRecord>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    rdr.records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Reads a numeric table. A first row with any non-numeric field is taken to
/// be a header and skipped.
pub fn read_table(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let rows = records(path)?;
    let skip = match rows.first() {
        Some(r) => r.iter().any(|f| f.parse::<f64>().is_err()) as usize,
        None => 0,
    };
    rows.iter()
        .enumerate()
        .skip(skip)
        .map(|(i, r)| r.iter().map(|f| parse_f64(f, path, i + 1)).collect())
        .collect()
}

/// Row-major design matrix, one observation per line.
pub fn read_design(path: &Path) -> Result<DesignMatrix, CliError> {
    let rows = read_table(path)?;
    if rows.is_empty() {
        return Err(CliError::Parse(format!("{}: no data rows", path.display())));
    }
    Ok(DesignMatrix::from_rows(&rows)?)
}

/// Single-column response.
pub fn read_response(path: &Path) -> Result<Vec<f64>, CliError> {
    let rows = read_table(path)?;
    if rows.is_empty() {
        return Err(CliError::Parse(format!("{}: no data rows", path.display())));
    }
    rows.into_iter()
        .map(|r| match r.as_slice() {
            [v] => Ok(*v),
            _ => Err(CliError::Parse(format!(
                "{}: response must have exactly one column, found {}",
                path.display(),
                r.len()
            ))),
        })
        .collect()
}

/// Design and response, with the row counts checked against each other.
pub fn read_data(x: &Path, y: &Path) -> Result<(DesignMatrix, Vec<f64>), CliError> {
    let x = read_design(x)?;
    let y = read_response(y)?;
    if y.len() != x.n() {
        return Err(PosiError::DimensionMismatch {
            what: "response rows vs design rows",
            expected: x.n(),
            got: y.len(),
        }
        .into());
    }
    Ok((x, y))
}

pub fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn finish<W: Write>(path: &Path, mut w: csv::Writer<W>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_row<W: Write, I, S>(path: &Path, w: &mut csv::Writer<W>, row: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Long-format selection file. Row kinds:
/// `model` (one per selected index), `theta` (LASSO coefficients),
/// `budget` (certified `(eta, tau, nu)` candidates), `scale` (Laplace scale),
/// `chosen` and `trace` (per-step winner and in-play scores).
pub fn write_selection(path: &Path, sel: &SelectionResult) -> Result<(), CliError> {
    let mut w = writer(path)?;
    write_row(path, &mut w, SELECTION_HEADER)?;
    let e = String::new;
    for (pos, &j) in sel.model.indices().iter().enumerate() {
        write_row(path, &mut w, ["model".into(), pos.to_string(), j.to_string(), e(), e(), e(), e(), e()])?;
    }
    if let Some(theta) = &sel.theta {
        for (j, v) in theta.iter().enumerate() {
            write_row(path, &mut w, ["theta".into(), e(), j.to_string(), fmt_f64(*v), e(), e(), e(), e()])?;
        }
    }
    for (i, b) in sel.budgets.iter().enumerate() {
        write_row(
            path,
            &mut w,
            ["budget".into(), i.to_string(), e(), e(), e(), fmt_f64(b.eta), fmt_f64(b.tau), fmt_f64(b.nu)],
        )?;
    }
    write_row(path, &mut w, ["scale".into(), e(), e(), fmt_f64(sel.noise_scale), e(), e(), e(), e()])?;
    for (t, step) in sel.trace.iter().enumerate() {
        write_row(path, &mut w, ["chosen".into(), t.to_string(), step.chosen.to_string(), e(), e(), e(), e(), e()])?;
        for (j, (s, z)) in step.scores.iter().zip(&step.noisy).enumerate() {
            if s.is_nan() {
                continue;
            }
            write_row(
                path,
                &mut w,
                ["trace".into(), t.to_string(), j.to_string(), fmt_f64(*s), fmt_f64(*z), e(), e(), e()],
            )?;
        }
    }
    finish(path, w)
}

/// The model and budgets stored in a selection file.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSelection {
    pub model: Vec<usize>,
    pub budgets: Vec<StabilityBudget>,
}

impl StoredSelection {
    pub fn model_set(&self, d: usize) -> Result<ModelSet, CliError> {
        if let Some(&j) = self.model.iter().find(|&&j| j >= d) {
            return Err(PosiError::DimensionMismatch {
                what: "selected index vs design columns",
                expected: d,
                got: j + 1,
            }
            .into());
        }
        Ok(ModelSet::new(self.model.clone(), d)?)
    }
}

pub fn read_selection(path: &Path) -> Result<StoredSelection, CliError> {
    let rows = records(path)?;
    let bad = |line: usize, msg: &str| CliError::Parse(format!("{}:{line}: {msg}", path.display()));
    match rows.first() {
        Some(h) if h.iter().eq(SELECTION_HEADER.iter().copied()) => {}
        _ => return Err(bad(1, "not a selection file (unexpected header)")),
    }
    let mut out = StoredSelection { model: Vec::new(), budgets: Vec::new() };
    for (i, r) in rows.iter().enumerate().skip(1) {
        let line = i + 1;
        let field = |c: usize| r.get(c).unwrap_or("");
        match field(0) {
            "model" => {
                let j = field(2).parse().map_err(|_| bad(line, "bad model index"))?;
                out.model.push(j);
            }
            "budget" => {
                let b = StabilityBudget::new(
                    parse_f64(field(5), path, line)?,
                    parse_f64(field(6), path, line)?,
                    parse_f64(field(7), path, line)?,
                )
                .map_err(|e| bad(line, &e.to_string()))?;
                out.budgets.push(b);
            }
            "theta" | "scale" | "chosen" | "trace" => {}
            other => return Err(bad(line, &format!("unknown row kind {other:?}"))),
        }
    }
    if out.budgets.is_empty() {
        return Err(bad(rows.len(), "selection file carries no budgets"));
    }
    Ok(out)
}

pub fn write_intervals(path: &Path, ci: Option<&IntervalSet>) -> Result<(), CliError> {
    let mut w = writer(path)?;
    write_row(path, &mut w, INTERVALS_HEADER)?;
    if let Some(ci) = ci {
        for (pos, &j) in ci.model.indices().iter().enumerate() {
            write_row(
                path,
                &mut w,
                [
                    j.to_string(),
                    fmt_f64(ci.estimates[pos]),
                    fmt_f64(ci.stderrs[pos]),
                    fmt_f64(ci.k),
                    fmt_f64(ci.lower[pos]),
                    fmt_f64(ci.upper[pos]),
                ],
            )?;
        }
    }
    finish(path, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_fields() {
        assert_eq!(fmt_f64(f64::NAN), "");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_opt(None), "");
        let v = 1.0 / 3.0;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn header_detection() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(read_table(&p).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        std::fs::write(&p, "1,2\n3,4\n").unwrap();
        assert_eq!(read_table(&p).unwrap().len(), 2);
        std::fs::write(&p, "1,2\n3,x\n").unwrap();
        assert!(matches!(read_table(&p), Err(CliError::Parse(_))));
    }
}
