use std::path::{Path, PathBuf};

use super::evaluate::{EvalReport, EvalRow};
use crate::error::{invalid_arg, Error, Result};

/// File name of the report inside a run directory.
pub const REPORT_FILE: &str = "eval_report.json";

/// One run in a comparison; `row` is `None` when the run has no report.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareEntry {
    pub run: String,
    pub row: Option<EvalRow>,
}

fn run_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Collects the aggregate evaluation row of each run directory.
pub fn compare(dirs: &[PathBuf]) -> Result<Vec<CompareEntry>> {
    if dirs.len() < 2 {
        return invalid_arg("compare needs at least two run directories");
    }
    dirs.iter()
        .map(|d| {
            let path = d.join(REPORT_FILE);
            let row = if path.exists() { Some(EvalReport::load(&path)?.aggregate) } else { None };
            Ok(CompareEntry { run: run_name(d), row })
        })
        .collect()
}

/// Columns `run,status` followed by the [`EvalRow`] fields; absent runs have
/// status `absent` and empty fields.
pub fn write_compare_csv(entries: &[CompareEntry], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let mut header = vec!["run", "status"];
    header.extend(EvalRow::FIELDS);
    w.write_record(&header)?;
    for e in entries {
        let mut rec = vec![e.run.clone()];
        match &e.row {
            Some(r) => {
                rec.push("ok".into());
                rec.extend([
                    r.label.clone(),
                    r.samples.to_string(),
                    r.trajectories.to_string(),
                    r.tv.to_string(),
                    r.tc.to_string(),
                    r.loss_q25.to_string(),
                    r.loss_q50.to_string(),
                    r.loss_q75.to_string(),
                    r.mean_loss.to_string(),
                    r.cvar.to_string(),
                    r.mean_cost_return.to_string(),
                    r.alpha.to_string(),
                    r.xi.to_string(),
                ]);
            }
            None => {
                rec.push("absent".into());
                rec.extend(std::iter::repeat_n(String::new(), EvalRow::FIELDS.len()));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a table written by [`write_compare_csv`].
pub fn read_compare_csv(path: &Path) -> Result<Vec<CompareEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| -> Result<f64> {
            f(i).parse().map_err(|_| Error::InvalidArgument(format!("bad number in column {i}")))
        };
        let int = |i: usize| -> Result<usize> {
            f(i).parse().map_err(|_| Error::InvalidArgument(format!("bad integer in column {i}")))
        };
        let row = if f(1) == "ok" {
            Some(EvalRow {
                label: f(2),
                samples: int(3)?,
                trajectories: int(4)?,
                tv: int(5)?,
                tc: num(6)?,
                loss_q25: num(7)?,
                loss_q50: num(8)?,
                loss_q75: num(9)?,
                mean_loss: num(10)?,
                cvar: num(11)?,
                mean_cost_return: num(12)?,
                alpha: num(13)?,
                xi: num(14)?,
            })
        } else {
            None
        };
        out.push(CompareEntry { run: f(0), row });
    }
    Ok(out)
}
