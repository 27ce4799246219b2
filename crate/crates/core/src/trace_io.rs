//! CSV files exchanged between the pipeline stages.
//!
//! All files use `,` as delimiter, `.` as decimal separator, LF line endings
//! and a header row. Powers are written in scientific notation with 17
//! significant digits so they read back bit-exact.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::chan_sim::InterferenceTrace;
use crate::emd::ImfSet;
use crate::error::{Error, Result};
use crate::fbl_alloc::AllocationRecord;
use crate::forecast::Method;

/// Format a value with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Header plus numeric columns of a CSV file.
struct Table {
    header: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            let v = field.parse::<f64>().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                message: format!("row {}: '{field}' is not a number", line + 2),
            })?;
            col.push(v);
        }
    }
    Ok(Table { header, columns })
}

fn require_column<'a>(table: &'a Table, name: &str, path: &Path) -> Result<&'a [f64]> {
    table
        .header
        .iter()
        .position(|h| h == name)
        .map(|i| table.columns[i].as_slice())
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("missing column '{name}'"),
        })
}

/// `t,total,i1..iN`.
pub fn write_trace_csv(path: &Path, trace: &InterferenceTrace) -> Result<()> {
    let per = trace.per_interferer.as_deref().unwrap_or(&[]);
    let mut header = vec!["t".to_owned(), "total".to_owned()];
    header.extend((1..=per.len()).map(|i| format!("i{i}")));
    let rows = trace.samples.iter().enumerate().map(|(t, total)| {
        let mut row = vec![t.to_string(), fmt_num(*total)];
        row.extend(per.iter().map(|p| fmt_num(p[t])));
        row
    });
    write_rows(path, &header, rows)
}

/// Reads the `total` column, and `i1..iN` when present.
pub fn read_trace_csv(path: &Path) -> Result<InterferenceTrace> {
    let table = read_table(path)?;
    let samples = require_column(&table, "total", path)?.to_vec();
    let per: Vec<Vec<f64>> = (1..)
        .map_while(|i| {
            let name = format!("i{i}");
            table
                .header
                .iter()
                .position(|h| *h == name)
                .map(|c| table.columns[c].clone())
        })
        .collect();
    Ok(InterferenceTrace {
        samples,
        per_interferer: if per.is_empty() { None } else { Some(per) },
    })
}

/// `t,total,imf_1..imf_k,residual`.
pub fn write_imfs_csv(path: &Path, total: &[f64], set: &ImfSet) -> Result<()> {
    let mut header = vec!["t".to_owned(), "total".to_owned()];
    header.extend((1..=set.imfs.len()).map(|k| format!("imf_{k}")));
    header.push("residual".to_owned());
    let rows = total.iter().enumerate().map(|(t, v)| {
        let mut row = vec![t.to_string(), fmt_num(*v)];
        row.extend(set.imfs.iter().map(|imf| fmt_num(imf[t])));
        row.push(fmt_num(set.residual[t]));
        row
    });
    write_rows(path, &header, rows)
}

/// Validation-window predictions of several methods.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    /// Time index of each validation step.
    pub t: Vec<usize>,
    pub actual: Vec<f64>,
    pub columns: Vec<(Method, Vec<f64>)>,
}

/// `t,actual,pred_<method>...`.
pub fn write_predictions_csv(path: &Path, table: &PredictionTable) -> Result<()> {
    let mut header = vec!["t".to_owned(), "actual".to_owned()];
    header.extend(table.columns.iter().map(|(m, _)| m.column().to_owned()));
    let rows = table.t.iter().enumerate().map(|(k, t)| {
        let mut row = vec![t.to_string(), fmt_num(table.actual[k])];
        row.extend(table.columns.iter().map(|(_, v)| fmt_num(v[k])));
        row
    });
    write_rows(path, &header, rows)
}

pub fn read_predictions_csv(path: &Path) -> Result<PredictionTable> {
    let table = read_table(path)?;
    let t = require_column(&table, "t", path)?
        .iter()
        .map(|&v| v as usize)
        .collect();
    let actual = require_column(&table, "actual", path)?.to_vec();
    let mut columns = Vec::new();
    for (name, col) in table.header.iter().zip(&table.columns) {
        if name == "t" || name == "actual" {
            continue;
        }
        let method = Method::from_column(name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("unknown prediction column '{name}'"),
        })?;
        columns.push((method, col.clone()));
    }
    Ok(PredictionTable { t, actual, columns })
}

pub fn write_allocations_csv(path: &Path, records: &[AllocationRecord]) -> Result<()> {
    let header: Vec<String> = [
        "t",
        "predicted_interference",
        "predicted_sinr",
        "channel_uses",
        "target_eps",
        "actual_interference",
        "actual_sinr",
        "achieved_eps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = records.iter().map(|r| {
        vec![
            r.t.to_string(),
            fmt_num(r.predicted_interference),
            fmt_num(r.predicted_sinr),
            fmt_num(r.channel_uses),
            fmt_num(r.target_eps),
            fmt_num(r.actual_interference),
            fmt_num(r.actual_sinr),
            fmt_num(r.achieved_eps),
        ]
    });
    write_rows(path, &header, rows)
}

/// Write arbitrary string rows; used for report tables.
pub fn write_string_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    write_rows(path, &header, rows.iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chan_sim::{gen_interference_trace, LinkConfig};
    use crate::emd::{decompose, SiftParams};

    #[test]
    fn trace_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let cfg = LinkConfig { n_samples: 50, ..LinkConfig::default() };
        let trace = gen_interference_trace(&cfg).unwrap();
        write_trace_csv(&path, &trace).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,total,i1,i2,i3,i4,i5\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_trace_csv(&path).unwrap(), trace);
    }

    #[test]
    fn imf_columns_sum_to_total() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imfs.csv");
        let total: Vec<f64> = (0..120).map(|t| ((t * 31) % 17) as f64 + 0.1 * t as f64).collect();
        let set = decompose(&total, &SiftParams::default()).unwrap();
        write_imfs_csv(&path, &total, &set).unwrap();
        let table = read_table(&path).unwrap();
        assert_eq!(table.header.last().unwrap(), "residual");
        for (row, want) in total.iter().enumerate() {
            let sum: f64 = table.columns[2..].iter().map(|c| c[row]).sum();
            assert!((sum - want).abs() < 1e-9 * 20.0);
        }
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let table = PredictionTable {
            t: vec![8, 9],
            actual: vec![1.5, 2.5],
            columns: vec![(Method::ArEmd, vec![1.0, 2.0]), (Method::Genie, vec![1.5, 2.5])],
        };
        write_predictions_csv(&path, &table).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,actual,pred_ar_emd,pred_genie\n"));
        assert_eq!(read_predictions_csv(&path).unwrap(), table);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_trace_csv(Path::new("/nonexistent/trace.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/trace.csv"));
    }
}
