use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::kernel::KernelKind;
use crate::strategies::StrategyId;

use super::{ExperimentError, SweepRow};

pub const CSV_HEADER: [&str; 10] =
    ["kernel", "n", "p", "strategy", "scenario", "beta", "mean_norm_comm", "stddev", "replications", "analysis_pred"];

/// One row of a results table as it appears on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub kernel: KernelKind,
    pub n: usize,
    pub p: usize,
    pub strategy: StrategyId,
    pub scenario: String,
    pub beta: Option<f64>,
    pub mean_norm_comm: f64,
    pub stddev: f64,
    pub replications: usize,
    pub analysis_pred: Option<f64>,
}

/// `x` rounded to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

pub fn format_sig6(x: f64) -> String {
    round_sig6(x).to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[CsvRecord], out: W) -> Result<(), ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::EmptyTable);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.kernel.to_string(),
            r.n.to_string(),
            r.p.to_string(),
            r.strategy.to_string(),
            r.scenario.clone(),
            opt(r.beta),
            format_sig6(r.mean_norm_comm),
            format_sig6(r.stddev),
            r.replications.to_string(),
            opt(r.analysis_pred),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the sweep table to `dest`.
pub fn emit_csv(rows: &[SweepRow], dest: &Path) -> Result<(), ExperimentError> {
    let records: Vec<CsvRecord> = rows.iter().map(SweepRow::record).collect();
    if records.is_empty() {
        return Err(ExperimentError::EmptyTable);
    }
    write_csv(&records, File::create(dest)?)
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<CsvRecord>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(ExperimentError::CsvRow { row: 0, message: "unexpected header".into() });
    }
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |message: String| ExperimentError::CsvRow { row, message };
        let field = |k: usize| rec.get(k).unwrap_or("");
        let float = |k: usize| field(k).parse::<f64>().map_err(|e| bad(format!("{}: {e}", CSV_HEADER[k])));
        let int = |k: usize| field(k).parse::<usize>().map_err(|e| bad(format!("{}: {e}", CSV_HEADER[k])));
        let maybe = |k: usize| if field(k).is_empty() { Ok(None) } else { float(k).map(Some) };
        records.push(CsvRecord {
            kernel: field(0).parse().map_err(bad)?,
            n: int(1)?,
            p: int(2)?,
            strategy: field(3).parse().map_err(bad)?,
            scenario: field(4).to_string(),
            beta: maybe(5)?,
            mean_norm_comm: float(6)?,
            stddev: float(7)?,
            replications: int(8)?,
            analysis_pred: maybe(9)?,
        });
    }
    Ok(records)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRecord>, ExperimentError> {
    parse_csv(File::open(path)?)
}
