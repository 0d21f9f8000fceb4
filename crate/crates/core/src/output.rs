//! Sinks for diagnostics rows and field snapshots, with CSV writers and a
//! snapshot reader.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::stepper::SimState;

pub trait DiagnosticsSink {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()>;
}

pub trait SnapshotSink {
    fn snapshot(&mut self, index: usize, state: &SimState) -> Result<()>;
}

/// Optional destinations for a run.
#[derive(Default)]
pub struct Sinks<'a> {
    pub diagnostics: Option<&'a mut dyn DiagnosticsSink>,
    pub snapshots: Option<&'a mut dyn SnapshotSink>,
}

impl<'a> Sinks<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn diagnostics(d: &'a mut dyn DiagnosticsSink) -> Self {
        Self {
            diagnostics: Some(d),
            snapshots: None,
        }
    }

    pub fn with_snapshots(mut self, s: &'a mut dyn SnapshotSink) -> Self {
        self.snapshots = Some(s);
        self
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsSink for MemorySink {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.records.push(rec.clone());
        Ok(())
    }
}

/// Keeps every snapshot in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySnapshots {
    pub states: Vec<SimState>,
}

impl SnapshotSink for MemorySnapshots {
    fn snapshot(&mut self, _index: usize, state: &SimState) -> Result<()> {
        self.states.push(state.clone());
        Ok(())
    }
}

/// Forwards each record to two sinks.
pub struct Tee<'a, 'b> {
    pub first: &'a mut dyn DiagnosticsSink,
    pub second: &'b mut dyn DiagnosticsSink,
}

impl DiagnosticsSink for Tee<'_, '_> {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.first.record(rec)?;
        self.second.record(rec)
    }
}

pub const DIAGNOSTICS_HEADER: [&str; 21] = [
    "t",
    "mass_c1",
    "mass_c2",
    "mass_chi",
    "mass_tau",
    "min_c1",
    "max_c1",
    "min_c2",
    "max_c2",
    "min_chi",
    "max_chi",
    "min_tau",
    "max_tau",
    "entropy_E",
    "dissipation_D",
    "fisher_tau",
    "grad_chi_sq",
    "positivity_debt",
    "cert_c1_mass",
    "cert_tau_linf",
    "cert_nonneg",
];

/// `{:?}` prints the shortest string that parses back to the same `f64`.
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn diagnostics_row(rec: &DiagnosticsRecord) -> Vec<String> {
    let mut cols = vec![fmt_num(rec.t)];
    cols.extend(rec.mass.iter().map(|&v| fmt_num(v)));
    for k in 0..4 {
        cols.push(fmt_num(rec.min[k]));
        cols.push(fmt_num(rec.max[k]));
    }
    for v in [
        rec.entropy_e,
        rec.dissipation_d,
        rec.fisher_tau,
        rec.grad_chi_sq,
        rec.positivity_debt,
    ] {
        cols.push(fmt_num(v));
    }
    let c = &rec.certificates;
    for b in [c.c1_mass_ok, c.tau_linf_ok, c.nonneg_ok] {
        cols.push(fmt_bool(b).to_string());
    }
    cols
}

/// Writes the header on creation and one row per record.
pub struct CsvDiagnostics<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> CsvDiagnostics<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(DIAGNOSTICS_HEADER).map_err(csv_err)?;
        Ok(Self { out })
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

impl CsvDiagnostics<File> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(File::create(path)?)
    }
}

impl<W: Write> DiagnosticsSink for CsvDiagnostics<W> {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.out
            .write_record(diagnostics_row(rec))
            .map_err(csv_err)?;
        self.out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{other:?}"),
        )),
    }
}

pub fn snapshot_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("snap_{index}.csv"))
}

const SNAPSHOT_INDEX: &str = "snap_index.csv";

/// Writes `snap_<index>.csv` files plus `snap_index.csv` mapping index to time.
pub struct SnapshotDir {
    dir: PathBuf,
    index: csv::Writer<File>,
}

impl SnapshotDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut index = csv::Writer::from_path(dir.join(SNAPSHOT_INDEX)).map_err(csv_err)?;
        index.write_record(["index", "t"]).map_err(csv_err)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            index,
        })
    }
}

impl SnapshotSink for SnapshotDir {
    fn snapshot(&mut self, index: usize, state: &SimState) -> Result<()> {
        write_snapshot(&snapshot_path(&self.dir, index), state)?;
        self.index
            .write_record([index.to_string(), fmt_num(state.t)])
            .map_err(csv_err)?;
        self.index.flush()?;
        Ok(())
    }
}

pub fn write_snapshot(path: &Path, state: &SimState) -> Result<()> {
    let g = state.grid();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: &[&str] = if g.dim() == 1 {
        &["x", "c1", "c2", "chi", "tau"]
    } else {
        &["x", "y", "c1", "c2", "chi", "tau"]
    };
    w.write_record(header).map_err(csv_err)?;
    for i in 0..g.len() {
        let x = g.center(i);
        let mut cols: Vec<String> = x[..g.dim()].iter().map(|&v| fmt_num(v)).collect();
        cols.extend(state.fields().iter().map(|f| fmt_num(f.values()[i])));
        w.write_record(&cols).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn invalid(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Io(io::Error::new(
        io::ErrorKind::InvalidData,
        format!("{}: {msg}", path.display()),
    ))
}

/// Numeric rows of a headed CSV file, each checked to have `width` columns.
fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != width {
            return Err(invalid(
                path,
                format!("row {}: expected {width} columns, got {}", n + 1, rec.len()),
            ));
        }
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| invalid(path, format!("row {}: {e}", n + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a snapshot written by [`write_snapshot`] onto `grid`.
pub fn read_snapshot(path: &Path, grid: Grid, t: f64) -> Result<SimState> {
    let rows = read_rows(path, grid.dim() + 4)?;
    let column = |k: usize| Field::new(grid, rows.iter().map(|r| r[grid.dim() + k]).collect());
    SimState::new(t, column(0)?, column(1)?, column(2)?, column(3)?)
}

/// Reads every snapshot listed in `snap_index.csv`, in index order.
pub fn read_snapshot_dir(dir: &Path, grid: Grid) -> Result<Vec<SimState>> {
    let mut entries: Vec<(usize, f64)> = read_rows(&dir.join(SNAPSHOT_INDEX), 2)?
        .into_iter()
        .map(|r| (r[0] as usize, r[1]))
        .collect();
    entries.sort_by_key(|e| e.0);
    entries
        .into_iter()
        .map(|(i, t)| read_snapshot(&snapshot_path(dir, i), grid, t))
        .collect()
}
