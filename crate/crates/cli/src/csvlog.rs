//! Per-iteration CSV log with header
//! `iter,bending,jump0,jump1,dirichlet,total,step_norm,violation`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thinfold::flow::IterationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    pub bending: f64,
    pub jump0: f64,
    pub jump1: f64,
    pub dirichlet: f64,
    pub total: f64,
    pub step_norm: f64,
    pub violation: f64,
}

impl From<&IterationRecord> for LogRow {
    fn from(r: &IterationRecord) -> Self {
        let e = &r.energy;
        Self {
            iter: r.iter,
            bending: e.bending,
            jump0: e.jump0,
            jump1: e.jump1,
            dirichlet: e.dirichlet,
            total: e.total,
            step_norm: r.step_norm,
            violation: r.violation,
        }
    }
}

pub struct CsvLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvLog<W> {
    pub fn new(sink: W) -> Self {
        Self { writer: csv::Writer::from_writer(sink) }
    }

    pub fn record(&mut self, r: &IterationRecord) -> csv::Result<()> {
        self.writer.serialize(LogRow::from(r))
    }

    pub fn finish(mut self) -> csv::Result<W> {
        self.writer.flush()?;
        self.writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))
    }
}

pub fn read_log(text: &str) -> csv::Result<Vec<LogRow>> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}
