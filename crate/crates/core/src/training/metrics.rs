use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::tasks::SplitRole;

pub const METRICS_HEADER: &str = "epoch,split,loss,accuracy,wall_time_s";

/// One evaluation: mean loss and accuracy of a split after `epoch`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: SplitRole,
    pub loss: f64,
    pub accuracy: f64,
    pub wall_time_s: f64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.epoch, self.split, self.loss, self.accuracy, self.wall_time_s
        )
    }

    fn parse(line: &str) -> Option<Self> {
        let mut f = line.split(',');
        let rec = Self {
            epoch: f.next()?.parse().ok()?,
            split: f.next()?.parse().ok()?,
            loss: f.next()?.parse().ok()?,
            accuracy: f.next()?.parse().ok()?,
            wall_time_s: f.next()?.parse().ok()?,
        };
        f.next().is_none().then_some(rec)
    }
}

/// Appends rows to a metrics CSV, flushing after each one so an aborted
/// run leaves its history on disk.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> io::Result<()> {
        writeln!(self.out, "{}", rec.csv_row())?;
        self.out.flush()
    }
}

pub fn read_metrics_csv(path: &Path) -> io::Result<Vec<MetricsRecord>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    match lines.next() {
        Some(Ok(h)) if h == METRICS_HEADER => {}
        _ => return Err(io::Error::new(io::ErrorKind::InvalidData, "missing metrics header")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let line = line?;
            MetricsRecord::parse(&line).ok_or_else(|| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {line:?}", i + 2))
            })
        })
        .collect()
}

/// First epoch whose validation accuracy reaches `threshold`.
pub fn first_epoch_reaching(history: &[MetricsRecord], threshold: f64) -> Option<usize> {
    history
        .iter()
        .find(|r| r.split == SplitRole::Val && r.accuracy >= threshold)
        .map(|r| r.epoch)
}
