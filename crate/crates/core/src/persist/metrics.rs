//! Line-delimited JSON metrics stream, one [`RunRecord`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::RunRecord;

pub struct MetricsWriter<W: Write> {
    out: W,
    last_step: Option<usize>,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, last_step: None }
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<()> {
        if self.last_step.is_some_and(|s| record.step <= s) {
            return Err(Error::InvalidInput(format!(
                "metrics steps must increase, got {} after {}",
                record.step,
                self.last_step.unwrap_or_default()
            )));
        }
        let line = serde_json::to_string(record).map_err(|e| Error::FormatError(e.to_string()))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.last_step = Some(record.step);
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<RunRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::FormatError(format!("metrics line {}: {e}", i + 1)))?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: usize) -> RunRecord {
        RunRecord {
            step,
            loss: 0.5,
            lr: 0.01,
            rank_fraction: Some(0.25),
            ranks: Default::default(),
            blocks: vec![],
            svd_fallbacks: vec![],
            wall_time_s: None,
        }
    }

    #[test]
    fn writes_one_object_per_line() {
        let mut w = MetricsWriter::new(Vec::new());
        w.write(&record(0)).unwrap();
        w.write(&record(1)).unwrap();
        assert!(w.write(&record(1)).is_err());
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], r#"{"step":0,"loss":0.5,"lr":0.01,"rank_fraction":0.25}"#);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut w = MetricsWriter::create(&path).unwrap();
        for s in 0..3 {
            w.write(&record(s)).unwrap();
        }
        w.finish().unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back, (0..3).map(record).collect::<Vec<_>>());
    }
}
