//! Event traces as CSV with columns `k,i,d_1,…,d_N` (block indices 0-based).

use std::io::{Read, Write};

use super::ScheduleEvent;
use crate::error::{Error, Result};

/// Incremental writer, used by engines that record events as they run.
pub struct EventWriter<W: Write> {
    inner: csv::Writer<W>,
    n: usize,
    row: Vec<String>,
}

impl<W: Write> EventWriter<W> {
    pub fn new(w: W, n_blocks: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string(), "i".to_string()];
        header.extend((1..=n_blocks).map(|j| format!("d_{j}")));
        inner.write_record(&header)?;
        Ok(EventWriter { inner, n: n_blocks, row: Vec::with_capacity(n_blocks + 2) })
    }

    pub fn write(&mut self, e: &ScheduleEvent) -> Result<()> {
        if e.d.len() != self.n {
            return Err(Error::Dimension(format!(
                "event {} has {} delays, trace has {} blocks",
                e.k,
                e.d.len(),
                self.n
            )));
        }
        self.row.clear();
        self.row.push(e.k.to_string());
        self.row.push(e.i.to_string());
        self.row.extend(e.d.iter().map(|d| d.to_string()));
        self.inner.write_record(&self.row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn write_events_csv<'a, W: Write>(
    w: W,
    n_blocks: usize,
    events: impl IntoIterator<Item = &'a ScheduleEvent>,
) -> Result<W> {
    let mut out = EventWriter::new(w, n_blocks)?;
    for e in events {
        out.write(e)?;
    }
    out.finish()
}

pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<ScheduleEvent>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let n = headers.len().checked_sub(2).ok_or_else(|| {
        Error::Parse("event trace header needs columns k,i,d_1..d_N".into())
    })?;
    if headers.get(0) != Some("k") || headers.get(1) != Some("i") {
        return Err(Error::Parse(format!("unexpected event trace header {headers:?}")));
    }
    let parse = |s: &str, line: u64| -> Result<u64> {
        s.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: '{s}' is not a nonnegative integer")))
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let k = parse(&rec[0], line)?;
        let i = parse(&rec[1], line)? as usize;
        if i >= n {
            return Err(Error::Parse(format!("line {line}: block {i} out of range for {n} blocks")));
        }
        let d = (2..rec.len())
            .map(|c| parse(&rec[c], line).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        out.push(ScheduleEvent { k, i, d });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{make_scheduler, SchedulerConfig, SchedulerKind};

    #[test]
    fn csv_round_trip() {
        let cfg = SchedulerConfig::new(SchedulerKind::SharedUniform, 4).with_delta(3).with_seed(1);
        let ev: Vec<_> = make_scheduler(&cfg).unwrap().take(40).collect();
        let bytes = write_events_csv(Vec::new(), 4, &ev).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("k,i,d_1,d_2,d_3,d_4\n"));
        assert_eq!(read_events_csv(bytes.as_slice()).unwrap(), ev);
    }

    #[test]
    fn rejects_out_of_range_block() {
        let text = "k,i,d_1,d_2\n0,2,0,0\n";
        assert!(read_events_csv(text.as_bytes()).is_err());
    }
}
