//! Server-side record of every message and the privacy audit over it.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::Serialize;

use super::message::{MessageKind, ProtocolMessage};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub dir: Direction,
    /// Party on the other end of the link.
    pub peer: u32,
    pub message: ProtocolMessage,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    dir: Direction,
    kind: &'a str,
    sender: u32,
    peer: u32,
    epoch: u64,
    shape: [usize; 2],
    digest: String,
}

/// Outcome of [`Transcript::audit`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub messages: usize,
    /// Messages containing, bit for bit, a full sample row.
    pub row_leaks: usize,
    /// Messages containing a provider's slice of a sample row (slices of at
    /// least two features).
    pub subset_row_leaks: usize,
    /// Messages containing a hospital's label vector or the pooled one.
    pub label_leaks: usize,
    pub naive_blocks: usize,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.row_leaks == 0 && self.subset_row_leaks == 0 && self.label_leaks == 0 && self.naive_blocks == 0
    }
}

impl Transcript {
    pub fn record(&mut self, dir: Direction, peer: u32, message: &ProtocolMessage) {
        self.entries.push(TranscriptEntry { dir, peer, message: message.clone() });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.entries.iter().filter(|e| e.message.kind == kind).count()
    }

    pub fn counts(&self) -> BTreeMap<MessageKind, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.message.kind).or_insert(0) += 1;
        }
        out
    }

    /// One JSON object per line: direction, kind, sender, peer, epoch, shape
    /// and payload digest.
    pub fn write_log(&self, w: &mut impl Write) -> Result<()> {
        for e in &self.entries {
            let m = &e.message;
            let line = LogLine {
                dir: e.dir,
                kind: m.kind.as_str(),
                sender: m.sender,
                peer: e.peer,
                epoch: m.epoch,
                shape: [m.rows, m.cols],
                digest: m.digest(),
            };
            serde_json::to_writer(&mut *w, &line).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Looks for any secret vector appearing as a contiguous run inside any
    /// payload, comparing bit patterns.
    pub fn audit(&self, rows: &[Vec<f64>], subset_rows: &[Vec<f64>], labels: &[Vec<f64>]) -> AuditReport {
        let rows = Needles::new(rows);
        let subsets = Needles::new(&subset_rows.iter().filter(|r| r.len() >= 2).cloned().collect::<Vec<_>>());
        let labels = Needles::new(labels);
        let mut report = AuditReport { messages: self.entries.len(), ..AuditReport::default() };
        for e in &self.entries {
            let bits: Vec<u64> = e.message.data.iter().map(|v| v.to_bits()).collect();
            report.row_leaks += usize::from(rows.found_in(&bits));
            report.subset_row_leaks += usize::from(subsets.found_in(&bits));
            report.label_leaks += usize::from(labels.found_in(&bits));
            report.naive_blocks += usize::from(e.message.kind == MessageKind::NaiveKernelBlock);
        }
        report
    }
}

struct Needles {
    by_len: BTreeMap<usize, HashSet<Vec<u64>>>,
}

impl Needles {
    fn new(vectors: &[Vec<f64>]) -> Self {
        let mut by_len: BTreeMap<usize, HashSet<Vec<u64>>> = BTreeMap::new();
        for v in vectors.iter().filter(|v| !v.is_empty()) {
            by_len.entry(v.len()).or_default().insert(v.iter().map(|x| x.to_bits()).collect());
        }
        Self { by_len }
    }

    fn found_in(&self, hay: &[u64]) -> bool {
        self.by_len
            .iter()
            .take_while(|(len, _)| **len <= hay.len())
            .any(|(len, set)| hay.windows(*len).any(|w| set.contains(w)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_finds_embedded_rows() {
        let mut t = Transcript::default();
        t.record(Direction::In, 1, &ProtocolMessage::vector(MessageKind::PartialKtKp, 1, 1, vec![9.0, 0.25, 0.5, 7.0]));
        t.record(Direction::In, 2, &ProtocolMessage::vector(MessageKind::NaiveKernelBlock, 100, 0, vec![1.0]));
        let r = t.audit(&[vec![0.25, 0.5]], &[], &[vec![1.0, -1.0]]);
        assert_eq!(r.row_leaks, 1);
        assert_eq!(r.label_leaks, 0);
        assert_eq!(r.naive_blocks, 1);
        assert!(!r.clean());
    }

    #[test]
    fn audit_compares_bits() {
        let mut t = Transcript::default();
        t.record(Direction::In, 1, &ProtocolMessage::vector(MessageKind::PartialKtKp, 1, 1, vec![-0.0, -0.0]));
        let r = t.audit(&[vec![0.0, 0.0]], &[vec![0.0, 0.0]], &[]);
        assert!(r.clean());
    }

    #[test]
    fn log_is_line_delimited_json() {
        let mut t = Transcript::default();
        t.record(Direction::Out, 1, &ProtocolMessage::stop(0, 3, false));
        let mut buf = Vec::new();
        t.write_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(v["kind"], "Stop");
        assert_eq!(v["dir"], "out");
        assert_eq!(v["epoch"], 3);
        assert_eq!(v["digest"].as_str().unwrap().len(), 64);
    }
}
