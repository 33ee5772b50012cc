//! Plain-text training log: one `key=value` line per epoch record and a
//! final `summary` line.

use std::fmt::Write as _;
use std::path::Path;

use ebm_core::EpochRecord;

use crate::error::{write_file, IoResult};

pub fn record_line(r: &EpochRecord, wall_ms: u128) -> String {
    let mut s = format!(
        "phase={} epoch={} lr={} momentum={} loss={}",
        r.phase, r.epoch, r.lr, r.momentum, r.loss
    );
    if let Some(e) = r.error {
        write!(s, " error={e}").expect("writing to a String");
    }
    write!(s, " wall_ms={wall_ms}").expect("writing to a String");
    s
}

#[derive(Clone, Debug, Default)]
pub struct MetricsLog {
    lines: Vec<String>,
}

impl MetricsLog {
    pub fn push_records(&mut self, records: &[EpochRecord], wall_ms: u128) {
        self.lines
            .extend(records.iter().map(|r| record_line(r, wall_ms)));
    }

    /// `pairs` are written in order after `summary`.
    pub fn push_summary(&mut self, pairs: &[(&str, String)]) {
        let mut s = String::from("summary");
        for (k, v) in pairs {
            write!(s, " {k}={v}").expect("writing to a String");
        }
        self.lines.push(s);
    }

    pub fn records(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| l.starts_with("phase="))
            .count()
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> IoResult<()> {
        write_file(path, self.render().as_bytes())
    }
}

/// Drops every `wall_ms=` field, leaving the parts that must repeat exactly
/// under a fixed seed.
pub fn strip_timing(text: &str) -> String {
    text.lines()
        .map(|l| {
            l.split(' ')
                .filter(|f| !f.starts_with("wall_ms="))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses the `key=value` fields of one line; the leading bare word, if any,
/// is ignored.
pub fn parse_fields(line: &str) -> Vec<(&str, &str)> {
    line.split(' ').filter_map(|f| f.split_once('=')).collect()
}
