//! Report rows and their CSV form.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

/// Which image a row measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    Empty,
    UnagedOfFull,
    UnagedOfEmpty,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Empty => "empty",
            Variant::UnagedOfFull => "unaged-of-full",
            Variant::UnagedOfEmpty => "unaged-of-empty",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Measurements of one image at one reporting round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub round: u64,
    pub variant: Variant,
    pub dynamic_layout: f64,
    /// Modeled grep time divided by logical GiB on the image.
    pub est_grep_seconds_per_gib: f64,
    /// Modeled write time of the interval divided by logical GiB written in
    /// it. For unaged variants the interval is the copy itself.
    pub write_seconds_per_gib: f64,
    pub fullness: f64,
    pub blocks_written_cum: u64,
    /// Three most populated free-extent buckets, `floorxcount;...`.
    pub free_histogram: String,
}

pub const CSV_HEADER: &str =
    "round,variant,dynamic_layout,grep_s_per_gib,write_s_per_gib,fullness,blocks_written,free_hist_top3";

fn sort_key(r: &ReportRow) -> (u64, &'static str) {
    (r.round, r.variant.as_str())
}

fn write_row(out: &mut String, r: &ReportRow) {
    let _ = writeln!(
        out,
        "{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
        r.round,
        r.variant,
        r.dynamic_layout,
        r.est_grep_seconds_per_gib,
        r.write_seconds_per_gib,
        r.fullness,
        r.blocks_written_cum,
        r.free_histogram
    );
}

/// CSV with one line per row, ordered by round then variant name.
pub fn emit_csv(rows: &[ReportRow]) -> String {
    let mut sorted: Vec<&ReportRow> = rows.iter().collect();
    sorted.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        write_row(&mut out, r);
    }
    out
}

/// Like [`emit_csv`] with a leading column holding each row's axis value.
/// Groups keep their input order; rows within a group are sorted.
pub fn emit_sweep_csv(axis: &str, groups: &[super::SweepRow]) -> String {
    let mut out = format!("{axis},{CSV_HEADER}\n");
    for g in groups {
        let body = emit_csv(&g.rows);
        for line in body.lines().skip(1) {
            let _ = writeln!(out, "{},{line}", g.value);
        }
    }
    out
}
