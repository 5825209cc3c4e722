//! Result tables in the usual MOT layout.

use std::fmt::Write as _;

use depthtrack::metrics::MotReport;

pub(crate) const HEADER: [&str; 5] = ["MOTA", "IDF1", "MT", "ML", "ID Sw."];

fn cells(r: &MotReport) -> [String; 5] {
    [
        format!("{:.2}", r.mota * 100.0),
        format!("{:.2}", r.idf1 * 100.0),
        r.mt.to_string(),
        r.ml.to_string(),
        r.id_switches.to_string(),
    ]
}

/// CSV with the given leading label columns.
pub(crate) fn csv(labels: &[&str], rows: &[(Vec<String>, MotReport)]) -> String {
    let mut out = String::new();
    let header: Vec<&str> = labels.iter().copied().chain(HEADER).collect();
    let _ = writeln!(out, "{}", header.join(","));
    for (label, r) in rows {
        let row: Vec<String> = label.iter().cloned().chain(cells(r)).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Aligned plain-text table.
pub(crate) fn pretty(labels: &[&str], rows: &[(Vec<String>, MotReport)]) -> String {
    let header: Vec<String> = labels
        .iter()
        .copied()
        .chain(HEADER)
        .map(String::from)
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, r)| label.iter().cloned().chain(cells(r)).collect())
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&body)
                .map(|row| row[c].len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&body) {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c < labels.len() {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
