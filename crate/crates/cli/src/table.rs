//! Plain-text tables for the CLI.

use std::collections::{BTreeMap, BTreeSet};

use ocelgan::metrics::EvalReport;

use crate::payload::{PredictResponse, StatsRow};

const DAY: f64 = 86_400.0;

/// Left-aligned first column, right-aligned rest, two spaces apart.
pub fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |r: &[String]| {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = width[i]) } else { format!("{c:>w$}", w = width[i]) })
            .collect();
        cells.join("  ").trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn stats(rows: &[StatsRow]) -> String {
    let header = strings(&["object type", "cases", "max len", "min len", "mean len", "max days", "min days", "mean days"]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let s = &r.stats;
            vec![
                r.object_type.clone(),
                s.count.to_string(),
                s.max_len.to_string(),
                s.min_len.to_string(),
                format!("{:.2}", s.mean_len),
                format!("{:.2}", s.max_dur / DAY),
                format!("{:.2}", s.min_dur / DAY),
                format!("{:.2}", s.mean_dur / DAY),
            ]
        })
        .collect();
    render(&header, &body)
}

/// Activities down, object types across; `x` marks a relation.
pub fn relations(rel: &BTreeMap<String, BTreeSet<String>>) -> String {
    let activities: BTreeSet<&String> = rel.values().flatten().collect();
    let mut header = vec!["activity".to_string()];
    header.extend(rel.keys().cloned());
    let body: Vec<Vec<String>> = activities
        .into_iter()
        .map(|a| {
            let mut row = vec![a.clone()];
            row.extend(rel.values().map(|acts| if acts.contains(a) { "x".into() } else { String::new() }));
            row
        })
        .collect();
    render(&header, &body)
}

pub fn eval(report: &EvalReport) -> String {
    format!(
        "mean similarity  {:.4}\nMAE (normalized) {:.4}\npairs            {}\ntimestamps       {}\n",
        report.mean_similarity, report.mae_normalized, report.num_pairs, report.num_timestamps
    )
}

pub fn suffix(resp: &PredictResponse) -> String {
    let body: Vec<Vec<String>> =
        resp.suffix.iter().map(|e| vec![e.activity.clone(), e.timestamp.clone()]).collect();
    render(&strings(&["activity", "predicted timestamp"]), &body)
}
