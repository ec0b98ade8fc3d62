//! Report rendering: comparison tables as CSV and aligned-column
//! markdown, per-record rows as JSON lines. All values that are rates
//! are printed as percentages with two decimals, lengths as plain
//! numbers, so tables read like the usual comparison tables for this
//! kind of evaluation.

use std::fmt::Write as _;

use crate::metrics::MetricReport;

pub const REPORT_COLUMNS: [&str; 8] = [
    "approach",
    "ais_strict",
    "ais_macro",
    "ais_micro",
    "rouge1_precision",
    "rouge2_precision",
    "rougeLsum_precision",
    "length_words",
];

fn pct(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn table_cells(label: &str, report: &MetricReport) -> Vec<String> {
    vec![
        label.to_string(),
        pct(report.ais.strict),
        pct(report.ais.r#macro),
        pct(report.ais.micro),
        pct(report.rouge1_p),
        pct(report.rouge2_p),
        pct(report.rouge_lsum_p),
        format!("{:.2}", report.mean_length_tokens),
    ]
}

/// The comparison table as CSV, one row per strategy.
pub fn render_csv(rows: &[(String, MetricReport)]) -> String {
    let mut out = String::new();
    out.push_str(&REPORT_COLUMNS.join(","));
    out.push('\n');
    for (label, report) in rows {
        let cells = table_cells(label, report);
        let line: Vec<String> = cells.iter().map(|c| csv_field(c)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// The comparison table as aligned-column markdown.
pub fn render_markdown(title: &str, rows: &[(String, MetricReport)]) -> String {
    let header = [
        "Approach", "Strict", "Macro", "Micro", "R1", "R2", "RL", "Length",
    ];
    let mut grid: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (label, report) in rows {
        grid.push(table_cells(label, report));
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| grid.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "## {title}");
    out.push('\n');
    for (r, row) in grid.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{:<width$}", cell, width = widths[c])
                } else {
                    format!("{:>width$}", cell, width = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if r == 0 {
            let rule: Vec<String> = widths
                .iter()
                .enumerate()
                .map(|(c, w)| {
                    if c == 0 {
                        format!("{:-<width$}", "", width = *w)
                    } else {
                        format!("{:->width$}", "", width = *w)
                    }
                })
                .collect();
            let _ = writeln!(out, "| {} |", rule.join(" | "));
        }
    }
    out
}

/// N-gram uniqueness table (1/2/3-gram columns) as CSV.
pub fn render_uniqueness_csv(rows: &[(String, MetricReport)]) -> String {
    let mut out = String::from("approach,unique_1gram,unique_2gram,unique_3gram\n");
    for (label, report) in rows {
        let u = |n: usize| pct(report.ngram_uniqueness.get(&n).copied().unwrap_or(1.0));
        out.push_str(&format!("{},{},{},{}\n", csv_field(label), u(1), u(2), u(3)));
    }
    out
}
