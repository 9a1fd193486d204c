use std::fmt::Write;

use std::str::FromStr;

use super::{CoverageReport, EvalError, GroupReport, LatencyStats, MetricReport, P_AT_KS};

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// One column of the metric tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricColumn {
    PrecisionAt(usize),
    Map,
    Mrr,
}

impl MetricColumn {
    /// The default layout: P@1, P@3, P@5, P@10, MAP, MRR.
    pub fn all() -> Vec<MetricColumn> {
        let mut cols: Vec<MetricColumn> = P_AT_KS.iter().map(|&k| MetricColumn::PrecisionAt(k)).collect();
        cols.extend([MetricColumn::Map, MetricColumn::Mrr]);
        cols
    }

    pub fn header(self) -> String {
        match self {
            MetricColumn::PrecisionAt(k) => format!("P@{k}"),
            MetricColumn::Map => "MAP".into(),
            MetricColumn::Mrr => "MRR".into(),
        }
    }

    fn cell(self, r: &MetricReport) -> String {
        pct(match self {
            MetricColumn::PrecisionAt(k) => r.p(k),
            MetricColumn::Map => r.map_score,
            MetricColumn::Mrr => r.mrr,
        })
    }
}

impl FromStr for MetricColumn {
    type Err = EvalError;

    /// `p1`, `p3`, `p5`, `p10`, `map` or `mrr`, case-insensitive.
    fn from_str(s: &str) -> Result<Self, EvalError> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "map" => return Ok(MetricColumn::Map),
            "mrr" => return Ok(MetricColumn::Mrr),
            _ => {}
        }
        s.strip_prefix("p@")
            .or_else(|| s.strip_prefix('p'))
            .and_then(|k| k.parse().ok())
            .filter(|k| P_AT_KS.contains(k))
            .map(MetricColumn::PrecisionAt)
            .ok_or_else(|| EvalError::InvalidArgument(format!("unknown metric {s:?} (use p1, p3, p5, p10, map, mrr)")))
    }
}

fn metric_cells(r: &MetricReport, cols: &[MetricColumn]) -> Vec<String> {
    cols.iter().map(|c| c.cell(r)).collect()
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                write!(out, "{c:<w$}").unwrap();
            } else {
                write!(out, "  {c:>w$}").unwrap();
            }
        }
        out.push('\n');
    };
    line(&mut out, header);
    for row in rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// Percent table with one row per named report.
pub fn format_metric_table(rows: &[(&str, &MetricReport)]) -> String {
    format_metric_columns(rows, &MetricColumn::all())
}

pub fn format_metric_columns(rows: &[(&str, &MetricReport)], cols: &[MetricColumn]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.to_string(), r.n_queries.to_string()];
            row.extend(metric_cells(r, cols));
            row
        })
        .collect();
    let mut header = vec!["system".to_string(), "queries".to_string()];
    header.extend(cols.iter().map(|c| c.header()));
    render(&header.iter().map(String::as_str).collect::<Vec<_>>(), &body)
}

/// Group table; flagged groups are omitted unless `include_flagged`.
pub fn format_breakdown_table(groups: &[GroupReport], include_flagged: bool) -> String {
    format_breakdown_columns(groups, include_flagged, &MetricColumn::all())
}

pub fn format_breakdown_columns(groups: &[GroupReport], include_flagged: bool, cols: &[MetricColumn]) -> String {
    let body: Vec<Vec<String>> = groups
        .iter()
        .filter(|g| include_flagged || !g.flagged)
        .map(|g| {
            let name = if g.flagged {
                format!("{}*", g.group)
            } else {
                g.group.clone()
            };
            let mut row = vec![name, g.report.n_queries.to_string(), g.n_pairs.to_string()];
            row.extend(metric_cells(&g.report, cols));
            row
        })
        .collect();
    let mut header = vec!["group".to_string(), "queries".to_string(), "pairs".to_string()];
    header.extend(cols.iter().map(|c| c.header()));
    render(&header.iter().map(String::as_str).collect::<Vec<_>>(), &body)
}

pub fn format_coverage_table(r: &CoverageReport) -> String {
    let body: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| {
            vec![
                row.k.to_string(),
                format!("{}%", pct(row.avg_coverage)),
                format!("{}%", pct(row.perfect_coverage)),
            ]
        })
        .collect();
    render(&["k", "avg_coverage", "perfect_coverage"], &body)
}

/// Seconds, three decimals.
pub fn format_latency_table(rows: &[(&str, &LatencyStats)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, s)| {
            vec![
                name.to_string(),
                s.n.to_string(),
                format!("{:.3}", s.avg),
                format!("{:.3}", s.p5),
                format!("{:.3}", s.p95),
            ]
        })
        .collect();
    render(&["system", "queries", "Avg", "p5", "p95"], &body)
}
