use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{ClassRates, Metrics};

/// A labelled grid of optional numbers, rendered to one decimal place.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

const MISSING: &str = "NA";

fn percent(v: Option<f64>) -> Option<f64> {
    // Integer division keeps the value identical to what "98.4".parse() yields.
    v.map(|x| (x * 1000.0).round() / 10.0)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.1}"))
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, values: &[Option<f64>]) {
        self.rows.push((name.to_string(), values.to_vec()));
    }

    /// Append a row of fractions; they are stored as rounded percentages.
    pub fn push_fractions(&mut self, name: &str, values: &[Option<f64>]) {
        self.rows.push((name.to_string(), values.iter().map(|&v| percent(v)).collect()));
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for (name, values) in &self.rows {
            s.push_str(name);
            for v in values {
                s.push(',');
                s.push_str(&cell(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Table> {
        let bad = |line: usize, reason: String| Error::Format {
            path: "<csv>".into(),
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let mut fields = line.split(',').map(str::trim);
            let name = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|f| match f {
                    MISSING => Ok(None),
                    _ => f.parse::<f64>().map(Some).map_err(|e| bad(i + 1, format!("{f:?}: {e}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() + 1 != header.len() {
                return Err(bad(i + 1, format!("{} fields, header has {}", values.len() + 1, header.len())));
            }
            rows.push((name, values));
        }
        Ok(Table { header, rows })
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = std::iter::once(self.header.clone())
            .chain(
                self.rows
                    .iter()
                    .map(|(n, v)| std::iter::once(n.clone()).chain(v.iter().map(|&x| cell(x))).collect()),
            )
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| cells.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
        }
        s
    }
}

const RATE_HEADER: [&str; 6] = ["class", "accuracy", "tp_rate", "tn_rate", "fp_rate", "fn_rate"];

fn rate_row(r: &ClassRates) -> [Option<f64>; 5] {
    [r.accuracy, r.tp_rate, r.tn_rate, r.fp_rate, r.fn_rate]
}

/// One row per class with accuracy and the four one-vs-rest rates, as
/// percentages. `only` restricts the rows to the named classes.
pub fn metrics_table(rates: &[ClassRates], only: Option<&[&str]>) -> Table {
    let mut t = Table::new(&RATE_HEADER);
    for r in rates {
        if only.is_none_or(|names| names.contains(&r.class.as_str())) {
            t.push_fractions(&r.class, &rate_row(r));
        }
    }
    t
}

impl Metrics {
    pub fn table(&self, only: Option<&[&str]>) -> Table {
        metrics_table(&self.per_class, only)
    }
}
