//! Space-separated sweep tables with a `#` header line.

use std::fmt::Write as _;

/// Column 0 is `kappa`; rows are strictly increasing in it and hold no
/// NaNs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SweepTable {
    pub fn new(value_columns: Vec<String>) -> Self {
        let mut columns = vec!["kappa".to_string()];
        columns.extend(value_columns);
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    /// Appends a row, enforcing the table invariants.
    pub fn push(&mut self, row: Vec<f64>) -> Result<(), String> {
        if row.len() != self.columns.len() {
            return Err(format!("row has {} values, expected {}", row.len(), self.columns.len()));
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err("row contains NaN".into());
        }
        if let Some(last) = self.rows.last() {
            if row[0] <= last[0] {
                return Err(format!("kappa {} does not increase past {}", row[0], last[0]));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn emit(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join(" "));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("# "))
            .ok_or("missing `# ` header line")?;
        let columns: Vec<String> = header.split(' ').map(str::to_string).collect();
        if columns.first().map(String::as_str) != Some("kappa") || columns.iter().any(String::is_empty) {
            return Err(format!("bad header `{header}`"));
        }
        let mut table = Self { columns, rows: Vec::new() };
        for (n, line) in lines.enumerate() {
            let row = line
                .split(' ')
                .map(|c| c.parse::<f64>().map_err(|e| format!("line {}: `{c}`: {e}", n + 2)))
                .collect::<Result<Vec<_>, _>>()?;
            table.push(row).map_err(|e| format!("line {}: {e}", n + 2))?;
        }
        Ok(table)
    }
}
