//! Minimal CSV emission/parsing: UTF-8, header row, numeric cells.

use std::path::Path;

use crate::error::CliError;

pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    let width = header.len();
    for row in rows {
        debug_assert_eq!(row.len(), width, "csv row width mismatch");
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn fmt(v: f64) -> String {
    format!("{v:.9}")
}

/// Parse a numeric CSV back into (header, rows).
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Io(format!("{}: empty csv", path.display())))?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| {
            CliError::Io(format!("{}: non-numeric row {}", path.display(), idx + 2))
        })?;
        if row.len() != header.len() {
            return Err(CliError::Io(format!(
                "{}: row {} has {} cells, header has {}",
                path.display(),
                idx + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
