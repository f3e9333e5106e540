//! CSV ingestion.

use std::path::Path;

use cpqr::Dataset;

use crate::CliError;

/// A dataset plus the names of its covariate columns.
pub struct LoadedData {
    pub data: Dataset,
    pub covariates: Vec<String>,
}

/// Reads a CSV with a header row. Columns `y` and `q` are required; every other
/// column is a covariate, in file order.
pub fn load_csv(path: &Path, gamma: f64) -> Result<LoadedData, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::usage(format!("{}: cannot read header row: {e}", path.display())))?
        .clone();
    let find = |name: &str| -> Result<usize, CliError> {
        let hits: Vec<usize> = headers.iter().enumerate().filter(|(_, h)| *h == name).map(|(i, _)| i).collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(CliError::usage(format!("{}: missing required column '{name}'", path.display()))),
            _ => Err(CliError::usage(format!("{}: column '{name}' appears more than once", path.display()))),
        }
    };
    let y_col = find("y")?;
    let q_col = find("q")?;
    let cov_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != y_col && i != q_col).collect();
    if cov_cols.is_empty() {
        return Err(CliError::usage(format!("{}: no covariate columns besides 'y' and 'q'", path.display())));
    }
    let covariates: Vec<String> = cov_cols.iter().map(|&i| headers[i].to_string()).collect();

    let (mut y, mut q, mut x) = (Vec::new(), Vec::new(), Vec::new());
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(String::from("?"), |p| p.line().to_string());
            CliError::usage(format!("{}: data row {} (line {line}): {e}", path.display(), r + 1))
        })?;
        let cell = |c: usize| -> Result<f64, CliError> {
            let raw = &record[c];
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::usage(format!(
                    "{}: data row {}, column '{}': cannot parse '{raw}' as a finite number",
                    path.display(),
                    r + 1,
                    &headers[c]
                ))
            })
        };
        y.push(cell(y_col)?);
        q.push(cell(q_col)?);
        for &c in &cov_cols {
            x.push(cell(c)?);
        }
    }
    if y.is_empty() {
        return Err(CliError::usage(format!("{}: no data rows", path.display())));
    }
    let data = Dataset::new(y, x, covariates.len(), q, gamma).map_err(CliError::from)?;
    Ok(LoadedData { data, covariates })
}
