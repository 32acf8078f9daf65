use std::path::Path;

use nalgebra::DMatrix;

use crate::data::DataMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Categorical column kept aside as labels and excluded from fitting.
    pub label_column: Option<String>,
    pub standardize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            label_column: None,
            standardize: false,
        }
    }
}

/// Numeric observations plus optional labels and free-text provenance.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub data: DataMatrix,
    pub labels: Option<Vec<String>>,
    pub label_column: Option<String>,
    /// `#` lines at the top of the file, plus a note when standardized.
    pub provenance: Vec<String>,
    pub standardized: bool,
}

impl Dataset {
    /// Copy with one numeric cell replaced.
    pub fn with_value(&self, row: usize, col: usize, value: f64) -> Result<Self> {
        Ok(Self {
            data: self.data.with_value(row, col, value)?,
            ..self.clone()
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv(&text, &name, opts)
}

/// Parses CSV text with a header row. Lines starting with `#` are comments;
/// those before the header are kept as provenance.
pub fn parse_csv(text: &str, name: &str, opts: &LoadOptions) -> Result<Dataset> {
    let mut provenance: Vec<String> = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .collect();

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(0, "", e))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = match &opts.label_column {
        Some(l) => Some(
            header
                .iter()
                .position(|h| h == l)
                .ok_or_else(|| Error::InvalidArgument(format!("no column named '{l}'")))?,
        ),
        None => None,
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_error(row, "", e))?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(cell.to_string());
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ if n == 0 && !looks_numeric(cell) => {
                    return Err(Error::NonNumericColumn(header[j].clone()));
                }
                _ => {
                    return Err(Error::Parse {
                        row,
                        column: header[j].clone(),
                        message: format!("'{cell}' is not a finite number"),
                    })
                }
            }
        }
        n += 1;
    }
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rows, found {n}")));
    }
    let mut data = DataMatrix::new(DMatrix::from_row_slice(n, names.len(), &values), names)?;
    if opts.standardize {
        data = data.standardized();
        provenance.push("standardized to zero mean and unit variance".into());
    }
    Ok(Dataset {
        name: name.to_string(),
        data,
        labels: label_idx.map(|_| labels),
        label_column: opts.label_column.clone(),
        provenance,
        standardized: opts.standardize,
    })
}

/// A first-row cell that is plainly text (not a missing-value marker)
/// means the whole column is categorical.
fn looks_numeric(cell: &str) -> bool {
    const MISSING: [&str; 4] = ["NA", "NaN", "nan", ""];
    MISSING.contains(&cell) || cell.parse::<f64>().is_ok()
}

fn parse_error(row: usize, column: &str, e: csv::Error) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: e.to_string(),
    }
}
