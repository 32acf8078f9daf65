//! Reference datasets. `state.x77` ships with the crate; `f.voles` is read
//! from a user-supplied copy because no redistributable copy is bundled.

use std::path::PathBuf;

use super::csv::{load_csv, parse_csv, Dataset, LoadOptions};
use crate::error::{Error, Result};

const STATE_X77: &str = include_str!("../../data/state_x77.csv");

/// Environment variable naming a CSV copy of `f.voles`.
pub const FVOLES_ENV: &str = "CNMIX_FVOLES_CSV";

pub const FVOLES_COLUMNS: [&str; 7] = ["Age", "L2.Condylo", "L9.Inc.Foramen", "L7.Alveolar", "B3.Zyg", "B4.Interorbital", "H1.Skull"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetInfo {
    pub name: &'static str,
    pub shape: (usize, usize),
    pub label: Option<&'static str>,
    pub description: &'static str,
}

pub const CATALOG: [DatasetInfo; 2] = [
    DatasetInfo {
        name: "state.x77",
        shape: (50, 8),
        label: None,
        description: "US states, 1970s census statistics (bundled)",
    },
    DatasetInfo {
        name: "f.voles",
        shape: (86, 7),
        label: Some("Species"),
        description: "Microtus vole skull measurements, two species (set CNMIX_FVOLES_CSV)",
    },
];

/// The 50 × 8 `state.x77` table with state names as labels.
pub fn state_x77() -> Dataset {
    let opts = LoadOptions {
        label_column: Some("State".into()),
        ..LoadOptions::default()
    };
    let mut d = parse_csv(STATE_X77, "state.x77", &opts).expect("bundled state.x77 parses");
    d.name = "state.x77".into();
    d
}

/// Path of the user-supplied `f.voles` file, if configured.
pub fn f_voles_path() -> Option<PathBuf> {
    std::env::var_os(FVOLES_ENV).map(PathBuf::from)
}

/// Loads `f.voles` from `path`, checking the 86 × 7 shape, the column
/// names and a `Species` label column.
pub fn load_f_voles(path: impl Into<PathBuf>) -> Result<Dataset> {
    let path = path.into();
    let opts = LoadOptions {
        label_column: Some("Species".into()),
        ..LoadOptions::default()
    };
    let mut d = load_csv(&path, &opts)?;
    if d.data.names() != FVOLES_COLUMNS {
        return Err(Error::InvalidArgument(format!(
            "{} does not have the f.voles columns {:?}",
            path.display(),
            FVOLES_COLUMNS
        )));
    }
    if d.data.n() != 86 {
        return Err(Error::DimensionMismatch {
            expected: 86,
            found: d.data.n(),
        });
    }
    d.name = "f.voles".into();
    Ok(d)
}

/// `f.voles` from the file named by [`FVOLES_ENV`].
pub fn f_voles() -> Result<Dataset> {
    let path = f_voles_path().ok_or_else(|| {
        Error::InvalidArgument(format!("f.voles is not bundled; point {FVOLES_ENV} at a CSV copy"))
    })?;
    load_f_voles(path)
}

/// Resolves a catalog name or a CSV path.
pub fn resolve(name_or_path: &str) -> Result<Dataset> {
    match name_or_path {
        "state.x77" => Ok(state_x77()),
        "f.voles" => f_voles(),
        path => load_csv(path, &LoadOptions::default()),
    }
}
