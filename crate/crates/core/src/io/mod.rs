//! Data files, model documents, plot tables and studies.

pub mod csv;
pub mod datasets;
pub mod model;
pub mod plot;
pub mod study;

pub use self::csv::{load_csv, parse_csv, Dataset, LoadOptions};
pub use model::{load_model, save_model, ModelDocument, ModelFamily};
pub use plot::{emit_plot_data, PlotDocument};
pub use study::{misclassified, parse_values, run_perturbation_study, StudyRow, StudySettings};
