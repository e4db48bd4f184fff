//! Dataset ingestion, standardization, splitting, round scheduling and
//! model persistence.

mod load;
mod persist;
mod schedule;
mod standardize;
pub mod synthetic;

pub use load::{load_csv, parse_csv, DatasetSpec, LabelColumn};
pub use persist::{load_model, save_model, Model, ModelFile, StoredModel, FORMAT_VERSION};
pub use schedule::{schedule_rounds, split, subsample, RoundSchedule, SplitPlan};
pub use standardize::{fit_standardizer, StandardizationStats};
