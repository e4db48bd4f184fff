//! Ridge support vector machines and regression with one-shot multiple
//! incremental/decremental updates.
//!
//! A model is a [`model::DualState`]. Initial models come from the batch
//! solver in [`solver`]; [`online_svm`] and [`online_svr`] then add and
//! remove many samples per update by predicting the new multipliers from the
//! weight-error curve and restoring equilibrium with one bordered solve.
//! [`baseline_path`] implements the classical step-size path follower for
//! comparison.
//!
//! [`datakit`] loads and standardizes data, plans splits and update rounds
//! and persists models; [`bench`] times the update engines against full
//! retraining; [`wec`] extracts weight-error curve points from a model.

mod active_set;
pub mod baseline_path;
pub mod bench;
pub mod datakit;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod online_svm;
pub mod online_svr;
pub mod solver;
pub mod wec;

pub use error::{Error, Result};
