//! Transportation mode prediction from GPS trajectories.
//!
//! The crate covers the whole pipeline: GeoLife-format ingestion
//! ([`ingest`]), per-user daily/mode segmentation ([`segmentation`]),
//! kinematic point features ([`kinematics`]), statistical trajectory
//! features ([`features`]), leakage-free scaling and optional noise
//! handling ([`preprocess`]), a native CART random forest ([`forest`]),
//! wrapper and importance-ranked feature selection ([`selection`]),
//! random vs user-grouped cross-validation with Wilcoxon signed-rank tests
//! ([`evaluation`]) and a deterministic synthetic data generator
//! ([`synthgen`]).

pub mod error;
pub mod evaluation;
pub mod features;
pub mod forest;
pub mod ingest;
pub mod kinematics;
pub mod matrix;
pub mod preprocess;
pub mod segmentation;
pub mod selection;
pub mod synthgen;

mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use seed::derive_seed;
