//! Opponent formation forecasting for robot soccer.
//!
//! The field is cut into a coarse grid and each opponent robot is reduced to
//! a discrete state (team centroid cell, position cell, velocity digits).
//! Training counts state-to-state moves observed between consecutive vision
//! packages; prediction follows the most frequent moves, first for the team
//! centroid and then for every robot inside that centroid's block.
//!
//! - [`grid`]: discretization and the state index codec
//! - [`vision`]: vision package logs and UDP datagrams
//! - [`simulator`]: seeded synthetic feed of plays and noise
//! - [`model`]: transition counts, queries, persistence and training
//! - [`predictor`]: formations and multi-step predictions
//! - [`evaluator`]: similarity measures and the evaluation harness

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod grid;
pub mod model;
pub mod predictor;
pub mod simulator;
pub mod vision;

pub use error::{Error, Result};
pub use grid::{Cell, GridSpec, PlayerState, StateIndex, ROBOTS};
pub use model::{centroid_block, CentroidBlock, TrainingSession, TransitionTable};
pub use predictor::{predict_play, predict_step, Formation, Prediction};
pub use vision::VisionPackage;
