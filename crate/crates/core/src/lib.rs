//! Deep structured multi-target tracking.
//!
//! Candidate detections over a temporal window are associated by solving an
//! exact flow-constrained linear program ([`solver`]); the costs feeding it
//! come from small learnable scorers ([`scoring`]) trained end to end through
//! the program with a structured hinge loss ([`learning`]).

pub mod assoc;
pub mod baselines;
pub mod config;
pub mod datagen;
pub mod error;
pub mod features;
pub mod hungarian;
pub mod io;
pub mod learning;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod solver;
#[doc(hidden)]
pub mod testutil;
pub mod types;

pub use assoc::{build_graph, AssociationGraph, Assignment, GateConfig};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use features::FeatureConfig;
pub use metrics::{evaluate, MatchCriterion, MotReport};
pub use pipeline::{track_sequence, TrackingConfig};
pub use scoring::{CostModel, ScorerConfig};
pub use types::{AppearanceShape, Box2D, Box3D, CameraModel, Detection, EgoMotion, TrackBox, TrackSequence, Trajectory};
