//! Point-supervised cell detection and segmentation.
//!
//! Turns cell-center point annotations into pixel-level targets ([`encode`]), trains a
//! small convolutional pixel classifier with a round-robin multi-task loss schedule
//! ([`loss`], [`model`]), post-processes probability maps into masks, instances and
//! detections ([`post`]), and scores the result ([`metrics`]). [`data`] provides a
//! synthetic cell-image generator plus PNG/CSV ingestion.

pub mod cli;
pub mod data;
pub mod encode;
pub mod error;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod points;
pub mod post;
pub mod scalar;

pub use error::{Error, Result};
pub use grid::Grid;
pub use points::{Point, PointSet};
