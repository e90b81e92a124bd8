//! Park-scale social sensing from fixed monocular cameras.
//!
//! The crate turns per-frame object detections into world-coordinate
//! trajectories and the reports built on top of them:
//!
//! - [`model`] — domain types and detection-file ingestion (MOT-16 text,
//!   JSON-lines, binary appearance sidecar).
//! - [`tracking`] — tracking by detection: an 8-state Kalman filter, gated
//!   motion/appearance association, cascade + IoU matching, track lifecycle.
//! - [`mapping`] — pinhole camera model with radial/tangential distortion,
//!   ground-plane back-projection, and planar extrinsic calibration.
//! - [`grouping`] — windowed social-group detection from pairwise trajectory
//!   features (proxemics, shape similarity, motion causality, path
//!   convergence) solved by correlation clustering.
//! - [`monitoring`] — social-distance measurements and violations, facility
//!   contact events, head-crop extraction for mask classification, and
//!   activity aggregation.
//! - [`evaluation`] — MOT-challenge tracking metrics and pairwise grouping
//!   precision/recall/F1.
//! - [`synth`] — deterministic scenario generator used as a desk-scale
//!   ground-truth source.
//! - [`config`] / [`pipeline`] — run configuration and the batch commands the
//!   CLI exposes.
//!
//! The `examples/` directory holds one runnable example per capability; see
//! the README for the CLI entry points.

pub mod error;
pub mod grouping;
pub mod mapping;
pub mod model;
pub mod tracking;

pub use error::{Error, Result};
