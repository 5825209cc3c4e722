//! Depth-ordered multi-object tracking.
//!
//! A tracking-by-detection engine built from four pieces:
//!
//! * [`sode`] orders detections by depth using only the bottom edge of each
//!   box and a ground-plane pinhole camera model.
//! * [`kalman`] runs a pseudo-3D Kalman filter over
//!   `[c_x, c_y, z, s, r, c_x', c_y', z', s']` with an acceleration control
//!   input estimated from recent motion.
//! * [`assoc`] builds a fused cost matrix from first-order (appearance,
//!   depth-gated IoU) and second-order (sorted neighbour-distance) terms,
//!   which [`assign`] solves exactly with the Hungarian algorithm.
//! * [`tracker`] drives the per-frame loop, track lifecycle and merged
//!   detection handling.
//!
//! [`metrics`], [`synth`] and [`io`] provide evaluation, synthetic scenes
//! with exact projection oracles, and MOT Challenge file formats.

pub mod assign;
pub mod assoc;
pub mod error;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod model;
pub mod sode;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use model::{BBox, CameraModel, Detection, GtRecord, SequenceInfo, TrackRecord};
pub use tracker::{AssociationMode, MotionModel, Tracker, TrackerConfig};
