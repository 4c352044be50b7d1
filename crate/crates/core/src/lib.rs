//! Scene-content characterization of local feature detectors.
//!
//! The crate builds transformed image datasets from a set of labelled
//! scenes, measures detector repeatability at every transformation step,
//! ranks scenes by repeatability and summarizes each ranking by the share
//! of outdoor, human-made and simple scenes it contains.
//!
//! Stages communicate through files so that every stage can be rerun or
//! resumed independently:
//!
//! ```text
//! scenes ─ xform ─▶ manifest + images ─ detect ─▶ keypoints
//!        ─ repeat ─▶ records ─ rank ─▶ trait indices ─ report ─▶ tables, SVG
//! ```

pub mod detect;
pub mod error;
pub mod filter;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod rank;
pub mod records;
pub mod repeat;
pub mod report;
pub mod synth;
pub mod types;
pub mod xform;

pub use error::{Error, ErrorClass, Result};
pub use manifest::{DatasetManifest, Violation};
pub use types::{
    Ellipse, Homography, Keypoint, RepeatabilityRecord, SceneId, SceneLabels, StepIndex,
    TransformKind, TransformSpec,
};
